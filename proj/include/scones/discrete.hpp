#pragma once

// Exact solvers on finite instances: log-domain Sinkhorn for KL, full-batch
// dual ascent for any registered f-divergence, plus the checks built on them
// (strong duality, stability of approximate duals, softmin fixed point,
// log-concavity of the entropic compatibility).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "scones/error.hpp"
#include "scones/fdiv.hpp"
#include "scones/linalg.hpp"
#include "scones/measure.hpp"
#include "scones/neural_dual.hpp"

namespace scones {

using TransportPlan = Matrix;

struct DualVectors {
  Vector phi;
  Vector psi;
};

struct SinkhornResult {
  TransportPlan plan;
  DualVectors duals;  // normalized so that plan = (1/e) exp((phi + psi - c) / lambda) sigma tau
  std::size_t iterations = 0;
  double marginal_residual = 0.0;
};

inline double marginal_residual(const TransportPlan& plan, const Vector& sigma, const Vector& tau) {
  return std::max((plan.rowwise().sum() - sigma).lpNorm<1>(), (plan.colwise().sum().transpose() - tau).lpNorm<1>());
}

namespace detail {

inline void check_instance(const Matrix& c, const Vector& sigma, const Vector& tau) {
  if (c.rows() != sigma.size() || c.cols() != tau.size()) throw InvalidArgument("cost / marginal shape mismatch");
  if (!c.allFinite()) throw InvalidArgument("cost matrix has non-finite entries");
}

// out_i = -lambda log sum_j w_j exp((g_j - c_ij) / lambda), rows of c.
inline Vector soft_c_transform(const Matrix& c, const Vector& g, const Vector& log_w, double lambda) {
  Vector out(c.rows());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    const Eigen::ArrayXd e = log_w.array() + (g.array() - c.row(i).transpose().array()) / lambda;
    const double mx = e.maxCoeff();
    out(i) = -lambda * (mx + std::log((e - mx).exp().sum()));
  }
  return out;
}

}  // namespace detail

/// Log-domain Sinkhorn on K_ij = exp(-c_ij / lambda) sigma_i tau_j. Stops when
/// the larger of the two marginal l1 residuals drops below tol.
inline SinkhornResult sinkhorn_kl(const Matrix& c, const Vector& sigma, const Vector& tau, double lambda,
                                  double tol = 1e-10, std::size_t max_iter = 100'000) {
  detail::check_instance(c, sigma, tau);
  if (!(lambda > 0.0)) throw InvalidArgument("sinkhorn_kl: lambda must be positive");
  if ((sigma.array() <= 0.0).any() || (tau.array() <= 0.0).any())
    throw InvalidArgument("sinkhorn_kl: marginals must be strictly positive");
  const Vector log_s = sigma.array().log(), log_t = tau.array().log();
  const Matrix ct = c.transpose();
  Vector f = Vector::Zero(c.rows()), g = Vector::Zero(c.cols());
  auto plan_of = [&] {
    Matrix p = violation_matrix(f, g, c) / lambda;
    p = p.array().exp();
    return Matrix(sigma.asDiagonal() * p * tau.asDiagonal());
  };
  SinkhornResult out;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    g = detail::soft_c_transform(ct, f, log_s, lambda);
    f = detail::soft_c_transform(c, g, log_t, lambda);
    if (it % 10 == 0 || it == max_iter) {
      out.plan = plan_of();
      out.marginal_residual = marginal_residual(out.plan, sigma, tau);
      if (!std::isfinite(out.marginal_residual)) throw NumericalError("sinkhorn_kl: non-finite iterate");
      if (out.marginal_residual < tol) {
        out.iterations = it;
        // The factor 1/e is absorbed as lambda/2 per side.
        out.duals = {f.array() + lambda / 2.0, g.array() + lambda / 2.0};
        return out;
      }
    }
  }
  throw NumericalError("sinkhorn_kl: no convergence in " + std::to_string(max_iter) +
                       " iterations (residual " + std::to_string(out.marginal_residual) + ")");
}

/// J(phi, psi) for finite dual vectors.
inline double dual_objective(const Matrix& c, const Vector& sigma, const Vector& tau, const Compatibility& compat,
                             const DualVectors& d) {
  return dual_objective(compat, d.phi, d.psi, c, sigma, tau);
}

struct DualAscentResult {
  DualVectors duals;
  double objective = 0.0;
  std::size_t iterations = 0;
  double grad_inf_norm = 0.0;
  bool converged = false;
};

namespace detail {

inline bool violations_in_domain(FDivKind kind, const Matrix& v, double lambda) {
  const double sup = conjugate_domain_sup(kind);
  if (!std::isfinite(sup)) return v.allFinite();
  return v.allFinite() && (v.array() / lambda < sup).all();
}

}  // namespace detail

/// Full-batch gradient ascent on the finite dual. Steps use the gradient
/// rescaled by the marginal weights (phi_i += lr (1 - sum_j tau_j M_ij));
/// a step that leaves Dom(f*) or lowers J is halved.
inline DualAscentResult dual_ascent_generic(const Matrix& c, const Vector& sigma, const Vector& tau,
                                            const Compatibility& compat, double lr = 0.0, double tol = 1e-12,
                                            std::size_t max_iter = 1'000'000) {
  detail::check_instance(c, sigma, tau);
  compat.validate();
  const double lambda = compat.lambda();
  if (lr <= 0.0) lr = compat.kind == FDivKind::kKL ? 0.5 * lambda : lambda;

  DualAscentResult out;
  out.duals = {Vector::Zero(c.rows()), Vector::Zero(c.cols())};
  const double sup = conjugate_domain_sup(compat.kind);
  if (std::isfinite(sup)) {
    // Feasible start: max V = lambda (sup - 1).
    const double start = 0.5 * (lambda * (sup - 1.0) + c.minCoeff());
    out.duals.phi.setConstant(start);
    out.duals.psi.setConstant(start);
  }
  auto evaluate = [&](const DualVectors& d, double& j, Vector& grad_phi, Vector& grad_psi) {
    const Matrix v = violation_matrix(d.phi, d.psi, c);
    if (!detail::violations_in_domain(compat.kind, v, lambda)) return false;
    const PenaltyField pf = penalty_field(compat, v);
    j = sigma.dot(d.phi) + tau.dot(d.psi) - sigma.dot(pf.penalty * tau);
    grad_phi = sigma.array() * (1.0 - (pf.m * tau).array());
    grad_psi = tau.array() * (1.0 - (pf.m.transpose() * sigma).array());
    return std::isfinite(j);
  };
  double j = 0.0;
  Vector gphi, gpsi;
  if (!evaluate(out.duals, j, gphi, gpsi)) throw DomainError("dual_ascent_generic: infeasible initialization");
  double step = lr;
  for (std::size_t it = 0; it < max_iter; ++it) {
    out.grad_inf_norm = std::max(gphi.lpNorm<Eigen::Infinity>(), gpsi.lpNorm<Eigen::Infinity>());
    if (out.grad_inf_norm < tol) {
      out.converged = true;
      out.iterations = it;
      break;
    }
    DualVectors trial;
    double j_trial = 0.0;
    Vector gphi_t, gpsi_t;
    for (;;) {
      trial.phi = out.duals.phi + step * gphi.cwiseQuotient(sigma);
      trial.psi = out.duals.psi + step * gpsi.cwiseQuotient(tau);
      if (evaluate(trial, j_trial, gphi_t, gpsi_t) && j_trial >= j - 1e-14 * std::max(1.0, std::abs(j))) break;
      step *= 0.5;
      if (step < 1e-20 * lr) throw DomainError("dual_ascent_generic: step collapsed (persistent domain exit)");
    }
    out.duals = std::move(trial);
    j = j_trial;
    gphi = std::move(gphi_t);
    gpsi = std::move(gpsi_t);
    step = std::min(lr, 1.25 * step);
    out.iterations = it + 1;
  }
  out.objective = j;
  return out;
}

/// Pseudo-plan M(phi_i + psi_j - c_ij) sigma_i tau_j; no normalization.
inline TransportPlan plan_from_duals(const Matrix& c, const Vector& sigma, const Vector& tau,
                                     const Compatibility& compat, const DualVectors& d) {
  detail::check_instance(c, sigma, tau);
  const Matrix v = violation_matrix(d.phi, d.psi, c);
  if (!detail::violations_in_domain(compat.kind, v, compat.lambda()))
    throw DomainError("plan_from_duals: violation outside Dom(f*)");
  return sigma.asDiagonal() * penalty_field(compat, v).m * tau.asDiagonal();
}

/// K(plan) = sum plan * c + lambda D_f(plan || sigma tau^T).
inline double primal_objective(const Matrix& c, const Vector& sigma, const Vector& tau, FDivKind kind, double lambda,
                               const TransportPlan& plan) {
  detail::check_instance(c, sigma, tau);
  const Matrix product = sigma * tau.transpose();
  return plan.cwiseProduct(c).sum() + lambda * h_regularizer(kind, plan, product);
}

/// -lambda log sum_i sigma_i exp((phi_i - c_i) / lambda) for one target point.
inline double softmin_potential(const Vector& cost_column, const Vector& phi, const Vector& sigma, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("softmin_potential: lambda must be positive");
  const Vector e = sigma.array().log() + (phi - cost_column).array() / lambda;
  return -lambda * log_sum_exp(e);
}

struct LogConcavityResult {
  double max_eigenvalue = 0.0;
  Matrix hessian;
  bool truncation_flag = false;  // h and h/2 disagree: step too large
};

/// Finite-difference Hessian in y of log h(y) = (phi(x) + psi(y) - |x - y|^2) / lambda
/// with psi the softmin transform of (atoms, phi, sigma). phi(x) is a
/// constant in y and does not enter the Hessian.
inline LogConcavityResult logconcavity_check(const Matrix& atoms, const Vector& phi, const Vector& sigma,
                                             double lambda, const Vector& x, const Vector& y, double h = 1e-3) {
  if (atoms.rows() != phi.size() || atoms.rows() != sigma.size() || atoms.cols() != y.size() || x.size() != y.size())
    throw InvalidArgument("logconcavity_check: shape mismatch");
  auto log_h = [&](const Vector& yy) {
    const Vector col = (atoms.rowwise() - yy.transpose()).rowwise().squaredNorm();
    return (softmin_potential(col, phi, sigma, lambda) - (x - yy).squaredNorm()) / lambda;
  };
  auto hessian = [&](double step) {
    const Eigen::Index d = y.size();
    Matrix hs(d, d);
    for (Eigen::Index k = 0; k < d; ++k) {
      for (Eigen::Index l = k; l < d; ++l) {
        Vector ek = Vector::Zero(d), el = Vector::Zero(d);
        ek(k) = step;
        el(l) = step;
        const double v = (log_h(y + ek + el) - log_h(y + ek - el) - log_h(y - ek + el) + log_h(y - ek - el)) /
                         (4.0 * step * step);
        hs(k, l) = hs(l, k) = v;
      }
    }
    return hs;
  };
  LogConcavityResult out;
  out.hessian = hessian(h);
  const Matrix half = hessian(h / 2.0);
  const double scale = std::max(1.0, out.hessian.cwiseAbs().maxCoeff());
  out.truncation_flag = (out.hessian - half).cwiseAbs().maxCoeff() > 1e-4 * scale;
  out.max_eigenvalue = sym_eig(out.hessian).values(0);
  return out;
}

struct StabilityResult {
  double lhs = 0.0;  // |pi_hat - pi*|_1
  double rhs = 0.0;  // sqrt(2 eps / s)
  double eps = 0.0;  // J* - J(approx), clamped at 0
  double strong_convexity = 0.0;
  bool holds = false;
};

/// Checks |pi_hat - pi*|_1 <= sqrt(2 eps / s) with s = lambda for KL and
/// lambda * alpha for kinds with a strong-convexity constant.
inline StabilityResult stability_check(const Matrix& c, const Vector& sigma, const Vector& tau,
                                       const Compatibility& compat, const DualVectors& approx, double oracle_objective,
                                       const TransportPlan& oracle_plan) {
  StabilityResult out;
  if (compat.kind == FDivKind::kKL) {
    out.strong_convexity = compat.lambda();
  } else if (auto alpha = strong_convexity(compat.kind)) {
    out.strong_convexity = compat.lambda() * *alpha;
  } else {
    throw InvalidArgument("stability_check: no strong-convexity constant for " + std::string(to_string(compat.kind)));
  }
  const TransportPlan plan_hat = plan_from_duals(c, sigma, tau, compat, approx);
  out.lhs = (plan_hat - oracle_plan).lpNorm<1>();
  out.eps = std::max(0.0, oracle_objective - dual_objective(c, sigma, tau, compat, approx));
  out.rhs = std::sqrt(2.0 * out.eps / out.strong_convexity);
  out.holds = out.lhs <= out.rhs + 1e-9;
  return out;
}

/// Finite instance: two weighted point clouds and a cost tag.
struct DiscreteInstance {
  EmpiricalMeasure source;
  EmpiricalMeasure target;
  CostKind cost = CostKind::kSquaredL2;

  Matrix cost_matrix() const { return scones::cost_matrix(cost, source.atoms, target.atoms); }
};

/// Atoms uniform on [0, 1]^d, weights uniform(0.5, 1.5) then normalized.
inline DiscreteInstance random_discrete_instance(Eigen::Index n, Eigen::Index m, Eigen::Index d, std::uint64_t seed,
                                                 CostKind cost = CostKind::kSquaredL2) {
  Rng rng(seed);
  auto measure = [&](Eigen::Index k) {
    EmpiricalMeasure mu{Matrix(k, d), Vector(k)};
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) mu.atoms(i, j) = rng.uniform();
      mu.weights(i) = rng.uniform(0.5, 1.5);
    }
    mu.weights /= mu.weights.sum();
    return mu;
  };
  DiscreteInstance inst;
  inst.source = measure(n);
  inst.target = measure(m);
  inst.cost = cost;
  return inst;
}

// Text form:
//   scones-instance 1
//   cost <tag>
//   source <n> <d>      followed by n lines "w,a_1,...,a_d"
//   target <m> <d>      followed by m lines
inline void write_instance(std::ostream& os, const DiscreteInstance& inst) {
  os << "scones-instance 1\ncost " << to_string(inst.cost) << "\n" << std::setprecision(17);
  auto block = [&](const char* name, const EmpiricalMeasure& mu) {
    os << name << ' ' << mu.size() << ' ' << mu.dim() << '\n';
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      os << mu.weights(i);
      for (Eigen::Index j = 0; j < mu.dim(); ++j) os << ',' << mu.atoms(i, j);
      os << '\n';
    }
  };
  block("source", inst.source);
  block("target", inst.target);
}

inline DiscreteInstance read_instance(std::istream& is) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "scones-instance") throw IoError("instance: bad header");
  if (version != 1) throw IoError("instance: unsupported version " + std::to_string(version));
  DiscreteInstance inst;
  std::string cost_tag;
  if (!(is >> tag >> cost_tag) || tag != "cost") throw IoError("instance: missing cost line");
  inst.cost = cost_kind_from_string(cost_tag);
  auto block = [&](const char* name) {
    Eigen::Index n = 0, d = 0;
    if (!(is >> tag >> n >> d) || tag != name || n <= 0 || d <= 0)
      throw IoError(std::string("instance: bad ") + name + " header");
    EmpiricalMeasure mu{Matrix(n, d), Vector(n)};
    std::string line;
    std::getline(is, line);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::getline(is, line)) throw IoError("instance: truncated data");
      std::stringstream ss(line);
      std::string cell;
      for (Eigen::Index j = -1; j < d; ++j) {
        if (!std::getline(ss, cell, ',')) throw IoError("instance: short row");
        double value = 0.0;
        try {
          value = std::stod(cell);
        } catch (const std::exception&) {
          throw IoError("instance: bad number '" + cell + "'");
        }
        (j < 0 ? mu.weights(i) : mu.atoms(i, j)) = value;
      }
    }
    mu.weights /= mu.weights.sum();
    mu.validate();
    return mu;
  };
  inst.source = block("source");
  inst.target = block("target");
  if (inst.source.dim() != inst.target.dim() && inst.cost != CostKind::kZero)
    throw IoError("instance: source and target dimensions differ");
  return inst;
}

}  // namespace scones
