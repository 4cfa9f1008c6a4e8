#pragma once

// Neural dual potentials (phi, psi) and stochastic dual ascent on
//   J(phi, psi) = E_sigma[phi] + E_tau[psi] - E_{sigma x tau}[H*(V)],
// with V(x, y) = phi(x) + psi(y) - c(x, y).

#include <chrono>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "scones/error.hpp"
#include "scones/fdiv.hpp"
#include "scones/linalg.hpp"
#include "scones/measure.hpp"
#include "scones/mlp.hpp"

namespace scones {

struct DualPair {
  MlpSpec phi_spec;
  MlpParams phi;
  MlpSpec psi_spec;
  MlpParams psi;
  Compatibility compat;
  CostKind cost = CostKind::kSquaredL2;

  void validate() const {
    phi_spec.validate();
    psi_spec.validate();
    check_shapes(phi_spec, phi);
    check_shapes(psi_spec, psi);
    if (phi_spec.output_width() != 1 || psi_spec.output_width() != 1)
      throw InvalidArgument("DualPair: potentials must be scalar");
    compat.validate();
  }

  Vector phi_values(const Matrix& xs) const { return mlp_forward(phi_spec, phi, xs).col(0); }
  Vector psi_values(const Matrix& ys) const { return mlp_forward(psi_spec, psi, ys).col(0); }
};

/// Potentials over the given input dimensions with shared hidden widths.
inline DualPair make_dual_pair(int source_dim, int target_dim, const std::vector<int>& hidden,
                               const Compatibility& compat, CostKind cost, std::uint64_t seed,
                               Activation output = Activation::kLinear) {
  DualPair p;
  p.phi_spec.widths.push_back(source_dim);
  p.psi_spec.widths.push_back(target_dim);
  for (int w : hidden) {
    p.phi_spec.widths.push_back(w);
    p.psi_spec.widths.push_back(w);
  }
  p.phi_spec.widths.push_back(1);
  p.psi_spec.widths.push_back(1);
  p.phi_spec.output = p.psi_spec.output = output;
  Rng rng(seed);
  p.phi = init_params(p.phi_spec, rng.substream("phi").engine()());
  p.psi = init_params(p.psi_spec, rng.substream("psi").engine()());
  p.compat = compat;
  p.cost = cost;
  p.validate();
  return p;
}

inline double violation(const DualPair& pair, const Vector& x, const Vector& y) {
  return mlp_forward(pair.phi_spec, pair.phi, x)(0) + mlp_forward(pair.psi_spec, pair.psi, y)(0) -
         cost(pair.cost, x, y);
}

/// V_ij = f_i + g_j - c_ij.
inline Matrix violation_matrix(const Vector& f, const Vector& g, const Matrix& c) {
  Matrix v = -c;
  v.colwise() += f;
  v.rowwise() += g.transpose();
  return v;
}

/// Penalty H*(V) and compatibility M(V), entrywise.
struct PenaltyField {
  Matrix penalty;
  Matrix m;
  Eigen::Index saturated = 0;
};

inline PenaltyField penalty_field(const Compatibility& compat, const Matrix& v) {
  const double lambda = compat.lambda();
  PenaltyField out;
  if (compat.kind == FDivKind::kKL) {
    out.m = ((v.array() / lambda) - 1.0).exp().matrix();
    out.penalty = lambda * out.m;
    return out;
  }
  if (compat.kind == FDivKind::kPearsonChi2 && !compat.params.chi2_softplus_alpha) {
    out.m = ((v.array() / (2.0 * lambda)) + 1.0).cwiseMax(0.0).matrix();
    out.penalty = (lambda * (out.m.array().square() - 1.0)).matrix();
    out.saturated = (out.m.array() == 0.0).count();
    return out;
  }
  out.m.resize(v.rows(), v.cols());
  out.penalty.resize(v.rows(), v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const CompatValue cv = compatibility(compat, v(i, j));
      out.m(i, j) = cv.m;
      out.penalty(i, j) = dual_penalty(compat, v(i, j));
      out.saturated += cv.saturated;
    }
  }
  return out;
}

/// Dual objective with explicit marginal weights a (n) and b (m).
inline double dual_objective(const Compatibility& compat, const Vector& f, const Vector& g, const Matrix& c,
                             const Vector& a, const Vector& b) {
  const PenaltyField pf = penalty_field(compat, violation_matrix(f, g, c));
  return a.dot(f) + b.dot(g) - a.dot(pf.penalty * b);
}

/// Minibatch estimate: mean phi + mean psi - mean over all m^2 pairs of H*(V).
inline double dual_objective_batch(const DualPair& pair, const Matrix& xs, const Matrix& ys) {
  if (xs.rows() == 0 || ys.rows() == 0) throw InvalidArgument("dual_objective_batch: empty minibatch");
  const Vector a = Vector::Constant(xs.rows(), 1.0 / double(xs.rows()));
  const Vector b = Vector::Constant(ys.rows(), 1.0 / double(ys.rows()));
  return dual_objective(pair.compat, pair.phi_values(xs), pair.psi_values(ys), cost_matrix(pair.cost, xs, ys), a, b);
}

inline double dual_objective_full(const DualPair& pair, const EmpiricalMeasure& source, const EmpiricalMeasure& target) {
  return dual_objective(pair.compat, pair.phi_values(source.atoms), pair.psi_values(target.atoms),
                        cost_matrix(pair.cost, source.atoms, target.atoms), source.weights, target.weights);
}

struct DualTrainConfig {
  std::size_t iterations = 5000;
  std::size_t batch_size = 1000;  // 0: full batch with the measures' weights
  OptimizerConfig optimizer{OptimizerKind::kAdam, 1e-6, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 0;
  // Start at the best constant shift of V (first batch) when outputs are linear.
  bool center_init = true;
  // Full-data evaluation is replaced by a subsample above this many pairs.
  std::size_t eval_pair_cap = 4'000'000;
};

struct TrainReport {
  std::vector<double> objective;  // per-iteration J estimate (before the update)
  double seconds = 0.0;
  double final_objective = std::nan("");
  std::size_t saturated_pairs = 0;
};

namespace detail {

struct BatchSampler {
  const EmpiricalMeasure* measure;
  bool uniform;
  std::discrete_distribution<std::size_t> dist;

  explicit BatchSampler(const EmpiricalMeasure& m) : measure(&m) {
    const double w0 = m.weights(0);
    uniform = (m.weights.array() == w0).all();
    if (!uniform) dist = std::discrete_distribution<std::size_t>(m.weights.data(), m.weights.data() + m.weights.size());
  }

  Matrix draw(std::size_t count, Rng& rng) {
    Matrix out(count, measure->dim());
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t idx = uniform ? rng.index(measure->size()) : dist(rng.engine());
      out.row(k) = measure->atoms.row(idx);
    }
    return out;
  }
};

/// Shift s with sum_ij a_i b_j M(V_ij + s) = 1: the maximizer of J along
/// constant offsets of the potentials.
inline double optimal_shift(const Compatibility& compat, const Matrix& v, const Vector& a, const Vector& b) {
  const double lambda = compat.lambda();
  if (compat.kind == FDivKind::kKL) {
    double mx = v.maxCoeff();
    double acc = a.dot(((v.array() - mx) / lambda).exp().matrix() * b);
    return lambda - mx - lambda * std::log(acc);
  }
  auto mass = [&](double s) { return a.dot(penalty_field(compat, (v.array() + s).matrix()).m * b); };
  // Bracket then bisect; mass(s) is non-decreasing in s.
  double lo = -v.maxCoeff() - 10.0 * lambda, hi = -v.minCoeff() + 10.0 * lambda;
  while (mass(hi) < 1.0) hi += 10.0 * lambda + std::abs(hi);
  while (mass(lo) > 1.0) lo -= 10.0 * lambda + std::abs(lo);
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) < 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Stochastic dual ascent over the network parameters. Each iteration draws m
/// source and m target points and ascends J through all m^2 cross pairs; the
/// per-pair penalty gradient is M(V) (grad phi + grad psi).
inline std::pair<DualPair, TrainReport> train_dual(DualPair pair, const EmpiricalMeasure& source,
                                                   const EmpiricalMeasure& target, const DualTrainConfig& cfg) {
  pair.validate();
  source.validate();
  target.validate();
  if (pair.compat.kind != FDivKind::kKL && pair.compat.kind != FDivKind::kPearsonChi2)
    throw InvalidArgument("train_dual: only kl and chi2 regularizers are supported");
  if (source.dim() != pair.phi_spec.input_width() || target.dim() != pair.psi_spec.input_width())
    throw InvalidArgument("train_dual: data dimension does not match potentials");

  TrainReport report;
  if (cfg.iterations == 0) return {std::move(pair), std::move(report)};

  const auto t0 = std::chrono::steady_clock::now();
  const bool full = cfg.batch_size == 0;
  Rng rng = Rng(cfg.seed).substream("train_dual");
  detail::BatchSampler src_sampler(source), tgt_sampler(target);
  Optimizer opt_phi(cfg.optimizer, pair.phi), opt_psi(cfg.optimizer, pair.psi);

  Matrix xs, ys, c;
  Vector a, b;
  if (full) {
    xs = source.atoms;
    ys = target.atoms;
    a = source.weights;
    b = target.weights;
    c = cost_matrix(pair.cost, xs, ys);
  } else {
    a = Vector::Constant(cfg.batch_size, 1.0 / double(cfg.batch_size));
    b = a;
  }

  report.objective.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (!full) {
      xs = src_sampler.draw(cfg.batch_size, rng);
      ys = tgt_sampler.draw(cfg.batch_size, rng);
      c = cost_matrix(pair.cost, xs, ys);
    }
    ForwardCache fphi = mlp_forward_cached(pair.phi_spec, pair.phi, xs);
    ForwardCache fpsi = mlp_forward_cached(pair.psi_spec, pair.psi, ys);
    Vector f = fphi.output.col(0), g = fpsi.output.col(0);

    if (it == 0 && cfg.center_init && pair.phi_spec.output == Activation::kLinear &&
        pair.psi_spec.output == Activation::kLinear) {
      const double s = detail::optimal_shift(pair.compat, violation_matrix(f, g, c), a, b);
      pair.phi.layers.back().bias(0) += 0.5 * s;
      pair.psi.layers.back().bias(0) += 0.5 * s;
      fphi = mlp_forward_cached(pair.phi_spec, pair.phi, xs);
      fpsi = mlp_forward_cached(pair.psi_spec, pair.psi, ys);
      f = fphi.output.col(0);
      g = fpsi.output.col(0);
    }

    const PenaltyField pf = penalty_field(pair.compat, violation_matrix(f, g, c));
    const double j = a.dot(f) + b.dot(g) - a.dot(pf.penalty * b);
    report.saturated_pairs += static_cast<std::size_t>(pf.saturated);
    // dJ/df_i = a_i (1 - sum_j b_j M_ij), dJ/dg_j = b_j (1 - sum_i a_i M_ij).
    const Vector row_mass = pf.m * b;
    const Vector col_mass = pf.m.transpose() * a;
    const Matrix up_phi = -(a.array() * (1.0 - row_mass.array())).matrix();
    const Matrix up_psi = -(b.array() * (1.0 - col_mass.array())).matrix();
    const LayerGrads g_phi = mlp_backward(pair.phi_spec, pair.phi, fphi, up_phi, true, false).params;
    const LayerGrads g_psi = mlp_backward(pair.psi_spec, pair.psi, fpsi, up_psi, true, false).params;
    if (!std::isfinite(j) || !all_finite(g_phi) || !all_finite(g_psi))
      throw NumericalError("train_dual: non-finite objective or gradient at iteration " + std::to_string(it) +
                           " (J = " + std::to_string(j) + "); lower the learning rate or raise lambda");
    report.objective.push_back(j);
    opt_phi.step(pair.phi, g_phi);
    opt_psi.step(pair.psi, g_psi);
  }

  const auto pairs = static_cast<std::size_t>(source.size()) * static_cast<std::size_t>(target.size());
  if (pairs <= cfg.eval_pair_cap) {
    report.final_objective = dual_objective_full(pair, source, target);
  } else {
    Rng eval = Rng(cfg.seed).substream("train_dual/eval");
    const auto n = static_cast<std::size_t>(std::sqrt(double(cfg.eval_pair_cap)));
    report.final_objective = dual_objective_batch(pair, src_sampler.draw(n, eval), tgt_sampler.draw(n, eval));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(pair), std::move(report)};
}

}  // namespace scones
