#pragma once

// f-divergence regularizers: the generator f, its convex conjugate f*, the
// dual penalty H*(v) = lambda f*(v / lambda) and the compatibility
// M(v) = f*'(v / lambda) that turns dual potentials into a transport plan.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "scones/error.hpp"
#include "scones/linalg.hpp"

namespace scones {

enum class FDivKind { kKL, kReverseKL, kPearsonChi2, kSquaredHellinger, kJensenShannon, kGAN };

inline std::string_view to_string(FDivKind kind) {
  switch (kind) {
    case FDivKind::kKL: return "kl";
    case FDivKind::kReverseKL: return "reverse-kl";
    case FDivKind::kPearsonChi2: return "chi2";
    case FDivKind::kSquaredHellinger: return "squared-hellinger";
    case FDivKind::kJensenShannon: return "jensen-shannon";
    case FDivKind::kGAN: return "gan";
  }
  return "?";
}

inline FDivKind fdiv_kind_from_string(std::string_view s) {
  for (FDivKind k : {FDivKind::kKL, FDivKind::kReverseKL, FDivKind::kPearsonChi2,
                     FDivKind::kSquaredHellinger, FDivKind::kJensenShannon, FDivKind::kGAN})
    if (s == to_string(k)) return k;
  throw InvalidArgument("unknown f-divergence kind '" + std::string(s) + "'");
}

/// Strong-convexity constant of f where one holds globally.
inline std::optional<double> strong_convexity(FDivKind kind) {
  if (kind == FDivKind::kPearsonChi2) return 2.0;
  return std::nullopt;
}

/// Open upper bound of Dom(f*); every registered kind is unbounded below.
inline double conjugate_domain_sup(FDivKind kind) {
  switch (kind) {
    case FDivKind::kKL:
    case FDivKind::kPearsonChi2: return std::numeric_limits<double>::infinity();
    case FDivKind::kReverseKL:
    case FDivKind::kGAN: return 0.0;
    case FDivKind::kSquaredHellinger: return 1.0;
    case FDivKind::kJensenShannon: return std::numbers::ln2;
  }
  return 0.0;
}

inline bool in_conjugate_domain(FDivKind kind, double v) {
  return std::isfinite(v) && v < conjugate_domain_sup(kind);
}

/// Dom(f): chi2 accepts every real, reverse KL needs t > 0, the rest t >= 0.
inline bool in_primal_domain(FDivKind kind, double t) {
  if (!std::isfinite(t)) return false;
  if (kind == FDivKind::kPearsonChi2) return true;
  if (kind == FDivKind::kReverseKL) return t > 0.0;
  return t >= 0.0;
}

namespace detail {

inline double xlogx(double t) { return t == 0.0 ? 0.0 : t * std::log(t); }

}  // namespace detail

inline double primal_f(FDivKind kind, double t) {
  if (!in_primal_domain(kind, t))
    throw DomainError("f(" + std::to_string(t) + ") outside Dom(f) for " + std::string(to_string(kind)));
  switch (kind) {
    case FDivKind::kKL: return detail::xlogx(t);
    case FDivKind::kReverseKL: return -std::log(t);
    case FDivKind::kPearsonChi2: return (t - 1.0) * (t - 1.0);
    case FDivKind::kSquaredHellinger: {
      const double r = std::sqrt(t) - 1.0;
      return r * r;
    }
    case FDivKind::kJensenShannon:
      return -(t + 1.0) * std::log((1.0 + t) / 2.0) + detail::xlogx(t);
    case FDivKind::kGAN: return detail::xlogx(t) - (t + 1.0) * std::log(t + 1.0);
  }
  return 0.0;
}

/// f'(t) on the interior of Dom(f).
inline double primal_f_prime(FDivKind kind, double t) {
  switch (kind) {
    case FDivKind::kKL: return std::log(t) + 1.0;
    case FDivKind::kReverseKL: return -1.0 / t;
    case FDivKind::kPearsonChi2: return 2.0 * (t - 1.0);
    case FDivKind::kSquaredHellinger: return 1.0 - 1.0 / std::sqrt(t);
    case FDivKind::kJensenShannon: return std::log(2.0 * t / (1.0 + t));
    case FDivKind::kGAN: return std::log(t / (t + 1.0));
  }
  return 0.0;
}

struct ConjugateTriple {
  std::optional<double> f;  // absent when v is outside Dom(f)
  double f_star;
  double f_star_prime;
};

inline ConjugateTriple conjugate_triple(FDivKind kind, double v) {
  if (!in_conjugate_domain(kind, v))
    throw DomainError("f*(" + std::to_string(v) + ") outside Dom(f*) for " + std::string(to_string(kind)));
  ConjugateTriple out{};
  if (in_primal_domain(kind, v)) out.f = primal_f(kind, v);
  switch (kind) {
    case FDivKind::kKL:
      out.f_star = std::exp(v - 1.0);
      out.f_star_prime = out.f_star;
      break;
    case FDivKind::kReverseKL:
      out.f_star = std::log(-1.0 / v) - 1.0;
      out.f_star_prime = -1.0 / v;
      break;
    case FDivKind::kPearsonChi2:
      out.f_star = v * v / 4.0 + v;
      out.f_star_prime = v / 2.0 + 1.0;
      break;
    case FDivKind::kSquaredHellinger:
      out.f_star = v / (1.0 - v);
      out.f_star_prime = 1.0 / ((1.0 - v) * (1.0 - v));
      break;
    case FDivKind::kJensenShannon: {
      const double ev = std::exp(v);
      out.f_star = -std::log(2.0 - ev);
      out.f_star_prime = ev / (2.0 - ev);
      break;
    }
    case FDivKind::kGAN: {
      const double ev = std::exp(v);
      out.f_star = -std::log1p(-ev);
      out.f_star_prime = 1.0 / std::expm1(-v);
      break;
    }
  }
  return out;
}

struct RegParams {
  double lambda = 1.0;
  // Smooths the chi2 hinge max(u/2 + 1, 0) into softplus with sharpness alpha.
  std::optional<double> chi2_softplus_alpha;
};

struct Compatibility {
  FDivKind kind = FDivKind::kKL;
  RegParams params;

  void validate() const {
    if (!(params.lambda > 0.0) || !std::isfinite(params.lambda))
      throw InvalidArgument("regularization lambda must be positive");
    if (params.chi2_softplus_alpha && !(*params.chi2_softplus_alpha > 0.0))
      throw InvalidArgument("chi2 softplus alpha must be positive");
  }
  double lambda() const noexcept { return params.lambda; }
};

struct CompatValue {
  double m = 0.0;          // M(v) >= 0
  double dlogm_dv = 0.0;   // d/dv log M(v); 0 when saturated
  bool saturated = false;  // M == 0: the log-gradient is -infinity
};

namespace detail {

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Li2(w) for w in [0, 1/2] by its power series.
inline double dilog_small(double w) {
  double term = w, sum = 0.0;
  for (int k = 1; k < 200 && term > 1e-18 * k * k; ++k, term *= w) sum += term / (double(k) * k);
  return sum;
}

/// Integral of softplus from -infinity to x, i.e. -Li2(-e^x).
inline double softplus_integral(double x) {
  if (x > 0) {
    return std::numbers::pi * std::numbers::pi / 6.0 + 0.5 * x * x - softplus_integral(-x);
  }
  // Landen: -Li2(-e^x) = Li2(e^x / (1 + e^x)) + log(1 + e^x)^2 / 2.
  const double l = std::log1p(std::exp(x));
  return dilog_small(sigmoid(x)) + 0.5 * l * l;
}

inline void require_domain(FDivKind kind, double u, const char* what) {
  if (!in_conjugate_domain(kind, u))
    throw DomainError(std::string(what) + ": v/lambda = " + std::to_string(u) + " outside Dom(f*) for " +
                      std::string(to_string(kind)));
}

}  // namespace detail

/// H*(v) = lambda f*(v / lambda). For chi2 the conjugate is taken over t >= 0,
/// i.e. lambda (max(u/2 + 1, 0)^2 - 1), so that H*' is the hinge compatibility;
/// it agrees with the unconstrained table form for v >= -2 lambda. With a
/// softplus alpha the penalty is the exact antiderivative of the softplus M.
inline double dual_penalty(FDivKind kind, const RegParams& params, double v) {
  const double lambda = params.lambda;
  const double u = v / lambda;
  detail::require_domain(kind, u, "dual_penalty");
  if (kind == FDivKind::kPearsonChi2) {
    const double s = u / 2.0 + 1.0;
    if (params.chi2_softplus_alpha) {
      const double a = *params.chi2_softplus_alpha;
      return lambda * (2.0 / (a * a) * detail::softplus_integral(a * s) - 1.0);
    }
    const double h = std::max(s, 0.0);
    return lambda * (h * h - 1.0);
  }
  return lambda * conjugate_triple(kind, u).f_star;
}

inline double dual_penalty(const Compatibility& c, double v) { return dual_penalty(c.kind, c.params, v); }

inline CompatValue compatibility(FDivKind kind, const RegParams& params, double v) {
  const double lambda = params.lambda;
  const double u = v / lambda;
  detail::require_domain(kind, u, "compatibility");
  CompatValue out;
  switch (kind) {
    case FDivKind::kKL:
      out.m = std::exp(u - 1.0);
      out.dlogm_dv = 1.0 / lambda;
      break;
    case FDivKind::kPearsonChi2: {
      const double s = u / 2.0 + 1.0;
      if (params.chi2_softplus_alpha) {
        const double a = *params.chi2_softplus_alpha;
        out.m = detail::softplus(a * s) / a;
        const double dm = detail::sigmoid(a * s) / (2.0 * lambda);
        if (out.m > 0.0) {
          out.dlogm_dv = dm / out.m;
        } else {
          out.saturated = true;
        }
      } else if (s > 0.0) {
        out.m = s;
        out.dlogm_dv = 1.0 / (2.0 * lambda * s);
      } else {
        out.m = 0.0;
        out.saturated = true;
      }
      break;
    }
    case FDivKind::kReverseKL:
      out.m = -1.0 / u;
      out.dlogm_dv = -1.0 / v;
      break;
    case FDivKind::kSquaredHellinger:
      out.m = 1.0 / ((1.0 - u) * (1.0 - u));
      out.dlogm_dv = 2.0 / (lambda * (1.0 - u));
      break;
    case FDivKind::kJensenShannon: {
      const double eu = std::exp(u);
      out.m = eu / (2.0 - eu);
      out.dlogm_dv = 2.0 / ((2.0 - eu) * lambda);
      break;
    }
    case FDivKind::kGAN: {
      out.m = 1.0 / std::expm1(-u);
      out.dlogm_dv = -1.0 / (std::expm1(u) * lambda);
      break;
    }
  }
  return out;
}

inline CompatValue compatibility(const Compatibility& c, double v) { return compatibility(c.kind, c.params, v); }

/// D_f(plan || product) over matching cells. Cells with zero product mass
/// must carry zero plan mass.
inline double h_regularizer(FDivKind kind, const Matrix& plan, const Matrix& product) {
  if (plan.rows() != product.rows() || plan.cols() != product.cols())
    throw InvalidArgument("h_regularizer: shape mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
      const double q = product(i, j), p = plan(i, j);
      if (q <= 0.0) {
        if (p != 0.0) throw DomainError("h_regularizer: plan not absolutely continuous w.r.t. product");
        continue;
      }
      total += q * primal_f(kind, p / q);
    }
  }
  return total;
}

}  // namespace scones
