#pragma once

// Langevin and annealed Langevin sampling of pi(y | x): the target score
// plus grad_y log M(V(x, y)) from a trained dual pair.

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "scones/error.hpp"
#include "scones/gaussian.hpp"
#include "scones/linalg.hpp"
#include "scones/neural_dual.hpp"

namespace scones {

/// Batched score: rows of ys in, rows of scores out. The level is absent
/// for noiseless oracles or noiseless queries.
using ScoreOracle = std::function<Matrix(const Matrix& ys, std::optional<double> level)>;

inline ScoreOracle make_gaussian_oracle(const GaussianMeasure& g) {
  auto score = std::make_shared<GaussianScore>(g);
  return [score](const Matrix& ys, std::optional<double>) { return (*score)(ys); };
}

/// Exact score of N(mean, cov + level^2 I); level absent means noiseless.
inline ScoreOracle make_noised_gaussian_oracle(const GaussianMeasure& g) {
  return [g](const Matrix& ys, std::optional<double> level) {
    GaussianMeasure h = g;
    if (level) h.cov += (*level) * (*level) * Matrix::Identity(g.dim(), g.dim());
    return GaussianScore(h)(ys);
  };
}

struct NoiseSchedule {
  std::vector<double> levels;

  std::size_t size() const { return levels.size(); }
  double last() const { return levels.back(); }
};

inline NoiseSchedule geometric_schedule(double tau_first, double tau_last, std::size_t n) {
  if (!(tau_last > 0.0) || !(tau_first > tau_last)) throw InvalidArgument("geometric_schedule: need tau_first > tau_last > 0");
  if (n < 2) throw InvalidArgument("geometric_schedule: need at least 2 levels");
  const double r = std::pow(tau_last / tau_first, 1.0 / double(n - 1));
  NoiseSchedule s;
  for (std::size_t i = 0; i < n; ++i) s.levels.push_back(tau_first * std::pow(r, double(i)));
  s.levels.back() = tau_last;
  return s;
}

enum class StepScaling { kConstant, kLevelSquared };

struct SamplerConfig {
  double epsilon = 5e-3;
  std::size_t steps = 1000;
  std::optional<NoiseSchedule> schedule;  // absent: no annealing
  // kLevelSquared runs level i at epsilon * (tau_i / tau_N)^2.
  StepScaling step_scaling = StepScaling::kConstant;
  bool denoise_final = false;
  std::uint64_t seed = 0;
  std::size_t block_size = 512;
  unsigned threads = 1;

  void validate() const {
    if (!(epsilon > 0.0)) throw InvalidArgument("sampler: epsilon must be positive");
    if (steps < 1) throw InvalidArgument("sampler: steps must be >= 1");
    if (block_size < 1) throw InvalidArgument("sampler: block_size must be >= 1");
    if (denoise_final && !schedule) throw InvalidArgument("sampler: denoise_final needs a noise schedule");
  }
};

struct CompatGradient {
  Matrix grad;  // rows: grad_y log M(V(x_k, y_k))
  Eigen::Index saturated = 0;
};

/// grad_y log M(V) = dlogM/dv (V) * (grad psi(y) - grad_y c(x, y)) for paired rows.
inline CompatGradient compat_log_grad(const DualPair& pair, const Matrix& xs, const Matrix& ys) {
  if (xs.rows() != ys.rows()) throw InvalidArgument("compat_log_grad: row count mismatch");
  auto [psi, grad_psi] = mlp_value_and_input_grad(pair.psi_spec, pair.psi, ys);
  CompatGradient out;
  out.grad = grad_psi - cost_grad_y(pair.cost, xs, ys);
  if (pair.compat.kind == FDivKind::kKL) {
    out.grad /= pair.compat.lambda();
    return out;
  }
  const Vector phi = pair.phi_values(xs);
  for (Eigen::Index k = 0; k < xs.rows(); ++k) {
    const double v = phi(k) + psi(k) - cost(pair.cost, xs.row(k).transpose(), ys.row(k).transpose());
    const CompatValue cv = compatibility(pair.compat, v);
    out.saturated += cv.saturated;
    out.grad.row(k) *= cv.dlogm_dv;
  }
  return out;
}

/// Score of pi(y | x): target score plus the compatibility log-gradient.
inline Vector conditional_score(const DualPair& pair, const ScoreOracle& score, const Vector& x, const Vector& y,
                                std::optional<double> level = std::nullopt) {
  const Matrix xs = x.transpose(), ys = y.transpose();
  const CompatGradient cg = compat_log_grad(pair, xs, ys);
  if (cg.saturated) throw DomainError("conditional_score: compatibility saturated (M = 0) at this (x, y)");
  return (score(ys, level) + cg.grad).row(0).transpose();
}

struct LangevinResult {
  Vector final;
  Matrix trajectory;  // (T x d) when requested
};

/// y <- y + (eps / 2) score(y) + sqrt(eps) z.
inline LangevinResult langevin_chain(const std::function<Vector(const Vector&)>& score_fn, const Vector& y0,
                                     double epsilon, std::size_t steps, Rng& rng, bool keep_trajectory = false) {
  if (!(epsilon > 0.0)) throw InvalidArgument("langevin_chain: epsilon must be positive");
  LangevinResult out;
  out.final = y0;
  if (keep_trajectory) out.trajectory.resize(Eigen::Index(steps), y0.size());
  const double noise = std::sqrt(epsilon);
  for (std::size_t t = 0; t < steps; ++t) {
    out.final += 0.5 * epsilon * score_fn(out.final) + noise * rng.normal_vector(y0.size());
    if (!out.final.allFinite()) throw NumericalError("langevin_chain: non-finite iterate at step " + std::to_string(t));
    if (keep_trajectory) out.trajectory.row(Eigen::Index(t)) = out.final.transpose();
  }
  return out;
}

inline Matrix denoise_final(const Matrix& ys, const ScoreOracle& score, double tau_last) {
  if (!(tau_last > 0.0)) throw InvalidArgument("denoise_final: tau must be positive");
  return ys + tau_last * tau_last * score(ys, tau_last);
}

namespace detail {

// Runs chains [begin, end) in lockstep. Chain k draws everything from
// Rng(seed).substream(k), so results do not depend on blocking or threads.
inline void run_chain_block(const DualPair* pair, const ScoreOracle& score, const Matrix& xs,
                            const SamplerConfig& cfg, Eigen::Index begin, Eigen::Index end, Eigen::Index dim,
                            Matrix& out) {
  const Eigen::Index n = end - begin;
  std::vector<Rng> rngs;
  rngs.reserve(std::size_t(n));
  const Rng master(cfg.seed);
  for (Eigen::Index k = begin; k < end; ++k) rngs.push_back(master.substream(std::uint64_t(k)));
  Matrix y(n, dim);
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index j = 0; j < dim; ++j) y(k, j) = rngs[std::size_t(k)].normal();
  const Matrix x = xs.middleRows(begin, n);

  std::vector<std::optional<double>> levels;
  if (cfg.schedule) {
    for (double l : cfg.schedule->levels) levels.emplace_back(l);
  } else {
    levels.emplace_back(std::nullopt);
  }
  Matrix z(n, dim);
  for (const auto& level : levels) {
    double eps = cfg.epsilon;
    if (level && cfg.step_scaling == StepScaling::kLevelSquared) {
      const double r = *level / cfg.schedule->last();
      eps *= r * r;
    }
    const double noise = std::sqrt(eps);
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      Matrix drift = score(y, level);
      if (pair) {
        const CompatGradient cg = compat_log_grad(*pair, x, y);
        if (cg.saturated) throw DomainError("sample_scones: compatibility saturated (M = 0) on a chain");
        drift += cg.grad;
      }
      for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index j = 0; j < dim; ++j) z(k, j) = rngs[std::size_t(k)].normal();
      y += 0.5 * eps * drift + noise * z;
      if (!y.allFinite()) throw NumericalError("sample_scones: chain diverged at step " + std::to_string(t));
    }
  }
  if (cfg.denoise_final) y = denoise_final(y, score, cfg.schedule->last());
  out.middleRows(begin, n) = y;
}

}  // namespace detail

/// One conditional sample per row of xs (n x d_x); returns (n x d_y). A null
/// pair drops the compatibility term and samples the target alone.
inline Matrix sample_scones(const DualPair* pair, const ScoreOracle& score, const Matrix& xs, Eigen::Index target_dim,
                            const SamplerConfig& cfg) {
  cfg.validate();
  if (pair && xs.cols() != pair->phi_spec.input_width()) throw InvalidArgument("sample_scones: source dimension mismatch");
  if (pair && target_dim != pair->psi_spec.input_width()) throw InvalidArgument("sample_scones: target dimension mismatch");
  const Eigen::Index n = xs.rows();
  Matrix out(n, target_dim);
  if (n == 0) return out;
  const Eigen::Index block = Eigen::Index(cfg.block_size);
  const Eigen::Index blocks = (n + block - 1) / block;
  auto run = [&](Eigen::Index b) {
    const Eigen::Index begin = b * block;
    detail::run_chain_block(pair, score, xs, cfg, begin, std::min(n, begin + block), target_dim, out);
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, unsigned(blocks)));
  if (threads == 1) {
    for (Eigen::Index b = 0; b < blocks; ++b) run(b);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (Eigen::Index b = t; b < blocks; b += threads) run(b);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline Matrix sample_scones(const DualPair& pair, const ScoreOracle& score, const Matrix& xs, const SamplerConfig& cfg) {
  return sample_scones(&pair, score, xs, pair.psi_spec.input_width(), cfg);
}

inline Vector sample_scones(const DualPair& pair, const ScoreOracle& score, const Vector& x, const SamplerConfig& cfg) {
  return sample_scones(pair, score, Matrix(x.transpose()), cfg).row(0).transpose();
}

}  // namespace scones
