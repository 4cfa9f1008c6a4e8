#pragma once

// Denoising score matching for low-dimensional targets, and the swiss-roll
// data used by the 2-D experiment.

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

#include "scones/error.hpp"
#include "scones/linalg.hpp"
#include "scones/mlp.hpp"
#include "scones/sampler.hpp"

namespace scones {

inline constexpr double kSwissRollJitter = 0.05;

/// t ~ U[1.5 pi, 4.5 pi], (t cos t, t sin t) scaled into [-2, 2]^2, plus jitter.
inline Matrix swiss_roll_data(Eigen::Index n, double noise_sd, Rng& rng) {
  if (n < 1) throw InvalidArgument("swiss_roll_data: n must be >= 1");
  constexpr double pi = std::numbers::pi;
  const double scale = 4.5 * pi / 2.0;
  Matrix out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = rng.uniform(1.5 * pi, 4.5 * pi);
    out(i, 0) = t * std::cos(t) / scale;
    out(i, 1) = t * std::sin(t) / scale;
    if (noise_sd > 0.0) {
      out(i, 0) += noise_sd * rng.normal();
      out(i, 1) += noise_sd * rng.normal();
    }
  }
  return out;
}

/// A score network. Conditioned nets read (y, log tau) and output tau * s;
/// unconditioned nets read y and output s.
struct ScoreNet {
  MlpSpec spec;
  MlpParams params;
  bool conditioned = true;

  Eigen::Index dim() const { return spec.output_width(); }

  Matrix inputs(const Matrix& ys, const Vector& taus) const {
    if (!conditioned) return ys;
    Matrix in(ys.rows(), ys.cols() + 1);
    in << ys, taus.array().log().matrix();
    return in;
  }

  Matrix operator()(const Matrix& ys, std::optional<double> level) const {
    if (!conditioned) return mlp_forward(spec, params, ys);
    if (!level) throw InvalidArgument("ScoreNet: noise-conditioned net queried without a level");
    return mlp_forward(spec, params, inputs(ys, Vector::Constant(ys.rows(), *level))) / *level;
  }
};

inline ScoreNet make_score_net(int dim, const std::vector<int>& hidden, bool conditioned, std::uint64_t seed) {
  ScoreNet net;
  net.conditioned = conditioned;
  net.spec.widths.push_back(dim + (conditioned ? 1 : 0));
  for (int w : hidden) net.spec.widths.push_back(w);
  net.spec.widths.push_back(dim);
  net.params = init_params(net.spec, seed);
  return net;
}

inline ScoreOracle make_score_oracle(ScoreNet net) {
  auto shared = std::make_shared<const ScoreNet>(std::move(net));
  return [shared](const Matrix& ys, std::optional<double> level) { return (*shared)(ys, level); };
}

/// mean over rows of tau^2 |s(y + tau z) + z / tau|^2 / 2 for a given noise draw.
inline double dsm_loss_value(const ScoreOracle& score, const Matrix& ys, const Vector& taus, const Matrix& z) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < ys.rows(); ++k) {
    const Matrix noisy = ys.row(k) + taus(k) * z.row(k);
    const RowVector r = score(noisy, taus(k)).row(0) + z.row(k) / taus(k);
    total += 0.5 * taus(k) * taus(k) * r.squaredNorm();
  }
  return total / double(ys.rows());
}

struct DsmLossGrad {
  double loss = 0.0;
  LayerGrads grads;
};

/// Loss and parameter gradient for one noise draw; one level per row.
inline DsmLossGrad dsm_loss_grad(const ScoreNet& net, const Matrix& ys, const Vector& taus, const Matrix& z) {
  if (ys.rows() == 0) throw InvalidArgument("dsm_loss_grad: empty batch");
  if (taus.size() != ys.rows() || z.rows() != ys.rows() || z.cols() != ys.cols())
    throw InvalidArgument("dsm_loss_grad: shape mismatch");
  if ((taus.array() <= 0.0).any()) throw InvalidArgument("dsm_loss_grad: noise levels must be positive");
  const double n = double(ys.rows());
  const Matrix noisy = ys + taus.asDiagonal() * z;
  const ForwardCache cache = mlp_forward_cached(net.spec, net.params, net.inputs(noisy, taus));
  Matrix upstream;
  DsmLossGrad out;
  if (net.conditioned) {
    // tau r = out + z
    const Matrix r = cache.output + z;
    out.loss = 0.5 * r.squaredNorm() / n;
    upstream = r / n;
  } else {
    const Matrix r = cache.output + taus.cwiseInverse().asDiagonal() * z;
    const Vector t2 = taus.cwiseAbs2();
    out.loss = 0.5 * (t2.asDiagonal() * r.rowwise().squaredNorm()).sum() / n;
    upstream = t2.asDiagonal() * r / n;
  }
  out.grads = mlp_backward(net.spec, net.params, cache, upstream, true, false).params;
  return out;
}

inline DsmLossGrad dsm_loss_grad(const ScoreNet& net, const Matrix& ys, double tau, Rng& rng) {
  return dsm_loss_grad(net, ys, Vector::Constant(ys.rows(), tau), rng.normal_matrix(ys.rows(), ys.cols()));
}

struct DsmConfig {
  NoiseSchedule levels{{0.1}};
  std::size_t iterations = 5000;
  std::size_t batch_size = 256;
  OptimizerConfig optimizer{};
  // Cosine decay of the learning rate down to lr * final_lr_fraction; 1 keeps it constant.
  double final_lr_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(final_lr_fraction > 0.0) || final_lr_fraction > 1.0)
      throw InvalidArgument("DsmConfig: final_lr_fraction must lie in (0, 1]");
    if (levels.levels.empty()) throw InvalidArgument("DsmConfig: no noise levels");
    for (double l : levels.levels)
      if (!(l > 0.0)) throw InvalidArgument("DsmConfig: noise levels must be positive");
    if (batch_size < 1) throw InvalidArgument("DsmConfig: batch_size must be >= 1");
  }
};

struct DsmReport {
  std::vector<double> loss;
};

/// Adam on the DSM loss; each row of a minibatch draws its level uniformly.
inline std::pair<ScoreNet, DsmReport> train_score(const Matrix& data, ScoreNet net, const DsmConfig& cfg) {
  cfg.validate();
  if (data.rows() == 0) throw InvalidArgument("train_score: empty data");
  if (data.cols() != net.dim()) throw InvalidArgument("train_score: data dimension mismatch");
  if (!net.conditioned && cfg.levels.size() != 1)
    throw InvalidArgument("train_score: unconditioned net needs a single level");
  DsmReport report;
  if (cfg.iterations == 0) return {std::move(net), report};
  Rng rng = Rng(cfg.seed).substream("train_score");
  Optimizer opt(cfg.optimizer, net.params);
  const Eigen::Index m = Eigen::Index(cfg.batch_size);
  Matrix batch(m, data.cols());
  Vector taus(m);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (cfg.final_lr_fraction < 1.0) {
      const double progress = double(it) / double(cfg.iterations);
      const double f = cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
      opt.set_lr(cfg.optimizer.lr * f);
    }
    for (Eigen::Index k = 0; k < m; ++k) {
      batch.row(k) = data.row(Eigen::Index(rng.index(std::size_t(data.rows()))));
      taus(k) = cfg.levels.levels[rng.index(cfg.levels.size())];
    }
    const DsmLossGrad lg = dsm_loss_grad(net, batch, taus, rng.normal_matrix(m, data.cols()));
    if (!std::isfinite(lg.loss) || !all_finite(lg.grads))
      throw NumericalError("train_score: non-finite loss at iteration " + std::to_string(it));
    report.loss.push_back(lg.loss);
    opt.step(net.params, lg.grads);
  }
  return {std::move(net), report};
}

}  // namespace scones
