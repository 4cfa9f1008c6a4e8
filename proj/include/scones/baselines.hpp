#pragma once

// Barycentric projection: a deterministic map T fit by M-weighted regression
// over all m^2 pairs of a product minibatch.

#include <cmath>
#include <vector>

#include "scones/error.hpp"
#include "scones/measure.hpp"
#include "scones/mlp.hpp"
#include "scones/neural_dual.hpp"

namespace scones {

struct BaryMap {
  MlpSpec spec;
  MlpParams params;
};

struct BaryConfig {
  std::vector<int> hidden{64, 64};
  OptimizerConfig optimizer{};
  std::size_t iterations = 5000;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
};

inline BaryMap make_bary_map(int source_dim, int target_dim, const std::vector<int>& hidden, std::uint64_t seed) {
  BaryMap t;
  t.spec.widths.push_back(source_dim);
  for (int w : hidden) t.spec.widths.push_back(w);
  t.spec.widths.push_back(target_dim);
  t.params = init_params(t.spec, seed);
  return t;
}

inline Matrix bary_map_eval(const BaryMap& t, const Matrix& xs) {
  if (xs.cols() != t.spec.input_width()) throw InvalidArgument("bary_map_eval: input dimension mismatch");
  if (xs.rows() == 0) return Matrix(0, t.spec.output_width());
  return mlp_forward(t.spec, t.params, xs);
}

/// mean_{i,j} M_ij |T(x_i) - y_j|^2 and its gradient with respect to T(x_i).
inline std::pair<double, Matrix> bary_loss(const Matrix& tx, const Matrix& ys, const Matrix& m) {
  const double scale = 1.0 / double(tx.rows() * ys.rows());
  const Vector row_mass = m.rowwise().sum();
  const Matrix d2 = cost_matrix(CostKind::kSquaredL2, tx, ys);
  const double loss = scale * m.cwiseProduct(d2).sum();
  const Matrix grad = 2.0 * scale * (row_mass.asDiagonal() * tx - m * ys);
  return {loss, grad};
}

struct BaryReport {
  std::vector<double> loss;
};

inline std::pair<BaryMap, BaryReport> train_barycentric(const DualPair& pair, const EmpiricalMeasure& source,
                                                        const EmpiricalMeasure& target, const BaryConfig& cfg) {
  pair.validate();
  if (source.dim() != pair.phi_spec.input_width() || target.dim() != pair.psi_spec.input_width())
    throw InvalidArgument("train_barycentric: data dimension mismatch");
  if (cfg.batch_size < 1) throw InvalidArgument("train_barycentric: batch_size must be >= 1");
  Rng rng = Rng(cfg.seed).substream("train_barycentric");
  BaryMap t = make_bary_map(int(source.dim()), int(target.dim()), cfg.hidden, rng.substream("init").engine()());
  BaryReport report;
  if (cfg.iterations == 0) return {t, report};
  Optimizer opt(cfg.optimizer, t.params);
  detail::BatchSampler src(source), tgt(target);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Matrix xs = src.draw(cfg.batch_size, rng), ys = tgt.draw(cfg.batch_size, rng);
    const Matrix v = violation_matrix(pair.phi_values(xs), pair.psi_values(ys), cost_matrix(pair.cost, xs, ys));
    const Matrix weights = penalty_field(pair.compat, v).m;
    const ForwardCache cache = mlp_forward_cached(t.spec, t.params, xs);
    auto [loss, upstream] = bary_loss(cache.output, ys, weights);
    const LayerGrads g = mlp_backward(t.spec, t.params, cache, upstream, true, false).params;
    if (!std::isfinite(loss) || !all_finite(g))
      throw NumericalError("train_barycentric: non-finite loss at iteration " + std::to_string(it));
    report.loss.push_back(loss);
    opt.step(t.params, g);
  }
  return {t, report};
}

}  // namespace scones
