#pragma once

// Fully connected ReLU networks with exact reverse-mode gradients, batched
// over rows, plus the Adam / SGD optimizers used by every trainer.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "scones/error.hpp"
#include "scones/linalg.hpp"

namespace scones {

enum class Activation : std::uint8_t { kLinear = 0, kRelu = 1, kSigmoid = 2 };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "linear") return Activation::kLinear;
  if (s == "relu") return Activation::kRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw InvalidArgument("unknown activation '" + std::string(s) + "'");
}

/// Widths w0 -> w1 -> ... -> w_{k+1}; hidden layers are always ReLU.
struct MlpSpec {
  std::vector<int> widths;
  Activation output = Activation::kLinear;

  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  std::size_t layer_count() const { return widths.size() - 1; }

  void validate() const {
    if (widths.size() < 2) throw InvalidArgument("MlpSpec: need at least input and output widths");
    for (int w : widths)
      if (w < 1) throw InvalidArgument("MlpSpec: widths must be >= 1");
  }
};

struct DenseLayer {
  Matrix weight;  // (out x in)
  Vector bias;    // (out)
};

struct InitRecord {
  std::string scheme = "he-uniform";
  std::uint64_t seed = 0;
};

struct MlpParams {
  std::vector<DenseLayer> layers;
  InitRecord init;
};

/// Gradient with the shape of MlpParams::layers.
using LayerGrads = std::vector<DenseLayer>;

inline MlpParams init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  MlpParams p;
  p.init = {"he-uniform", seed};
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const int in = spec.widths[l], out = spec.widths[l + 1];
    const double bound = std::sqrt(6.0 / in);
    DenseLayer layer{Matrix(out, in), Vector::Zero(out)};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline MlpParams zero_params(const MlpSpec& spec) {
  spec.validate();
  MlpParams p;
  p.init = {"zero", 0};
  for (std::size_t l = 0; l < spec.layer_count(); ++l)
    p.layers.push_back({Matrix::Zero(spec.widths[l + 1], spec.widths[l]), Vector::Zero(spec.widths[l + 1])});
  return p;
}

inline LayerGrads zeros_like(const MlpParams& p) {
  LayerGrads g;
  for (const auto& l : p.layers) g.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return g;
}

inline void check_shapes(const MlpSpec& spec, const MlpParams& params) {
  if (params.layers.size() != spec.layer_count()) throw InvalidArgument("MlpParams: layer count mismatch");
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto& L = params.layers[l];
    if (L.weight.rows() != spec.widths[l + 1] || L.weight.cols() != spec.widths[l] ||
        L.bias.size() != spec.widths[l + 1])
      throw InvalidArgument("MlpParams: layer " + std::to_string(l) + " shape mismatch");
  }
}

/// Pre-activations and activations of a batched forward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;          // input to layer l, (n x w_l)
  std::vector<Matrix> preactivations;  // (n x w_{l+1})
  Matrix output;
};

namespace detail {

inline Matrix apply_activation(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::kLinear: return z;
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kSigmoid: return (1.0 + (-z.array()).exp()).inverse().matrix();
  }
  return z;
}

// Derivative evaluated from pre-activation z (and activation y for sigmoid);
// the ReLU derivative at exactly 0 is 0.
inline Matrix activation_derivative(Activation a, const Matrix& z, const Matrix& y) {
  switch (a) {
    case Activation::kLinear: return Matrix::Ones(z.rows(), z.cols());
    case Activation::kRelu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::kSigmoid: return (y.array() * (1.0 - y.array())).matrix();
  }
  return z;
}

}  // namespace detail

inline ForwardCache mlp_forward_cached(const MlpSpec& spec, const MlpParams& params, const Matrix& x) {
  if (x.cols() != spec.input_width())
    throw InvalidArgument("mlp_forward: input width " + std::to_string(x.cols()) + " != " +
                          std::to_string(spec.input_width()));
  ForwardCache cache;
  Matrix a = x;
  const std::size_t L = spec.layer_count();
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = params.layers[l];
    Matrix z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    cache.inputs.push_back(std::move(a));
    a = detail::apply_activation(l + 1 == L ? spec.output : Activation::kRelu, z);
    cache.preactivations.push_back(std::move(z));
  }
  cache.output = std::move(a);
  return cache;
}

/// Batched forward: one sample per row, returns (n x w_out).
inline Matrix mlp_forward(const MlpSpec& spec, const MlpParams& params, const Matrix& x) {
  return mlp_forward_cached(spec, params, x).output;
}

inline Vector mlp_forward(const MlpSpec& spec, const MlpParams& params, const Vector& x) {
  return mlp_forward(spec, params, Matrix(x.transpose())).row(0).transpose();
}

struct Backward {
  LayerGrads params;  // empty when not requested
  Matrix input;       // (n x w0), empty when not requested
};

/// Reverse pass for the scalar sum_k <upstream_k, output_k> over rows.
inline Backward mlp_backward(const MlpSpec& spec, const MlpParams& params, const ForwardCache& cache,
                             const Matrix& upstream, bool want_params, bool want_input) {
  const std::size_t L = spec.layer_count();
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols())
    throw InvalidArgument("mlp_backward: upstream shape mismatch");
  Backward out;
  if (want_params) out.params.resize(L);
  Matrix delta = upstream.cwiseProduct(
      detail::activation_derivative(spec.output, cache.preactivations[L - 1], cache.output));
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = params.layers[l];
    if (want_params) {
      out.params[l].weight = delta.transpose() * cache.inputs[l];
      out.params[l].bias = delta.colwise().sum().transpose();
    }
    if (l == 0 && !want_input) break;
    Matrix back = delta * layer.weight;
    if (l > 0) {
      delta = back.cwiseProduct(detail::activation_derivative(Activation::kRelu, cache.preactivations[l - 1],
                                                              cache.inputs[l]));
    } else {
      out.input = std::move(back);
    }
  }
  return out;
}

/// Gradient of (upstream * output) for a single input of a scalar-output net.
inline LayerGrads mlp_param_grad(const MlpSpec& spec, const MlpParams& params, const Vector& x, double upstream) {
  ForwardCache cache = mlp_forward_cached(spec, params, Matrix(x.transpose()));
  return mlp_backward(spec, params, cache, Matrix::Constant(1, spec.output_width(), upstream), true, false).params;
}

/// d output / d input for every row of a scalar-output net, (n x w0).
inline Matrix mlp_input_grad(const MlpSpec& spec, const MlpParams& params, const Matrix& x) {
  if (spec.output_width() != 1) throw InvalidArgument("mlp_input_grad: output width must be 1");
  ForwardCache cache = mlp_forward_cached(spec, params, x);
  return mlp_backward(spec, params, cache, Matrix::Ones(x.rows(), 1), false, true).input;
}

inline Vector mlp_input_grad(const MlpSpec& spec, const MlpParams& params, const Vector& x) {
  return mlp_input_grad(spec, params, Matrix(x.transpose())).row(0).transpose();
}

/// Value and input gradient from one forward pass, (n x 1) and (n x w0).
inline std::pair<Vector, Matrix> mlp_value_and_input_grad(const MlpSpec& spec, const MlpParams& params,
                                                          const Matrix& x) {
  ForwardCache cache = mlp_forward_cached(spec, params, x);
  Backward b = mlp_backward(spec, params, cache, Matrix::Ones(x.rows(), 1), false, true);
  return {cache.output.col(0), std::move(b.input)};
}

inline bool all_finite(const LayerGrads& g) {
  for (const auto& l : g)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

enum class OptimizerKind { kAdam, kSgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments (unused for SGD). step() applies a descent step on `grads`.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const OptimizerConfig& cfg, const MlpParams& params) : cfg_(cfg) {
    if (!(cfg.lr > 0.0)) throw InvalidArgument("optimizer: lr must be positive");
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
      throw InvalidArgument("optimizer: betas must lie in [0, 1)");
    if (cfg.kind == OptimizerKind::kAdam) {
      m_ = zeros_like(params);
      v_ = zeros_like(params);
    }
  }

  void step(MlpParams& params, const LayerGrads& grads) {
    ++t_;
    if (cfg_.kind == OptimizerKind::kSgd) {
      for (std::size_t l = 0; l < grads.size(); ++l) {
        params.layers[l].weight -= cfg_.lr * grads[l].weight;
        params.layers[l].bias -= cfg_.lr * grads[l].bias;
      }
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseAbs2();
      p.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
    };
    for (std::size_t l = 0; l < grads.size(); ++l) {
      update(params.layers[l].weight, m_[l].weight, v_[l].weight, grads[l].weight);
      update(params.layers[l].bias, m_[l].bias, v_[l].bias, grads[l].bias);
    }
  }

  std::uint64_t steps() const noexcept { return t_; }
  const OptimizerConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  OptimizerConfig cfg_;
  LayerGrads m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace scones
