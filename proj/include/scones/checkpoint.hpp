#pragma once

// Binary checkpoints for dual pairs, score nets and barycentric maps.
// Little-endian layout:
//   magic[4] version:u32 net_count:u32
//   per net: layer_count:u32 widths:u32[layer_count + 1] hidden_act:u8 output_act:u8
//   header fields of the payload kind (see each writer)
//   weights: f64, layer by layer, weight row-major then bias

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "scones/baselines.hpp"
#include "scones/error.hpp"
#include "scones/mlp.hpp"
#include "scones/neural_dual.hpp"
#include "scones/score.hpp"

namespace scones {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 4> kDualMagic{'S', 'C', 'N', 'S'};
inline constexpr std::array<char, 4> kScoreMagic{'S', 'C', 'O', 'R'};
inline constexpr std::array<char, 4> kBaryMagic{'S', 'C', 'B', 'P'};

namespace detail {

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : os_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!os_) throw IoError("cannot open '" + path + "' for writing");
  }
  template <class T>
  void put(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const char* p, std::size_t n) { os_.write(p, std::streamsize(n)); }
  void finish() {
    os_.flush();
    if (!os_) throw IoError("write to '" + path_ + "' failed");
  }

 private:
  std::ofstream os_;
  std::string path_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : is_(path, std::ios::binary), path_(path) {
    if (!is_) throw IoError("cannot open '" + path + "'");
  }
  template <class T>
  T get() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) throw IoError("'" + path_ + "': truncated checkpoint");
    return v;
  }
  void bytes(char* p, std::size_t n) {
    is_.read(p, std::streamsize(n));
    if (!is_) throw IoError("'" + path_ + "': truncated checkpoint");
  }
  void expect_end() {
    if (is_.peek() != std::char_traits<char>::eof()) throw IoError("'" + path_ + "': trailing bytes");
  }
  const std::string& path() const { return path_; }

 private:
  std::ifstream is_;
  std::string path_;
};

inline void write_header(BinWriter& w, const std::array<char, 4>& magic, std::uint32_t nets) {
  w.bytes(magic.data(), 4);
  w.put(kCheckpointVersion);
  w.put(nets);
}

inline std::uint32_t read_header(BinReader& r, const std::array<char, 4>& magic) {
  std::array<char, 4> got{};
  r.bytes(got.data(), 4);
  if (got != magic)
    throw IoError("'" + r.path() + "': bad magic (expected " + std::string(magic.data(), 4) + ")");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw IoError("'" + r.path() + "': unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                  std::to_string(kCheckpointVersion) + ")");
  return r.get<std::uint32_t>();
}

inline void write_spec(BinWriter& w, const MlpSpec& spec) {
  w.put(std::uint32_t(spec.layer_count()));
  for (int width : spec.widths) w.put(std::uint32_t(width));
  w.put(std::uint8_t(Activation::kRelu));
  w.put(std::uint8_t(spec.output));
}

inline MlpSpec read_spec(BinReader& r) {
  const auto layers = r.get<std::uint32_t>();
  if (layers < 1 || layers > 64) throw IoError("'" + r.path() + "': implausible layer count");
  MlpSpec spec;
  for (std::uint32_t l = 0; l <= layers; ++l) {
    const auto width = r.get<std::uint32_t>();
    if (width < 1 || width > (1u << 20)) throw IoError("'" + r.path() + "': implausible width");
    spec.widths.push_back(int(width));
  }
  if (r.get<std::uint8_t>() != std::uint8_t(Activation::kRelu)) throw IoError("'" + r.path() + "': unsupported hidden activation");
  const auto out = r.get<std::uint8_t>();
  if (out > std::uint8_t(Activation::kSigmoid)) throw IoError("'" + r.path() + "': bad output activation");
  spec.output = Activation(out);
  return spec;
}

inline void write_weights(BinWriter& w, const MlpParams& p) {
  for (const auto& layer : p.layers) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) w.put(layer.weight(i, j));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) w.put(layer.bias(i));
  }
}

inline MlpParams read_weights(BinReader& r, const MlpSpec& spec) {
  MlpParams p = zero_params(spec);
  p.init = {"checkpoint", 0};
  for (auto& layer : p.layers) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = r.get<double>();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = r.get<double>();
  }
  return p;
}

}  // namespace detail

// Dual payload header: kind:u8 lambda:f64 has_alpha:u8 alpha:f64 cost:u8
inline void save_dual_pair(const std::string& path, const DualPair& pair) {
  pair.validate();
  detail::BinWriter w(path);
  detail::write_header(w, kDualMagic, 2);
  detail::write_spec(w, pair.phi_spec);
  detail::write_spec(w, pair.psi_spec);
  w.put(std::uint8_t(pair.compat.kind));
  w.put(pair.compat.params.lambda);
  w.put(std::uint8_t(pair.compat.params.chi2_softplus_alpha.has_value()));
  w.put(pair.compat.params.chi2_softplus_alpha.value_or(0.0));
  w.put(std::uint8_t(pair.cost));
  detail::write_weights(w, pair.phi);
  detail::write_weights(w, pair.psi);
  w.finish();
}

inline DualPair load_dual_pair(const std::string& path) {
  detail::BinReader r(path);
  if (detail::read_header(r, kDualMagic) != 2) throw IoError("'" + path + "': dual checkpoint must hold 2 nets");
  DualPair pair;
  pair.phi_spec = detail::read_spec(r);
  pair.psi_spec = detail::read_spec(r);
  const auto kind = r.get<std::uint8_t>();
  if (kind > std::uint8_t(FDivKind::kGAN)) throw IoError("'" + path + "': bad f-divergence kind");
  pair.compat.kind = FDivKind(kind);
  pair.compat.params.lambda = r.get<double>();
  const bool has_alpha = r.get<std::uint8_t>() != 0;
  const double alpha = r.get<double>();
  if (has_alpha) pair.compat.params.chi2_softplus_alpha = alpha;
  const auto cost = r.get<std::uint8_t>();
  if (cost > std::uint8_t(CostKind::kZero)) throw IoError("'" + path + "': bad cost tag");
  pair.cost = CostKind(cost);
  pair.phi = detail::read_weights(r, pair.phi_spec);
  pair.psi = detail::read_weights(r, pair.psi_spec);
  r.expect_end();
  pair.validate();
  return pair;
}

// Score payload header: conditioned:u8
inline void save_score_net(const std::string& path, const ScoreNet& net) {
  detail::BinWriter w(path);
  detail::write_header(w, kScoreMagic, 1);
  detail::write_spec(w, net.spec);
  w.put(std::uint8_t(net.conditioned));
  detail::write_weights(w, net.params);
  w.finish();
}

inline ScoreNet load_score_net(const std::string& path) {
  detail::BinReader r(path);
  if (detail::read_header(r, kScoreMagic) != 1) throw IoError("'" + path + "': score checkpoint must hold 1 net");
  ScoreNet net;
  net.spec = detail::read_spec(r);
  net.conditioned = r.get<std::uint8_t>() != 0;
  net.params = detail::read_weights(r, net.spec);
  r.expect_end();
  return net;
}

inline void save_bary_map(const std::string& path, const BaryMap& t) {
  detail::BinWriter w(path);
  detail::write_header(w, kBaryMagic, 1);
  detail::write_spec(w, t.spec);
  detail::write_weights(w, t.params);
  w.finish();
}

inline BaryMap load_bary_map(const std::string& path) {
  detail::BinReader r(path);
  if (detail::read_header(r, kBaryMagic) != 1) throw IoError("'" + path + "': map checkpoint must hold 1 net");
  BaryMap t;
  t.spec = detail::read_spec(r);
  t.params = detail::read_weights(r, t.spec);
  r.expect_end();
  return t;
}

}  // namespace scones
