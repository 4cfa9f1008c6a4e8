#pragma once

// Dense symmetric linear algebra and seeded randomness shared by every module.
//
// Data matrices hold one sample per row (n x d). All operations are pure given
// their inputs; an Rng is single-owner and must not be shared across threads.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>

#include "scones/error.hpp"

namespace scones {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Seeded pseudo-random stream. Identical seeds give identical streams;
/// substreams derived by name or index are decorrelated through splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(detail::splitmix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  Rng substream(std::string_view name) const {
    return Rng(detail::splitmix64(seed_ ^ detail::fnv1a(name)));
  }
  Rng substream(std::uint64_t index) const {
    return Rng(detail::splitmix64(seed_ + 0x632be59bd9b4e019ULL * (index + 1)));
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  Vector normal_vector(Eigen::Index d) {
    Vector z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = normal();
    return z;
  }
  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix z(rows, cols);
    // Row-major fill order keeps streams stable if storage order changes.
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = normal();
    return z;
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

struct SymEig {
  Vector values;   // descending
  Matrix vectors;  // orthogonal, column k pairs with values(k)
};

inline SymEig sym_eig(const Matrix& m) {
  if (!is_symmetric(m)) throw InvalidArgument("sym_eig: matrix is not symmetric");
  if (!m.allFinite()) throw InvalidArgument("sym_eig: non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (m + m.transpose()));
  if (solver.info() != Eigen::Success)
    throw NumericalError("sym_eig: eigensolver did not converge (ill-conditioned input)");
  const Eigen::Index n = m.rows();
  SymEig out{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = solver.eigenvalues()(n - 1 - k);
    out.vectors.col(k) = solver.eigenvectors().col(n - 1 - k);
  }
  return out;
}

// Eigenvalues above -kPsdClamp * max eigenvalue are treated as zero.
inline constexpr double kPsdClamp = 1e-10;

inline Matrix sqrtm_psd(const Matrix& m) {
  if (m.size() == 0) return m;
  SymEig e = sym_eig(m);
  const double tol = kPsdClamp * std::max(std::abs(e.values(0)), 1e-300);
  for (Eigen::Index k = 0; k < e.values.size(); ++k) {
    if (e.values(k) < -tol)
      throw DomainError("sqrtm_psd: negative eigenvalue " + std::to_string(e.values(k)));
    e.values(k) = std::sqrt(std::max(e.values(k), 0.0));
  }
  Matrix s = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  return 0.5 * (s + s.transpose());
}

// Haar-distributed rotation: QR of a Gaussian matrix, R's diagonal made
// positive, then one column flipped if needed so det(Q) = +1.
inline Matrix haar_orthogonal(Eigen::Index d, Rng& rng) {
  if (d < 1) throw InvalidArgument("haar_orthogonal: d must be >= 1");
  Matrix g = rng.normal_matrix(d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index k = 0; k < d; ++k)
    if (r(k, k) < 0) q.col(k) *= -1.0;
  if (q.determinant() < 0) q.col(0) *= -1.0;
  return q;
}

/// Rows are i.i.d. draws from N(mean, L L^T).
inline Matrix sample_gaussian(const Vector& mean, const Matrix& cov_chol, Eigen::Index n, Rng& rng) {
  const Eigen::Index d = mean.size();
  if (cov_chol.rows() != d || cov_chol.cols() != d)
    throw InvalidArgument("sample_gaussian: dimension mismatch");
  Matrix z = rng.normal_matrix(n, d);
  Matrix out = z * cov_chol.transpose();
  out.rowwise() += mean.transpose();
  return out;
}

/// Cholesky factor that tolerates PSD (rank-deficient) input through the
/// symmetric square root.
inline Matrix psd_factor(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  return sqrtm_psd(cov);
}

struct MeanCov {
  Vector mean;
  Matrix cov;
};

/// Population (1/n) covariance.
inline MeanCov empirical_covariance(const Matrix& samples) {
  const Eigen::Index n = samples.rows();
  if (n < 2) throw InvalidArgument("empirical_covariance: need at least 2 samples");
  MeanCov out;
  out.mean = samples.colwise().mean().transpose();
  Matrix centered = samples.rowwise() - out.mean.transpose();
  out.cov = (centered.transpose() * centered) / static_cast<double>(n);
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

inline double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace scones
