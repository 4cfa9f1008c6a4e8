#pragma once

// Closed-form entropic OT between Gaussians (squared-l2 cost, KL regularizer),
// Gaussian scores, Bures-Wasserstein metrics and the random benchmark
// instances.

#include <cmath>
#include <cstdint>
#include <numbers>

#include "scones/error.hpp"
#include "scones/linalg.hpp"

namespace scones {

struct GaussianMeasure {
  Vector mean;
  Matrix cov;

  Eigen::Index dim() const { return mean.size(); }

  void validate() const {
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw InvalidArgument("GaussianMeasure: shape mismatch");
    if (!is_symmetric(cov)) throw InvalidArgument("GaussianMeasure: covariance not symmetric");
  }
};

struct JointGaussianPlan {
  Vector mean;  // (2d): source then target
  Matrix sigma1;
  Matrix sigma2;
  Matrix cross;  // Cov(X, Y), (d x d)

  Eigen::Index dim() const { return sigma1.rows(); }

  Matrix joint_cov() const {
    const Eigen::Index d = dim();
    Matrix j(2 * d, 2 * d);
    j << sigma1, cross, cross.transpose(), sigma2;
    return j;
  }
};

struct ProblemInstance {
  int dim = 1;
  GaussianMeasure source;
  GaussianMeasure target;
  double lambda = 2.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline Matrix random_spd(Eigen::Index d, Rng& rng, double lo, double hi) {
  const Matrix q = haar_orthogonal(d, rng);
  Vector w(d);
  for (Eigen::Index i = 0; i < d; ++i) w(i) = rng.uniform(lo, hi);
  Matrix s = q * w.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

inline Eigen::LLT<Matrix> require_pd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw DomainError(std::string(what) + ": covariance is not positive definite");
  return llt;
}

}  // namespace detail

/// Zero means, covariances Q diag(w) Q^T with Q Haar and w ~ U[1, 10], lambda = 2d.
inline ProblemInstance random_instance(int d, std::uint64_t seed) {
  if (d < 1) throw InvalidArgument("random_instance: d must be >= 1");
  Rng rng = Rng(seed).substream("gaussian-instance");
  ProblemInstance p;
  p.dim = d;
  p.seed = seed;
  p.lambda = 2.0 * d;
  p.source = {Vector::Zero(d), detail::random_spd(d, rng, 1.0, 10.0)};
  p.target = {Vector::Zero(d), detail::random_spd(d, rng, 1.0, 10.0)};
  return p;
}

/// Entropic coupling for min E|x - y|^2 + lambda KL(pi || s1 x s2). With
/// s^2 = lambda / 2: D = (4 S1^{1/2} S2 S1^{1/2} + s^4 I)^{1/2},
/// C = (S1^{1/2} D S1^{-1/2} - s^2 I) / 2.
inline JointGaussianPlan entropic_plan(const GaussianMeasure& source, const GaussianMeasure& target, double lambda) {
  source.validate();
  target.validate();
  if (source.dim() != target.dim()) throw InvalidArgument("entropic_plan: dimension mismatch");
  if (!(lambda > 0.0)) throw InvalidArgument("entropic_plan: lambda must be positive");
  detail::require_pd(source.cov, "entropic_plan");
  detail::require_pd(target.cov, "entropic_plan");
  const Eigen::Index d = source.dim();
  const double s2 = lambda / 2.0;
  const Matrix a_half = sqrtm_psd(source.cov);
  const Matrix a_half_inv = a_half.inverse();
  Matrix inner = 4.0 * a_half * target.cov * a_half + s2 * s2 * Matrix::Identity(d, d);
  inner = 0.5 * (inner + inner.transpose());
  const Matrix dm = sqrtm_psd(inner);
  JointGaussianPlan plan;
  plan.mean.resize(2 * d);
  plan.mean << source.mean, target.mean;
  plan.sigma1 = source.cov;
  plan.sigma2 = target.cov;
  plan.cross = 0.5 * (a_half * dm * a_half_inv - s2 * Matrix::Identity(d, d));
  return plan;
}

inline JointGaussianPlan entropic_plan(const ProblemInstance& p) { return entropic_plan(p.source, p.target, p.lambda); }

/// Brenier cross-covariance S1^{1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2}.
inline Matrix monge_cross_covariance(const Matrix& sigma1, const Matrix& sigma2) {
  const Matrix a_half = sqrtm_psd(sigma1);
  Matrix inner = a_half * sigma2 * a_half;
  inner = 0.5 * (inner + inner.transpose());
  return a_half * sqrtm_psd(inner) * a_half.inverse();
}

/// Precomputed -Sigma^{-1}(y - mu), batched over rows.
class GaussianScore {
 public:
  explicit GaussianScore(const GaussianMeasure& g) : mean_(g.mean) {
    g.validate();
    precision_ = detail::require_pd(g.cov, "gaussian_score").solve(Matrix::Identity(g.dim(), g.dim()));
    precision_ = 0.5 * (precision_ + precision_.transpose());
  }

  Matrix operator()(const Matrix& ys) const {
    if (ys.cols() != mean_.size()) throw InvalidArgument("gaussian_score: dimension mismatch");
    return -(ys.rowwise() - mean_.transpose()) * precision_;
  }

  const Matrix& precision() const { return precision_; }

 private:
  Vector mean_;
  Matrix precision_;
};

inline Vector gaussian_score(const GaussianMeasure& g, const Vector& y) {
  return GaussianScore(g)(Matrix(y.transpose())).row(0).transpose();
}

inline double gaussian_log_density(const GaussianMeasure& g, const Vector& y) {
  const auto llt = detail::require_pd(g.cov, "gaussian_log_density");
  const Vector r = y - g.mean;
  const Matrix l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * (r.dot(llt.solve(r)) + logdet + double(g.dim()) * std::log(2.0 * std::numbers::pi));
}

/// Law of Y given X = x under the joint plan.
inline GaussianMeasure conditional_of_joint(const JointGaussianPlan& plan, const Vector& x) {
  const Eigen::Index d = plan.dim();
  if (x.size() != d) throw InvalidArgument("conditional_of_joint: dimension mismatch");
  const auto llt = detail::require_pd(plan.sigma1, "conditional_of_joint");
  const Matrix gain = llt.solve(plan.cross).transpose();  // C^T S1^{-1}
  GaussianMeasure out;
  out.mean = plan.mean.tail(d) + gain * (x - plan.mean.head(d));
  Matrix cov = plan.sigma2 - gain * plan.cross;
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

inline double bw2_squared(const GaussianMeasure& g1, const GaussianMeasure& g2) {
  if (g1.dim() != g2.dim()) throw InvalidArgument("bw2_squared: dimension mismatch");
  const Matrix a_half = sqrtm_psd(0.5 * (g1.cov + g1.cov.transpose()));
  Matrix inner = a_half * g2.cov * a_half;
  inner = 0.5 * (inner + inner.transpose());
  const double cross = sqrtm_psd(inner).trace();
  const double v = (g1.mean - g2.mean).squaredNorm() + g1.cov.trace() + g2.cov.trace() - 2.0 * cross;
  return std::max(v, 0.0);
}

/// 100 BW^2(N(0, est), N(0, ref)) / (tr(ref) / 2).
inline double bw_uvp(const Matrix& sample_joint_cov, const Matrix& reference_joint_cov) {
  if (sample_joint_cov.rows() != reference_joint_cov.rows() || sample_joint_cov.cols() != reference_joint_cov.cols())
    throw InvalidArgument("bw_uvp: dimension mismatch");
  const Vector zero = Vector::Zero(sample_joint_cov.rows());
  return 100.0 * bw2_squared({zero, sample_joint_cov}, {zero, reference_joint_cov}) /
         (0.5 * reference_joint_cov.trace());
}

inline double bw_uvp(const Matrix& sample_joint_cov, const JointGaussianPlan& reference) {
  return bw_uvp(sample_joint_cov, reference.joint_cov());
}

}  // namespace scones
