#include <gtest/gtest.h>

#include <cmath>

#include "scones/baselines.hpp"
#include "scones/gaussian.hpp"

using namespace scones;

namespace {

Compatibility kl(double lambda) { return {FDivKind::kKL, {lambda, std::nullopt}}; }

DualPair zeroed(DualPair p) {
  p.phi = zero_params(p.phi_spec);
  p.psi = zero_params(p.psi_spec);
  return p;
}

EmpiricalMeasure gaussian_cloud(const GaussianMeasure& g, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  return EmpiricalMeasure::uniform(sample_gaussian(g.mean, psd_factor(g.cov), n, rng));
}

}  // namespace

TEST(BaryMapEval, ZeroNetEmptyBatchAndShape) {
  BaryMap t = make_bary_map(2, 3, {8}, 1);
  t.params = zero_params(t.spec);
  EXPECT_TRUE(bary_map_eval(t, Matrix::Ones(4, 2)).isZero(0.0));
  const Matrix empty = bary_map_eval(t, Matrix(0, 2));
  EXPECT_EQ(empty.rows(), 0);
  EXPECT_EQ(empty.cols(), 3);
  EXPECT_THROW(bary_map_eval(t, Matrix::Ones(4, 3)), InvalidArgument);
}

TEST(BaryLoss, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  const Matrix tx = rng.normal_matrix(4, 2), ys = rng.normal_matrix(5, 2);
  Matrix m = rng.normal_matrix(4, 5).cwiseAbs();
  const auto [loss, grad] = bary_loss(tx, ys, m);
  EXPECT_GE(loss, 0.0);
  for (Eigen::Index i = 0; i < tx.size(); ++i) {
    Matrix up = tx, dn = tx;
    up.data()[i] += 1e-6;
    dn.data()[i] -= 1e-6;
    const double fd = (bary_loss(up, ys, m).first - bary_loss(dn, ys, m).first) / 2e-6;
    EXPECT_NEAR(fd, grad.data()[i], 1e-7);
  }
}

TEST(TrainBarycentric, ConstantCompatibilityGivesTargetMean) {
  const GaussianMeasure src{Vector::Zero(2), Matrix::Identity(2, 2)};
  const GaussianMeasure tgt{(Vector(2) << 1.0, -2.0).finished(), 0.5 * Matrix::Identity(2, 2)};
  const EmpiricalMeasure source = gaussian_cloud(src, 4000, 3), target = gaussian_cloud(tgt, 4000, 4);
  const DualPair pair = zeroed(make_dual_pair(2, 2, {8}, kl(1.0), CostKind::kZero, 5));
  BaryConfig cfg;
  cfg.hidden = {32, 32};
  cfg.iterations = 1500;
  cfg.optimizer.lr = 3e-3;
  cfg.seed = 6;
  const BaryMap t = train_barycentric(pair, source, target, cfg).first;
  const Matrix out = bary_map_eval(t, source.atoms.topRows(200));
  const Vector mean = target.atoms.colwise().mean().transpose();
  EXPECT_LT((out.rowwise() - mean.transpose()).rowwise().norm().mean(), 0.1);
}

TEST(TrainBarycentric, ConcentratedCompatibilityGivesIdentity) {
  Matrix grid(10, 2);
  for (int i = 0; i < 10; ++i) grid.row(i) << double(i % 5) - 2.0, double(i / 5) - 0.5;
  const EmpiricalMeasure atoms = EmpiricalMeasure::uniform(grid);
  const DualPair pair = zeroed(make_dual_pair(2, 2, {8}, kl(0.01), CostKind::kSquaredL2, 8));
  BaryConfig cfg;
  cfg.iterations = 3000;
  cfg.batch_size = 64;
  cfg.optimizer.lr = 3e-3;
  cfg.seed = 9;
  const BaryMap t = train_barycentric(pair, atoms, atoms, cfg).first;
  const Matrix out = bary_map_eval(t, atoms.atoms);
  EXPECT_LT((out - atoms.atoms).rowwise().norm().mean(), 0.05);
}

TEST(TrainBarycentric, LinearPotentialGivesConditionalMeanSlope) {
  // psi(y) = w.y: pi(y | x) is Gaussian with precision P = S^{-1} + (2 / lambda) I and
  // mean P^{-1} (S^{-1} mu + (w + 2x) / lambda), so dT/dx = (2 / lambda) P^{-1}.
  const double lambda = 2.0;
  Rng rng(10);
  const GaussianMeasure tgt{(Vector(2) << 0.5, -0.5).finished(), detail::random_spd(2, rng, 1.0, 3.0)};
  const GaussianMeasure src{Vector::Zero(2), Matrix::Identity(2, 2)};
  const EmpiricalMeasure source = gaussian_cloud(src, 5000, 11), target = gaussian_cloud(tgt, 5000, 12);
  DualPair pair = zeroed(make_dual_pair(2, 2, {}, kl(lambda), CostKind::kSquaredL2, 13));
  pair.psi.layers[0].weight << 0.4, -0.3;
  BaryConfig cfg;
  cfg.hidden = {32, 32};
  cfg.iterations = 3000;
  cfg.optimizer.lr = 3e-3;
  cfg.seed = 14;
  const BaryMap t = train_barycentric(pair, source, target, cfg).first;
  const Matrix prec = tgt.cov.inverse() + (2.0 / lambda) * Matrix::Identity(2, 2);
  const Matrix slope = (2.0 / lambda) * prec.inverse();
  // Least-squares fit of T(x) = A x + b over source points within 1.5 SD.
  Matrix xs(0, 2);
  for (Eigen::Index i = 0; i < source.size() && xs.rows() < 1000; ++i)
    if (source.atoms.row(i).norm() < 1.5) {
      xs.conservativeResize(xs.rows() + 1, 2);
      xs.row(xs.rows() - 1) = source.atoms.row(i);
    }
  Matrix design(xs.rows(), 3);
  design << xs, Vector::Ones(xs.rows());
  const Matrix coef = design.colPivHouseholderQr().solve(bary_map_eval(t, xs));
  const Matrix fitted = coef.topRows(2).transpose();
  EXPECT_LT((fitted - slope).norm(), 0.1 * slope.norm());
}

TEST(TrainBarycentric, OutputsAreDeterministicPerInput) {
  const BaryMap t = make_bary_map(2, 2, {16, 16}, 15);
  const Matrix x = Matrix::Constant(1, 2, 0.7);
  const Matrix first = bary_map_eval(t, x);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(bary_map_eval(t, x), first);
}

TEST(TrainBarycentric, ZeroIterationsAndErrors) {
  const EmpiricalMeasure m = EmpiricalMeasure::uniform(Matrix::Identity(3, 2));
  const DualPair pair = make_dual_pair(2, 2, {4}, kl(1.0), CostKind::kSquaredL2, 16);
  BaryConfig cfg;
  cfg.iterations = 0;
  const auto [t, report] = train_barycentric(pair, m, m, cfg);
  EXPECT_TRUE(report.loss.empty());
  EXPECT_EQ(t.spec.widths.front(), 2);
  cfg.batch_size = 0;
  EXPECT_THROW(train_barycentric(pair, m, m, cfg), InvalidArgument);
  const EmpiricalMeasure wide = EmpiricalMeasure::uniform(Matrix::Identity(3, 3));
  EXPECT_THROW(train_barycentric(pair, wide, m, BaryConfig{}), InvalidArgument);
}
