#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "scones/discrete.hpp"
#include "scones/neural_dual.hpp"

using namespace scones;

namespace {

DualPair zero_pair(int d, const Compatibility& compat, CostKind cost) {
  DualPair p = make_dual_pair(d, d, {4}, compat, cost, 0);
  p.phi = zero_params(p.phi_spec);
  p.psi = zero_params(p.psi_spec);
  return p;
}

DualPair constant_pair(int d, double phi, double psi, const Compatibility& compat, CostKind cost) {
  DualPair p = zero_pair(d, compat, cost);
  p.phi.layers.back().bias(0) = phi;
  p.psi.layers.back().bias(0) = psi;
  return p;
}

Compatibility kl(double lambda) { return {FDivKind::kKL, {lambda, std::nullopt}}; }

}  // namespace

TEST(Violation, Examples) {
  const DualPair z = zero_pair(2, kl(1.0), CostKind::kSquaredL2);
  const Vector x = Vector::Zero(2), y = Vector::Ones(2);
  EXPECT_DOUBLE_EQ(violation(z, y, y), 0.0);
  EXPECT_DOUBLE_EQ(violation(z, x, y), -2.0);
  const DualPair c = constant_pair(2, 1.0, 2.0, kl(1.0), CostKind::kSquaredL2);
  EXPECT_DOUBLE_EQ(violation(c, y, y), 3.0);
}

TEST(Violation, MatrixForm) {
  const Vector f = (Vector(2) << 1.0, 2.0).finished();
  const Vector g = (Vector(3) << 0.0, 1.0, -1.0).finished();
  const Matrix c = Matrix::Ones(2, 3);
  const Matrix v = violation_matrix(f, g, c);
  EXPECT_DOUBLE_EQ(v(1, 2), 0.0);
  EXPECT_DOUBLE_EQ(v(0, 1), 1.0);
}

TEST(DualObjective, ZeroNetsUnderZeroCost) {
  Rng rng(1);
  const Matrix xs = rng.normal_matrix(6, 2), ys = rng.normal_matrix(6, 2);
  EXPECT_NEAR(dual_objective_batch(zero_pair(2, kl(1.0), CostKind::kZero), xs, ys), -1.0 / std::numbers::e, 1e-15);
  EXPECT_NEAR(dual_objective_batch(zero_pair(2, kl(2.0), CostKind::kZero), xs, ys), -2.0 / std::numbers::e, 1e-15);
}

TEST(DualObjective, HalfLambdaShiftIsOptimalAndMatchesPrimal) {
  Rng rng(2);
  const Matrix xs = rng.normal_matrix(5, 2), ys = rng.normal_matrix(5, 2);
  for (double lambda : {0.5, 1.0, 3.0}) {
    const DualPair p = constant_pair(2, lambda / 2, lambda / 2, kl(lambda), CostKind::kZero);
    EXPECT_NEAR(dual_objective_batch(p, xs, ys), 0.0, 1e-14);
    // With zero cost the optimal plan is the product measure, where K = 0.
    const Vector a = Vector::Constant(5, 0.2);
    const Matrix prod = a * a.transpose();
    EXPECT_NEAR(primal_objective(Matrix::Zero(5, 5), a, a, FDivKind::kKL, lambda, prod), 0.0, 1e-14);
  }
}

TEST(DualObjective, SmallerShiftsAreWorse) {
  Rng rng(3);
  const Matrix xs = rng.normal_matrix(4, 1), ys = rng.normal_matrix(4, 1);
  const double best = dual_objective_batch(constant_pair(1, 0.5, 0.5, kl(1.0), CostKind::kZero), xs, ys);
  for (double s : {-1.0, 0.0, 0.4, 0.6, 2.0})
    EXPECT_LT(dual_objective_batch(constant_pair(1, s, s, kl(1.0), CostKind::kZero), xs, ys), best);
}

TEST(PenaltyField, KlMatchesScalarPenalty) {
  Rng rng(4);
  const Matrix v = rng.normal_matrix(3, 4);
  const Compatibility c = kl(0.7);
  const PenaltyField pf = penalty_field(c, v);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      EXPECT_NEAR(pf.penalty(i, j), dual_penalty(c, v(i, j)), 1e-14);
      EXPECT_NEAR(pf.m(i, j), compatibility(c, v(i, j)).m, 1e-14);
    }
}

TEST(TrainDual, ZeroIterationsLeavesPairUnchanged) {
  const DiscreteInstance inst = random_discrete_instance(5, 5, 2, 1);
  const DualPair p = make_dual_pair(2, 2, {8}, kl(1.0), inst.cost, 3);
  DualTrainConfig cfg;
  cfg.iterations = 0;
  auto [q, report] = train_dual(p, inst.source, inst.target, cfg);
  EXPECT_TRUE(report.objective.empty());
  EXPECT_EQ(q.phi.layers[0].weight, p.phi.layers[0].weight);
  EXPECT_EQ(q.psi.layers.back().bias, p.psi.layers.back().bias);
}

TEST(TrainDual, RejectsUnsupportedRegularizer) {
  const DiscreteInstance inst = random_discrete_instance(4, 4, 2, 1);
  const DualPair p = make_dual_pair(2, 2, {8}, {FDivKind::kSquaredHellinger, {1.0, std::nullopt}}, inst.cost, 3);
  EXPECT_THROW(train_dual(p, inst.source, inst.target, DualTrainConfig{}), InvalidArgument);
  const DualPair wrong = make_dual_pair(3, 2, {8}, kl(1.0), inst.cost, 3);
  EXPECT_THROW(train_dual(wrong, inst.source, inst.target, DualTrainConfig{}), InvalidArgument);
}

TEST(TrainDual, FullBatchSmallStepIsMonotone) {
  const DiscreteInstance inst = random_discrete_instance(10, 10, 2, 7);
  const DualPair p = make_dual_pair(2, 2, {64, 64}, kl(1.0), inst.cost, 8);
  DualTrainConfig cfg;
  cfg.iterations = 1000;
  cfg.batch_size = 0;
  cfg.optimizer = {OptimizerKind::kSgd, 1e-3};
  const TrainReport report = train_dual(p, inst.source, inst.target, cfg).second;
  ASSERT_EQ(report.objective.size(), 1000u);
  for (std::size_t t = 1; t < report.objective.size(); ++t)
    ASSERT_GE(report.objective[t], report.objective[t - 1] - 1e-12) << "step " << t;
}

TEST(TrainDual, ReachesDiscreteOracleOptimum) {
  const DiscreteInstance inst = random_discrete_instance(10, 10, 2, 11);
  const Matrix c = inst.cost_matrix();
  const DualAscentResult oracle = dual_ascent_generic(c, inst.source.weights, inst.target.weights, kl(1.0));
  ASSERT_TRUE(oracle.converged);
  const DualPair p = make_dual_pair(2, 2, {64, 64}, kl(1.0), inst.cost, 12);
  DualTrainConfig cfg;
  cfg.iterations = 5000;
  cfg.batch_size = 0;
  cfg.optimizer.lr = 1e-3;
  const auto [q, report] = train_dual(p, inst.source, inst.target, cfg);
  EXPECT_NEAR(report.final_objective, oracle.objective, 1e-2);
  EXPECT_LE(report.final_objective, oracle.objective + 1e-9);
  EXPECT_NEAR(report.final_objective, dual_objective_full(q, inst.source, inst.target), 1e-14);
}

TEST(TrainDual, MinibatchRunsAreSeedDeterministic) {
  const DiscreteInstance inst = random_discrete_instance(30, 30, 2, 5);
  const DualPair p = make_dual_pair(2, 2, {16}, kl(1.0), inst.cost, 6);
  DualTrainConfig cfg;
  cfg.iterations = 50;
  cfg.batch_size = 8;
  cfg.optimizer.lr = 1e-3;
  cfg.seed = 9;
  const auto a = train_dual(p, inst.source, inst.target, cfg);
  const auto b = train_dual(p, inst.source, inst.target, cfg);
  EXPECT_EQ(a.second.objective, b.second.objective);
  EXPECT_EQ(a.first.psi.layers[0].weight, b.first.psi.layers[0].weight);
}
