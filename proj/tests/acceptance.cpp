// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <thread>

#include "scones/checkpoint.hpp"
#include "scones/discrete.hpp"
#include "scones/harness.hpp"

using namespace scones;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt_num(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const fs::path kWork = fs::temp_directory_path() / "scones_acceptance";

const FDivKind kAllKinds[] = {FDivKind::kKL, FDivKind::kReverseKL, FDivKind::kPearsonChi2,
                              FDivKind::kSquaredHellinger, FDivKind::kJensenShannon, FDivKind::kGAN};

double random_dual_point(FDivKind kind, Rng& rng) {
  const double sup = conjugate_domain_sup(kind);
  if (std::isfinite(sup)) return sup - 0.01 - rng.uniform(0.0, 4.0);
  return rng.uniform(-4.0, 4.0);
}

bool close_rel(double fd, double an, double tol) { return std::abs(fd - an) <= tol * std::max(1.0, std::abs(an)); }

// ---------------------------------------------------------------------------

Outcome gaussian_benchmark() {
  ExperimentConfig c;
  c.dims = {2, 16};
  c.trials = 3;
  c.samples = 10000;
  c.out_dir = (kWork / "gaussian").string();
  c.threads = std::max(1u, std::thread::hardware_concurrency());
  const GaussianBenchResult r = run_gaussian_benchmark(c);
  Outcome o{true, ""};
  for (const auto& t : r.trials)
    if (t.status != "ok") o.pass = false;
  for (auto [d, cap] : {std::pair{2, 1.0}, std::pair{16, 5.0}}) {
    const auto s = r.find(d, "scones"), b = r.find(d, "bp");
    if (!s || !b || s->n != 3 || b->n != 3) return {false, "missing trials at d=" + std::to_string(d)};
    o.pass = o.pass && s->mean <= cap && b->mean >= 5.0 * s->mean;
    o.detail += "d=" + std::to_string(d) + " scones " + fmt_num("%.4g", s->mean) + " bp " + fmt_num("%.4g", b->mean) + "; ";
  }
  return o;
}

Outcome neural_dual_bound() {
  ExperimentConfig c;
  c.experiment = "discrete-validate";
  c.instances = 20;
  c.lambdas = {0.5, 1.0, 2.0};
  const auto rows = run_discrete_validation(c);
  int violations = 0, failed = 0;
  double worst_eps = 0.0, worst_slack = -INFINITY;
  for (const auto& r : rows) {
    if (r.status != "ok") {
      ++failed;
      continue;
    }
    if (r.plan_l1 > r.bound + 1e-9) ++violations;
    worst_eps = std::max(worst_eps, r.eps);
    worst_slack = std::max(worst_slack, r.plan_l1 - r.bound);
  }
  return {rows.size() == 20 && failed == 0 && violations == 0 && worst_eps <= 1e-2,
          std::to_string(violations) + " violations, " + std::to_string(failed) + " failed, max eps " +
              fmt_num("%.3g", worst_eps) + ", max l1-bound " + fmt_num("%.3g", worst_slack)};
}

Outcome strong_duality() {
  Rng rng(303);
  double worst_gap = 0.0, worst_l1 = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Eigen::Index n = 2 + Eigen::Index(rng.index(19)), m = 2 + Eigen::Index(rng.index(19));
    const double lambda = rng.uniform(0.1, 2.0);
    const DiscreteInstance inst = random_discrete_instance(n, m, 2, 5000 + k);
    const Matrix c = inst.cost_matrix();
    const Vector& a = inst.source.weights;
    const Vector& b = inst.target.weights;
    for (FDivKind kind : {FDivKind::kKL, FDivKind::kPearsonChi2}) {
      const Compatibility compat{kind, {lambda, std::nullopt}};
      const DualAscentResult r = dual_ascent_generic(c, a, b, compat);
      if (!r.converged) return {false, "dual ascent did not converge on instance " + std::to_string(k)};
      const Matrix plan = plan_from_duals(c, a, b, compat, r.duals);
      worst_gap = std::max(worst_gap, std::abs(primal_objective(c, a, b, kind, lambda, plan) - r.objective));
      if (kind == FDivKind::kKL)
        worst_l1 = std::max(worst_l1, (sinkhorn_kl(c, a, b, lambda, 1e-13).plan - plan).lpNorm<1>());
    }
  }
  return {worst_gap < 1e-7 && worst_l1 < 1e-6,
          "max gap " + fmt_num("%.3g", worst_gap) + ", max sinkhorn-ascent l1 " + fmt_num("%.3g", worst_l1)};
}

Outcome fdiv_registry() {
  Rng rng(404);
  int fy = 0, deriv = 0, klform = 0, convex = 0;
  for (FDivKind kind : kAllKinds)
    for (int k = 0; k < 500; ++k) {
      const double t = std::exp(rng.uniform(-4.0, 3.0));
      const double v = random_dual_point(kind, rng);
      if (primal_f(kind, t) + conjugate_triple(kind, v).f_star - t * v < -1e-8) ++fy;
    }
  for (FDivKind kind : kAllKinds)
    for (double lambda : {0.3, 1.0, 2.5})
      for (int k = 0; k < 100; ++k) {
        const RegParams p{lambda, std::nullopt};
        const double v = lambda * random_dual_point(kind, rng);
        if (kind == FDivKind::kPearsonChi2 && std::abs(v / lambda / 2.0 + 1.0) < 1e-3) continue;
        const double h = 1e-7 * std::max(1.0, std::abs(v));
        const double fd = (dual_penalty(kind, p, v + h) - dual_penalty(kind, p, v - h)) / (2.0 * h);
        if (!close_rel(fd, compatibility(kind, p, v).m, 1e-6)) ++deriv;
      }
  for (int k = 0; k < 1000; ++k) {
    const double lambda = std::exp(rng.uniform(-3.0, 3.0));
    const double v = lambda * rng.uniform(-20.0, 20.0);
    const double e = std::exp(v / lambda);
    if (std::abs(std::numbers::e * compatibility(FDivKind::kKL, {lambda, {}}, v).m - e) > 1e-12 * e) ++klform;
  }
  const double alpha = strong_convexity(FDivKind::kPearsonChi2).value_or(0.0);
  for (int k = 0; k < 100; ++k) {
    const Eigen::Index n = 2 + Eigen::Index(rng.index(15));
    Vector q(n), p0(n), p1(n);
    for (Eigen::Index i = 0; i < n; ++i) q(i) = rng.uniform(0.5, 1.5);
    q /= q.sum();
    for (Vector* p : {&p0, &p1}) {
      for (Eigen::Index i = 0; i < n; ++i) (*p)(i) = q(i) * rng.uniform(0.3, 3.0);
      *p /= p->sum();
    }
    double lin = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) lin += primal_f_prime(FDivKind::kPearsonChi2, p0(i) / q(i)) * (p1(i) - p0(i));
    const double l1 = (p1 - p0).lpNorm<1>();
    const Matrix qm = q, m0 = p0, m1 = p1;
    if (h_regularizer(FDivKind::kPearsonChi2, m1, qm) <
        h_regularizer(FDivKind::kPearsonChi2, m0, qm) + lin + 0.5 * alpha * l1 * l1 - 1e-12)
      ++convex;
  }
  return {alpha == 2.0 && fy + deriv + klform + convex == 0,
          "fenchel-young " + std::to_string(fy) + ", derivative " + std::to_string(deriv) + ", kl form " +
              std::to_string(klform) + ", chi2 convexity " + std::to_string(convex) + " violations"};
}

Outcome gradient_checks() {
  Rng rng(505);
  int bad_param = 0, bad_input = 0, bad_score = 0;
  const double h = 1e-5;
  auto out = [](const MlpSpec& s, const MlpParams& p, const Vector& x) { return mlp_forward(s, p, x)(0); };
  for (int c = 0; c < 50; ++c) {
    const MlpSpec s{{4, 8, 8, 1}, c % 2 ? Activation::kSigmoid : Activation::kLinear};
    MlpParams p = init_params(s, 1000 + c);
    for (auto& l : p.layers) l.bias = rng.normal_vector(l.bias.size()) * 0.3;
    const Vector x = rng.normal_vector(4);
    const LayerGrads g = mlp_param_grad(s, p, x, 1.0);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      for (Eigen::Index i = 0; i < p.layers[l].weight.size(); ++i) {
        MlpParams a = p, b = p;
        a.layers[l].weight.data()[i] += h;
        b.layers[l].weight.data()[i] -= h;
        if (!close_rel((out(s, a, x) - out(s, b, x)) / (2 * h), g[l].weight.data()[i], 1e-5)) ++bad_param;
      }
      for (Eigen::Index i = 0; i < p.layers[l].bias.size(); ++i) {
        MlpParams a = p, b = p;
        a.layers[l].bias(i) += h;
        b.layers[l].bias(i) -= h;
        if (!close_rel((out(s, a, x) - out(s, b, x)) / (2 * h), g[l].bias(i), 1e-5)) ++bad_param;
      }
    }
    const Vector gi = mlp_input_grad(s, p, x);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Vector a = x, b = x;
      a(j) += h;
      b(j) -= h;
      if (!close_rel((out(s, p, a) - out(s, p, b)) / (2 * h), gi(j), 1e-5)) ++bad_input;
    }
  }
  for (int k = 0; k < 50; ++k) {
    Compatibility compat{FDivKind::kKL, {rng.uniform(0.5, 3.0), std::nullopt}};
    if (k % 2) compat = {FDivKind::kPearsonChi2, {rng.uniform(0.5, 3.0), 10.0}};
    const DualPair pair = make_dual_pair(2, 2, {16, 16}, compat, CostKind::kSquaredL2, 2000 + k);
    const GaussianMeasure t{rng.normal_vector(2), detail::random_spd(2, rng, 0.5, 3.0)};
    const Vector x = rng.normal_vector(2), y = rng.normal_vector(2);
    auto log_joint = [&](const Vector& yy) {
      return std::log(compatibility(pair.compat, violation(pair, x, yy)).m) + gaussian_log_density(t, yy);
    };
    const Vector s = conditional_score(pair, make_gaussian_oracle(t), x, y);
    for (Eigen::Index j = 0; j < 2; ++j) {
      Vector a = y, b = y;
      a(j) += h;
      b(j) -= h;
      if (!close_rel((log_joint(a) - log_joint(b)) / (2 * h), s(j), 1e-5)) ++bad_score;
    }
  }
  return {bad_param + bad_input + bad_score == 0, "mismatches: param " + std::to_string(bad_param) + ", input " +
                                                      std::to_string(bad_input) + ", conditional score " +
                                                      std::to_string(bad_score)};
}

Outcome langevin() {
  const double eps = 0.1;
  Rng rng(606);
  const LangevinResult r =
      langevin_chain([](const Vector& v) { return Vector(-v); }, Vector::Zero(1), eps, 100000, rng, true);
  const Vector tail = r.trajectory.col(0).tail(r.trajectory.rows() - 1000);
  const double var = (tail.array() - tail.mean()).square().mean();
  const double expected = 1.0 / (1.0 - eps / 4.0);
  const double var_err = std::abs(var / expected - 1.0);

  // Trained d=2 pair from the benchmark run, exact target score.
  const fs::path ckpt = kWork / "gaussian" / "dual_d2_t0.bin";
  ProblemInstance inst = random_instance(2, derive_seed(0, "gaussian-d2_t0"));
  const JointGaussianPlan plan = entropic_plan(inst);
  DualPair pair;
  try {
    pair = load_dual_pair(ckpt.string());
  } catch (const IoError& e) {
    return {false, std::string("no trained d=2 pair: ") + e.what()};
  }
  SamplerConfig sc;
  sc.epsilon = 0.01;
  sc.steps = 3000;
  sc.seed = 66;
  sc.threads = std::max(1u, std::thread::hardware_concurrency());
  double worst_mean = 0.0, worst_cov = 0.0;
  const Vector sd = inst.source.cov.diagonal().cwiseSqrt();
  for (const Vector& x : {Vector(inst.source.mean), Vector(inst.source.mean + sd)}) {
    const GaussianMeasure oracle = conditional_of_joint(plan, x);
    const Matrix xs = x.transpose().replicate(10000, 1);
    const MeanCov mc = empirical_covariance(sample_scones(pair, make_gaussian_oracle(inst.target), xs, sc));
    worst_mean = std::max(worst_mean, (mc.mean - oracle.mean).norm() / std::sqrt(oracle.cov.trace()));
    worst_cov = std::max(worst_cov, (mc.cov - oracle.cov).norm() / oracle.cov.norm());
  }
  return {var_err <= 0.02 && worst_mean <= 0.05 && worst_cov <= 0.05,
          "variance rel err " + fmt_num("%.4f", var_err) + ", conditional mean err " + fmt_num("%.4f", worst_mean) +
              " (per sd), cov rel err " + fmt_num("%.4f", worst_cov)};
}

Outcome log_concavity() {
  Rng rng(707);
  double worst = -INFINITY;
  for (int k = 0; k < 50; ++k) {
    const Eigen::Index n = 2 + Eigen::Index(rng.index(30));
    const Matrix atoms = rng.normal_matrix(n, 2);
    const Vector phi = rng.normal_vector(n);
    Vector sigma(n);
    for (Eigen::Index i = 0; i < n; ++i) sigma(i) = rng.uniform(0.5, 1.5);
    sigma /= sigma.sum();
    const double lambda = rng.uniform(0.5, 3.0);
    worst = std::max(worst, logconcavity_check(atoms, phi, sigma, lambda, rng.normal_vector(2), rng.normal_vector(2))
                                .max_eigenvalue);
  }
  return {worst <= 1e-6, "max hessian eigenvalue " + fmt_num("%.3g", worst)};
}

Outcome gaussian_closed_form() {
  auto grid = [](double var, int n) {
    const double sd = std::sqrt(var);
    Matrix atoms(n, 1);
    Vector w(n);
    for (int i = 0; i < n; ++i) {
      atoms(i, 0) = -6.0 * sd + 12.0 * sd * i / (n - 1);
      w(i) = std::exp(-0.5 * atoms(i, 0) * atoms(i, 0) / var);
    }
    return std::pair{atoms, Vector(w / w.sum())};
  };
  const auto [xa, xw] = grid(1.0, 400);
  const auto [ya, yw] = grid(4.0, 400);
  const SinkhornResult s = sinkhorn_kl(cost_matrix(CostKind::kSquaredL2, xa, ya), xw, yw, 2.0);
  const Vector x = xa.col(0), y = ya.col(0);
  const double cross = x.dot(s.plan * y) - xw.dot(x) * yw.dot(y);
  const GaussianMeasure g1{Vector::Zero(1), Matrix::Constant(1, 1, 1.0)}, g4{Vector::Zero(1), Matrix::Constant(1, 1, 4.0)};
  const double grid_err = std::abs(cross - entropic_plan(g1, g4, 2.0).cross(0, 0));
  double limit_err = 0.0;
  for (int d : {1, 2, 4, 8}) {
    const ProblemInstance p = random_instance(d, 800 + d);
    limit_err = std::max(limit_err, entropic_plan(p.source, p.target, 1e7).cross.cwiseAbs().maxCoeff());
    const Matrix monge = monge_cross_covariance(p.source.cov, p.target.cov);
    limit_err = std::max(limit_err, (entropic_plan(p.source, p.target, 1e-6).cross - monge).cwiseAbs().maxCoeff());
  }
  return {grid_err <= 1e-2 && limit_err <= 1e-3,
          "grid sinkhorn err " + fmt_num("%.3g", grid_err) + ", limit err " + fmt_num("%.3g", limit_err)};
}

Outcome swiss_roll() {
  ExperimentConfig c;
  c.experiment = "swissroll";
  c.out_dir = (kWork / "swissroll").string();
  c.threads = std::max(1u, std::thread::hardware_concurrency());
  const SwissRollResult r = run_swissroll(c);
  return {r.energy_scones < r.energy_bp && r.energy_scones < 2.0 * r.energy_self,
          "energy scones " + fmt_num("%.4g", r.energy_scones) + " bp " + fmt_num("%.4g", r.energy_bp) + " self " +
              fmt_num("%.4g", r.energy_self)};
}

}  // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"gaussian benchmark BW-UVP", gaussian_benchmark},
      {"neural dual plan bound", neural_dual_bound},
      {"strong duality and oracle agreement", strong_duality},
      {"f-divergence registry", fdiv_registry},
      {"gradient checks", gradient_checks},
      {"langevin correctness", langevin},
      {"log-concavity", log_concavity},
      {"gaussian closed form", gaussian_closed_form},
      {"swiss roll", swiss_roll},
  };
  int failures = 0, index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s %d %s: %s (%.0fs)\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
