#pragma once

// Experiment pipelines behind the CLI: Gaussian benchmark, discrete
// validation, swiss roll, and sampling from saved checkpoints. Every run
// writes a config echo that reproduces it exactly.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scones/baselines.hpp"
#include "scones/checkpoint.hpp"
#include "scones/discrete.hpp"
#include "scones/error.hpp"
#include "scones/gaussian.hpp"
#include "scones/neural_dual.hpp"
#include "scones/sampler.hpp"
#include "scones/score.hpp"

namespace scones {

struct ExperimentConfig {
  std::string experiment = "gaussian-bench";
  std::string out_dir;  // empty: nothing is written
  std::uint64_t seed = 0;
  unsigned threads = 1;

  // gaussian-bench
  std::vector<int> dims{1, 2, 8, 16};
  int trials = 3;
  int samples = 10000;
  std::optional<double> lambda;  // default 2d
  std::string method = "both";   // scones | bp | both
  int pool_size = 20000;
  std::vector<int> hidden{64, 64};
  int dual_iters = 2000;
  int dual_batch = 1000;
  double dual_lr = 1e-3;
  double sampler_epsilon = 0.05;
  int sampler_steps = 2000;
  int bp_iters = 2000;
  int bp_batch = 256;
  double bp_lr = 1e-3;

  // discrete-validate
  int nx = 10;
  int ny = 10;
  int atom_dim = 2;
  std::string kind = "kl";
  std::vector<double> lambdas{0.5, 1.0, 2.0};
  int instances = 20;
  double chi2_alpha = 1000.0;
  int discrete_iters = 5000;
  std::vector<int> discrete_hidden{64, 64};

  // swissroll
  int iters_score = 20000;
  int score_batch = 1024;
  double score_final_lr_fraction = 0.01;
  int iters_dual = 2000;
  int swiss_train = 10000;
  int swiss_eval = 1000;
  double swiss_lambda = 2.0;
  std::vector<int> score_hidden{128, 128};
  double tau_first = 1.0;
  double tau_last = 0.01;
  int tau_count = 10;
  double swiss_epsilon = 2e-5;
  int swiss_steps = 100;

  // sample
  std::string checkpoint;
  std::string source_csv;
  std::string score_checkpoint;
  int gaussian_dim = 0;
  std::uint64_t gaussian_seed = 0;
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["dims"] = c.dims;
  j["trials"] = c.trials;
  j["samples"] = c.samples;
  j["lambda"] = c.lambda ? nlohmann::json(*c.lambda) : nlohmann::json(nullptr);
  j["method"] = c.method;
  j["pool_size"] = c.pool_size;
  j["hidden"] = c.hidden;
  j["dual_iters"] = c.dual_iters;
  j["dual_batch"] = c.dual_batch;
  j["dual_lr"] = c.dual_lr;
  j["sampler_epsilon"] = c.sampler_epsilon;
  j["sampler_steps"] = c.sampler_steps;
  j["bp_iters"] = c.bp_iters;
  j["bp_batch"] = c.bp_batch;
  j["bp_lr"] = c.bp_lr;
  j["nx"] = c.nx;
  j["ny"] = c.ny;
  j["atom_dim"] = c.atom_dim;
  j["kind"] = c.kind;
  j["lambdas"] = c.lambdas;
  j["instances"] = c.instances;
  j["chi2_alpha"] = c.chi2_alpha;
  j["discrete_iters"] = c.discrete_iters;
  j["discrete_hidden"] = c.discrete_hidden;
  j["iters_score"] = c.iters_score;
  j["score_batch"] = c.score_batch;
  j["score_final_lr_fraction"] = c.score_final_lr_fraction;
  j["iters_dual"] = c.iters_dual;
  j["swiss_train"] = c.swiss_train;
  j["swiss_eval"] = c.swiss_eval;
  j["swiss_lambda"] = c.swiss_lambda;
  j["swiss_jitter"] = kSwissRollJitter;
  j["score_hidden"] = c.score_hidden;
  j["tau_first"] = c.tau_first;
  j["tau_last"] = c.tau_last;
  j["tau_count"] = c.tau_count;
  j["swiss_epsilon"] = c.swiss_epsilon;
  j["swiss_steps"] = c.swiss_steps;
  j["checkpoint"] = c.checkpoint;
  j["source_csv"] = c.source_csv;
  j["score_checkpoint"] = c.score_checkpoint;
  j["gaussian_dim"] = c.gaussian_dim;
  j["gaussian_seed"] = c.gaussian_seed;
  return j;
}

/// Keys absent from j keep their current values; unknown keys are rejected.
inline void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
  const nlohmann::json known = to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw InvalidArgument("config: unknown key '" + it.key() + "'");
    if (it.key() == "swiss_jitter" && it.value().get<double>() != kSwissRollJitter)
      throw InvalidArgument("config: swiss_jitter is fixed at " + std::to_string(kSwissRollJitter));
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  try {
    get("experiment", c.experiment);
    get("out_dir", c.out_dir);
    get("seed", c.seed);
    get("threads", c.threads);
    get("dims", c.dims);
    get("trials", c.trials);
    get("samples", c.samples);
    if (j.contains("lambda")) {
      if (j["lambda"].is_null()) {
        c.lambda.reset();
      } else {
        c.lambda = j["lambda"].get<double>();
      }
    }
    get("method", c.method);
    get("pool_size", c.pool_size);
    get("hidden", c.hidden);
    get("dual_iters", c.dual_iters);
    get("dual_batch", c.dual_batch);
    get("dual_lr", c.dual_lr);
    get("sampler_epsilon", c.sampler_epsilon);
    get("sampler_steps", c.sampler_steps);
    get("bp_iters", c.bp_iters);
    get("bp_batch", c.bp_batch);
    get("bp_lr", c.bp_lr);
    get("nx", c.nx);
    get("ny", c.ny);
    get("atom_dim", c.atom_dim);
    get("kind", c.kind);
    get("lambdas", c.lambdas);
    get("instances", c.instances);
    get("chi2_alpha", c.chi2_alpha);
    get("discrete_iters", c.discrete_iters);
    get("discrete_hidden", c.discrete_hidden);
    get("iters_score", c.iters_score);
    get("score_batch", c.score_batch);
    get("score_final_lr_fraction", c.score_final_lr_fraction);
    get("iters_dual", c.iters_dual);
    get("swiss_train", c.swiss_train);
    get("swiss_eval", c.swiss_eval);
    get("swiss_lambda", c.swiss_lambda);
    get("score_hidden", c.score_hidden);
    get("tau_first", c.tau_first);
    get("tau_last", c.tau_last);
    get("tau_count", c.tau_count);
    get("swiss_epsilon", c.swiss_epsilon);
    get("swiss_steps", c.swiss_steps);
    get("checkpoint", c.checkpoint);
    get("source_csv", c.source_csv);
    get("score_checkpoint", c.score_checkpoint);
    get("gaussian_dim", c.gaussian_dim);
    get("gaussian_seed", c.gaussian_seed);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("config '" + path + "': " + e.what());
  }
  ExperimentConfig c;
  apply_json(c, j);
  return c;
}

inline void validate(const ExperimentConfig& c) {
  static const std::set<std::string> kinds{"gaussian-bench", "discrete-validate", "swissroll", "sample"};
  if (!kinds.count(c.experiment)) throw InvalidArgument("config: unknown experiment '" + c.experiment + "'");
  for (int d : c.dims)
    if (d < 1 || d > 64) throw InvalidArgument("config: dims must lie in [1, 64]");
  if (c.trials < 0 || c.samples < 2 || c.pool_size < 2) throw InvalidArgument("config: bad trial/sample counts");
  if (c.lambda && !(*c.lambda > 0.0)) throw InvalidArgument("config: lambda must be positive");
  if (c.method != "scones" && c.method != "bp" && c.method != "both")
    throw InvalidArgument("config: method must be scones, bp or both");
  if (c.nx < 1 || c.ny < 1 || c.nx > 20 || c.ny > 20) throw InvalidArgument("config: discrete sizes must lie in [1, 20]");
  if (c.kind != "kl" && c.kind != "chi2") throw InvalidArgument("config: kind must be kl or chi2");
  if (c.lambdas.empty()) throw InvalidArgument("config: lambdas must not be empty");
  for (double l : c.lambdas)
    if (!(l > 0.0)) throw InvalidArgument("config: lambdas must be positive");
  if (c.dual_iters < 0 || c.bp_iters < 0 || c.iters_score < 0 || c.iters_dual < 0 || c.discrete_iters < 0)
    throw InvalidArgument("config: iteration counts must be >= 0");
  if (c.dual_batch < 1 || c.bp_batch < 1 || c.score_batch < 1) throw InvalidArgument("config: batch sizes must be >= 1");
  if (c.sampler_steps < 1 || c.swiss_steps < 1 || !(c.sampler_epsilon > 0.0) || !(c.swiss_epsilon > 0.0))
    throw InvalidArgument("config: sampler step counts and sizes must be positive");
  if (c.tau_count < 2 || !(c.tau_first > c.tau_last) || !(c.tau_last > 0.0))
    throw InvalidArgument("config: need tau_first > tau_last > 0 and tau_count >= 2");
  if (c.experiment == "sample") {
    if (c.checkpoint.empty() || !std::filesystem::exists(c.checkpoint))
      throw InvalidArgument("config: sample needs an existing checkpoint");
    if (c.source_csv.empty() || !std::filesystem::exists(c.source_csv))
      throw InvalidArgument("config: sample needs an existing source csv");
  }
}

/// Derives a 64-bit seed from the master seed and a label.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& label) {
  return Rng(master).substream(label).engine()();
}

// ---------------------------------------------------------------- CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path + "'");
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  if (!os) throw IoError("write to '" + path + "' failed");
}

inline CsvTable matrix_table(const Matrix& m, const std::string& prefix_a, Eigen::Index split,
                             const std::string& prefix_b) {
  CsvTable t;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    t.header.push_back(j < split ? prefix_a + std::to_string(j) : prefix_b + std::to_string(j - split));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> r;
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(fmt(m(i, j)));
    t.rows.push_back(std::move(r));
  }
  return t;
}

/// Numeric CSV; a first line that does not parse as numbers is a header.
inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        r.push_back(std::stod(cell, &used));
        if (used != cell.size() && cell.find_first_not_of(" \t\r", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw IoError("'" + path + "': non-numeric row");
    }
    first = false;
    if (!rows.empty() && r.size() != rows.front().size()) throw IoError("'" + path + "': ragged rows");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw IoError("'" + path + "': no data rows");
  Matrix m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
  return m;
}

// ---------------------------------------------------------------- metrics

inline double mean_pair_distance(const Matrix& a, const Matrix& b) {
  return cost_matrix(CostKind::kSquaredL2, a, b).array().sqrt().mean();
}

/// V-statistic 2 E|A - B| - E|A - A'| - E|B - B'|; nonnegative, and it
/// keeps its O(1/n) finite-sample floor so a split of one sample against
/// itself gives a usable baseline.
inline double energy_distance(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols() || a.rows() == 0 || b.rows() == 0) throw InvalidArgument("energy_distance: bad shapes");
  return 2.0 * mean_pair_distance(a, b) - mean_pair_distance(a, a) - mean_pair_distance(b, b);
}

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
  std::size_t n = 0;
};

inline MeanSem mean_sem(const std::vector<double>& v) {
  MeanSem out;
  out.n = v.size();
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= double(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.sem = std::sqrt(ss / double(v.size() - 1) / double(v.size()));
  }
  return out;
}

// ---------------------------------------------------------------- run setup

inline void prepare_out_dir(const ExperimentConfig& c) {
  if (c.out_dir.empty()) return;
  std::filesystem::create_directories(c.out_dir);
  std::ofstream os(c.out_dir + "/config.json", std::ios::trunc);
  if (!os) throw IoError("cannot write config echo in '" + c.out_dir + "'");
  os << to_json(c).dump(2) << '\n';
}

inline std::string out_path(const ExperimentConfig& c, const std::string& name) { return c.out_dir + "/" + name; }

// ---------------------------------------------------------------- gaussian-bench

struct GaussianTrialRow {
  int dim = 0;
  int trial = 0;
  std::string method;
  double bw_uvp = std::nan("");
  std::string status = "ok";
};

struct GaussianSummaryRow {
  int dim = 0;
  std::string method;
  MeanSem stats;
};

struct GaussianBenchResult {
  std::vector<GaussianTrialRow> trials;
  std::vector<GaussianSummaryRow> summary;

  std::optional<MeanSem> find(int dim, const std::string& method) const {
    for (const auto& s : summary)
      if (s.dim == dim && s.method == method) return s.stats;
    return std::nullopt;
  }
};

inline GaussianBenchResult run_gaussian_benchmark(const ExperimentConfig& cfg) {
  validate(cfg);
  prepare_out_dir(cfg);
  GaussianBenchResult res;
  const bool want_scones = cfg.method != "bp", want_bp = cfg.method != "scones";
  for (int d : cfg.dims) {
    for (int trial = 0; trial < cfg.trials; ++trial) {
      const std::string tag = "d" + std::to_string(d) + "_t" + std::to_string(trial);
      const std::uint64_t seed = derive_seed(cfg.seed, "gaussian-" + tag);
      auto fail_rows = [&](const std::string& msg) {
        for (const char* m : {"scones", "bp"})
          if ((std::string(m) == "scones" && want_scones) || (std::string(m) == "bp" && want_bp))
            res.trials.push_back({d, trial, m, std::nan(""), "failed: " + msg});
      };
      try {
        ProblemInstance inst = random_instance(d, seed);
        if (cfg.lambda) inst.lambda = *cfg.lambda;
        const JointGaussianPlan plan = entropic_plan(inst);
        Rng rng = Rng(seed).substream("data");
        const Matrix src_chol = psd_factor(inst.source.cov), tgt_chol = psd_factor(inst.target.cov);
        const auto source = EmpiricalMeasure::uniform(sample_gaussian(inst.source.mean, src_chol, cfg.pool_size, rng));
        const auto target = EmpiricalMeasure::uniform(sample_gaussian(inst.target.mean, tgt_chol, cfg.pool_size, rng));
        const Compatibility compat{FDivKind::kKL, {inst.lambda, std::nullopt}};
        DualPair pair = make_dual_pair(d, d, cfg.hidden, compat, CostKind::kSquaredL2, derive_seed(seed, "init"));
        DualTrainConfig tc;
        tc.iterations = std::size_t(cfg.dual_iters);
        tc.batch_size = std::size_t(cfg.dual_batch);
        tc.optimizer.lr = cfg.dual_lr;
        tc.seed = derive_seed(seed, "train");
        pair = train_dual(std::move(pair), source, target, tc).first;
        const Matrix xs = sample_gaussian(inst.source.mean, src_chol, cfg.samples, rng);
        Matrix joint(xs.rows(), 2 * d);
        if (!cfg.out_dir.empty()) save_dual_pair(out_path(cfg, "dual_" + tag + ".bin"), pair);
        if (want_scones) {
          SamplerConfig sc;
          sc.epsilon = cfg.sampler_epsilon;
          sc.steps = std::size_t(cfg.sampler_steps);
          sc.seed = derive_seed(seed, "sample");
          sc.threads = cfg.threads;
          joint << xs, sample_scones(pair, make_gaussian_oracle(inst.target), xs, sc);
          res.trials.push_back({d, trial, "scones", bw_uvp(empirical_covariance(joint).cov, plan), "ok"});
          if (!cfg.out_dir.empty()) write_csv(out_path(cfg, "samples_scones_" + tag + ".csv"), matrix_table(joint, "x", d, "y"));
        }
        if (want_bp) {
          BaryConfig bc;
          bc.hidden = cfg.hidden;
          bc.iterations = std::size_t(cfg.bp_iters);
          bc.batch_size = std::size_t(cfg.bp_batch);
          bc.optimizer.lr = cfg.bp_lr;
          bc.seed = derive_seed(seed, "bp");
          const BaryMap t = train_barycentric(pair, source, target, bc).first;
          joint << xs, bary_map_eval(t, xs);
          res.trials.push_back({d, trial, "bp", bw_uvp(empirical_covariance(joint).cov, plan), "ok"});
          if (!cfg.out_dir.empty()) {
            save_bary_map(out_path(cfg, "bp_" + tag + ".bin"), t);
            write_csv(out_path(cfg, "samples_bp_" + tag + ".csv"), matrix_table(joint, "x", d, "y"));
          }
        }
      } catch (const Error& e) {
        fail_rows(e.what());
      }
    }
    for (const char* m : {"scones", "bp"}) {
      std::vector<double> vals;
      bool present = false;
      for (const auto& r : res.trials)
        if (r.dim == d && r.method == m) {
          present = true;
          if (r.status == "ok") vals.push_back(r.bw_uvp);
        }
      if (present) res.summary.push_back({d, m, mean_sem(vals)});
    }
  }
  if (!cfg.out_dir.empty()) {
    CsvTable t{{"dim", "trial", "method", "bw_uvp", "status"}, {}};
    for (const auto& r : res.trials)
      t.rows.push_back({std::to_string(r.dim), std::to_string(r.trial), r.method, fmt(r.bw_uvp), r.status});
    write_csv(out_path(cfg, "gaussian_trials.csv"), t);
    CsvTable s{{"dim", "method", "mean_bw_uvp", "sem", "n"}, {}};
    for (const auto& r : res.summary)
      s.rows.push_back({std::to_string(r.dim), r.method, fmt(r.stats.mean), fmt(r.stats.sem), std::to_string(r.stats.n)});
    write_csv(out_path(cfg, "gaussian_summary.csv"), s);
  }
  return res;
}

// ---------------------------------------------------------------- discrete-validate

struct DiscreteRow {
  int instance = 0;
  double lambda = 0.0;
  double oracle_objective = 0.0;  // J*
  double neural_objective = 0.0;  // J(phi_hat, psi_hat)
  double eps = 0.0;
  double plan_l1 = 0.0;  // |pi_hat - pi*|_1
  double bound = 0.0;    // sqrt(2 eps / s)
  bool holds = false;
  double duality_gap = std::nan("");  // |K(pi*) - J*|
  double oracle_l1 = std::nan("");    // Sinkhorn vs generic ascent
  std::string status = "ok";
};

inline std::vector<DiscreteRow> run_discrete_validation(const ExperimentConfig& cfg) {
  validate(cfg);
  prepare_out_dir(cfg);
  std::vector<DiscreteRow> rows;
  const FDivKind kind = fdiv_kind_from_string(cfg.kind);
  for (int i = 0; i < cfg.instances; ++i) {
    DiscreteRow row;
    row.instance = i;
    row.lambda = cfg.lambdas[std::size_t(i) % cfg.lambdas.size()];
    const std::uint64_t seed = derive_seed(cfg.seed, "discrete-" + std::to_string(i));
    try {
      const DiscreteInstance inst = random_discrete_instance(cfg.nx, cfg.ny, cfg.atom_dim, seed);
      const Matrix c = inst.cost_matrix();
      const Vector& a = inst.source.weights;
      const Vector& b = inst.target.weights;
      const Compatibility hard{kind, {row.lambda, std::nullopt}};
      const DualAscentResult oracle = dual_ascent_generic(c, a, b, hard);
      if (!oracle.converged) throw NumericalError("dual ascent oracle did not converge");
      const TransportPlan plan_star = plan_from_duals(c, a, b, hard, oracle.duals);
      row.oracle_objective = oracle.objective;
      row.duality_gap = std::abs(primal_objective(c, a, b, kind, row.lambda, plan_star) - oracle.objective);
      if (kind == FDivKind::kKL) {
        const SinkhornResult sk = sinkhorn_kl(c, a, b, row.lambda, 1e-13);
        row.oracle_l1 = (sk.plan - plan_star).lpNorm<1>();
        row.duality_gap = std::abs(primal_objective(c, a, b, kind, row.lambda, sk.plan) - oracle.objective);
      }
      Compatibility trained = hard;
      if (kind == FDivKind::kPearsonChi2) trained.params.chi2_softplus_alpha = cfg.chi2_alpha;
      DualPair pair = make_dual_pair(cfg.atom_dim, cfg.atom_dim, cfg.discrete_hidden, trained, inst.cost,
                                     derive_seed(seed, "init"));
      DualTrainConfig tc;
      tc.iterations = std::size_t(cfg.discrete_iters);
      tc.batch_size = 0;
      tc.optimizer.lr = cfg.dual_lr;
      tc.seed = derive_seed(seed, "train");
      pair = train_dual(std::move(pair), inst.source, inst.target, tc).first;
      const DualVectors approx{pair.phi_values(inst.source.atoms), pair.psi_values(inst.target.atoms)};
      // Stability is measured under the hard regularizer the oracle solves.
      const StabilityResult st = stability_check(c, a, b, hard, approx, oracle.objective, plan_star);
      row.neural_objective = dual_objective(c, a, b, hard, approx);
      row.eps = st.eps;
      row.plan_l1 = st.lhs;
      row.bound = st.rhs;
      row.holds = st.holds;
      if (kind == FDivKind::kPearsonChi2)
        row.plan_l1 = (plan_from_duals(c, a, b, trained, approx) - plan_star).lpNorm<1>();
    } catch (const Error& e) {
      row.status = std::string("failed: ") + e.what();
    }
    rows.push_back(row);
  }
  if (!cfg.out_dir.empty()) {
    CsvTable t{{"instance", "lambda", "J_star", "J_hat", "eps", "plan_l1", "bound", "holds", "duality_gap",
                "oracle_l1", "status"},
               {}};
    for (const auto& r : rows)
      t.rows.push_back({std::to_string(r.instance), fmt(r.lambda), fmt(r.oracle_objective), fmt(r.neural_objective),
                        fmt(r.eps), fmt(r.plan_l1), fmt(r.bound), r.holds ? "true" : "false", fmt(r.duality_gap),
                        fmt(r.oracle_l1), r.status});
    write_csv(out_path(cfg, "discrete_validation.csv"), t);
  }
  return rows;
}

// ---------------------------------------------------------------- swissroll

struct SwissRollResult {
  double energy_scones = 0.0;
  double energy_bp = 0.0;
  double energy_self = 0.0;  // two disjoint held-out target halves
  Matrix scones_samples;     // (x, y) rows
  Matrix bp_samples;
};

inline SwissRollResult run_swissroll(const ExperimentConfig& cfg) {
  validate(cfg);
  prepare_out_dir(cfg);
  Rng rng = Rng(cfg.seed).substream("swissroll");
  Rng data_rng = rng.substream("data");
  const Matrix train = swiss_roll_data(cfg.swiss_train, kSwissRollJitter, data_rng);
  const Matrix held_a = swiss_roll_data(cfg.swiss_eval, kSwissRollJitter, data_rng);
  const Matrix held_b = swiss_roll_data(cfg.swiss_eval, kSwissRollJitter, data_rng);
  Rng src_rng = rng.substream("source");
  const Matrix source_pool = src_rng.normal_matrix(cfg.swiss_train, 2);
  const Matrix xs = src_rng.normal_matrix(cfg.swiss_eval, 2);

  const NoiseSchedule schedule = geometric_schedule(cfg.tau_first, cfg.tau_last, std::size_t(cfg.tau_count));
  DsmConfig dc;
  dc.levels = schedule;
  dc.iterations = std::size_t(cfg.iters_score);
  dc.batch_size = std::size_t(cfg.score_batch);
  dc.final_lr_fraction = cfg.score_final_lr_fraction;
  dc.seed = derive_seed(cfg.seed, "score");
  ScoreNet net = make_score_net(2, cfg.score_hidden, true, derive_seed(cfg.seed, "score-init"));
  net = train_score(train, std::move(net), dc).first;

  const auto source = EmpiricalMeasure::uniform(source_pool);
  const auto target = EmpiricalMeasure::uniform(train);
  DualPair pair = make_dual_pair(2, 2, cfg.hidden, {FDivKind::kKL, {cfg.swiss_lambda, std::nullopt}},
                                 CostKind::kSquaredL2, derive_seed(cfg.seed, "dual-init"));
  DualTrainConfig tc;
  tc.iterations = std::size_t(cfg.iters_dual);
  tc.batch_size = std::size_t(cfg.dual_batch);
  tc.optimizer.lr = cfg.dual_lr;
  tc.seed = derive_seed(cfg.seed, "dual");
  pair = train_dual(std::move(pair), source, target, tc).first;

  SamplerConfig sc;
  sc.epsilon = cfg.swiss_epsilon;
  sc.steps = std::size_t(cfg.swiss_steps);
  sc.schedule = schedule;
  sc.step_scaling = StepScaling::kLevelSquared;
  sc.denoise_final = true;
  sc.seed = derive_seed(cfg.seed, "sample");
  sc.threads = cfg.threads;
  const ScoreOracle oracle = make_score_oracle(net);
  const Matrix ys = sample_scones(pair, oracle, xs, sc);

  BaryConfig bc;
  bc.hidden = cfg.hidden;
  bc.iterations = std::size_t(cfg.bp_iters);
  bc.batch_size = std::size_t(cfg.bp_batch);
  bc.optimizer.lr = cfg.bp_lr;
  bc.seed = derive_seed(cfg.seed, "bp");
  const BaryMap t = train_barycentric(pair, source, target, bc).first;
  const Matrix bp = bary_map_eval(t, xs);

  SwissRollResult res;
  res.energy_scones = energy_distance(ys, held_a);
  res.energy_bp = energy_distance(bp, held_a);
  res.energy_self = energy_distance(held_b, held_a);
  res.scones_samples.resize(xs.rows(), 4);
  res.scones_samples << xs, ys;
  res.bp_samples.resize(xs.rows(), 4);
  res.bp_samples << xs, bp;
  if (!cfg.out_dir.empty()) {
    save_dual_pair(out_path(cfg, "dual.bin"), pair);
    save_score_net(out_path(cfg, "score.bin"), net);
    save_bary_map(out_path(cfg, "bp.bin"), t);
    write_csv(out_path(cfg, "swissroll_scones.csv"), matrix_table(res.scones_samples, "x", 2, "y"));
    write_csv(out_path(cfg, "swissroll_bp.csv"), matrix_table(res.bp_samples, "x", 2, "y"));
    write_csv(out_path(cfg, "swissroll_target.csv"), matrix_table(held_a, "y", 2, "y"));
    write_csv(out_path(cfg, "swissroll_metrics.csv"),
              {{"method", "energy_distance"},
               {{"scones", fmt(res.energy_scones)}, {"bp", fmt(res.energy_bp)}, {"target-self", fmt(res.energy_self)}}});
  }
  return res;
}

// ---------------------------------------------------------------- sample

inline std::array<char, 4> checkpoint_magic(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::array<char, 4> m{};
  if (!is.read(m.data(), 4)) throw IoError("'" + path + "': too short for a checkpoint");
  return m;
}

/// Samples from a saved dual pair (SCONES) or barycentric map (BP) for the
/// rows of a source CSV. Returns (x, y) rows.
inline Matrix run_sample(const ExperimentConfig& cfg) {
  validate(cfg);
  prepare_out_dir(cfg);
  const Matrix xs = read_matrix_csv(cfg.source_csv);
  Matrix ys;
  if (checkpoint_magic(cfg.checkpoint) == kBaryMagic) {
    ys = bary_map_eval(load_bary_map(cfg.checkpoint), xs);
  } else {
    const DualPair pair = load_dual_pair(cfg.checkpoint);
    SamplerConfig sc;
    sc.seed = derive_seed(cfg.seed, "sample");
    sc.threads = cfg.threads;
    ScoreOracle oracle;
    if (!cfg.score_checkpoint.empty()) {
      oracle = make_score_oracle(load_score_net(cfg.score_checkpoint));
      sc.schedule = geometric_schedule(cfg.tau_first, cfg.tau_last, std::size_t(cfg.tau_count));
      sc.step_scaling = StepScaling::kLevelSquared;
      sc.denoise_final = true;
      sc.epsilon = cfg.swiss_epsilon;
      sc.steps = std::size_t(cfg.swiss_steps);
    } else if (cfg.gaussian_dim > 0) {
      ProblemInstance inst = random_instance(cfg.gaussian_dim, cfg.gaussian_seed);
      oracle = make_gaussian_oracle(inst.target);
      sc.epsilon = cfg.sampler_epsilon;
      sc.steps = std::size_t(cfg.sampler_steps);
    } else {
      throw InvalidArgument("sample: need a score checkpoint or a gaussian target (gaussian_dim, gaussian_seed)");
    }
    ys = sample_scones(pair, oracle, xs, sc);
  }
  Matrix joint(xs.rows(), xs.cols() + ys.cols());
  joint << xs, ys;
  if (!cfg.out_dir.empty()) write_csv(out_path(cfg, "samples.csv"), matrix_table(joint, "x", xs.cols(), "y"));
  return joint;
}

}  // namespace scones
