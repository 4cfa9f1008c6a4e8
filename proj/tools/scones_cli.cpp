// scones: entry point for the experiment pipelines.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "scones/harness.hpp"

using namespace scones;

namespace {

int report_gaussian(const GaussianBenchResult& r) {
  std::printf("%-5s %-7s %12s %10s %3s\n", "dim", "method", "bw_uvp", "sem", "n");
  for (const auto& s : r.summary)
    std::printf("%-5d %-7s %12.5g %10.3g %3zu\n", s.dim, s.method.c_str(), s.stats.mean, s.stats.sem, s.stats.n);
  for (const auto& t : r.trials)
    if (t.status != "ok") std::fprintf(stderr, "dim %d trial %d %s: %s\n", t.dim, t.trial, t.method.c_str(), t.status.c_str());
  return 0;
}

int report_discrete(const std::vector<DiscreteRow>& rows) {
  std::printf("%-4s %-6s %12s %12s %12s %12s %-5s\n", "inst", "lambda", "eps", "plan_l1", "bound", "gap", "holds");
  int failures = 0;
  for (const auto& r : rows) {
    if (r.status != "ok") {
      std::fprintf(stderr, "instance %d: %s\n", r.instance, r.status.c_str());
      ++failures;
      continue;
    }
    std::printf("%-4d %-6g %12.4g %12.4g %12.4g %12.4g %-5s\n", r.instance, r.lambda, r.eps, r.plan_l1, r.bound,
                r.duality_gap, r.holds ? "yes" : "no");
  }
  return failures ? int(ErrorCategory::kNumerical) : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional sampling with compatibility functions (SCONES)"};
  app.require_subcommand(1);
  ExperimentConfig cfg;
  std::string config_file;
  app.add_option("--config", config_file, "JSON config; command-line flags override it");

  // Flags are parsed into locals and applied after the config file.
  std::vector<int> dims;
  int trials = -1, samples = -1, nx = -1, ny = -1, iters_score = -1, iters_dual = -1, gaussian_dim = -1;
  std::uint64_t seed = 0, gaussian_seed = 0;
  double lambda = 0.0;
  std::string out, kind, method, checkpoint, source_csv, score_checkpoint;
  unsigned threads = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--threads", threads, "sampler threads");
  };
  auto* gb = app.add_subcommand("gaussian-bench", "BW-UVP of SCONES and BP on random Gaussian pairs");
  gb->add_option("--dim", dims, "dimension (repeatable)");
  gb->add_option("--trials", trials, "random instances per dimension");
  gb->add_option("--samples", samples, "samples per method and instance");
  gb->add_option("--lambda", lambda, "regularization (default 2d)");
  gb->add_option("--method", method, "scones, bp or both");
  common(gb);
  auto* dv = app.add_subcommand("discrete-validate", "neural duals against exact discrete oracles");
  dv->add_option("--nx", nx, "source atoms");
  dv->add_option("--ny", ny, "target atoms");
  dv->add_option("--kind", kind, "kl or chi2");
  dv->add_option("--lambda", lambda, "regularization");
  common(dv);
  auto* sr = app.add_subcommand("swissroll", "unit Gaussian to swiss roll, SCONES vs BP");
  sr->add_option("--iters-score", iters_score, "score-matching iterations");
  sr->add_option("--iters-dual", iters_dual, "dual training iterations");
  common(sr);
  auto* sm = app.add_subcommand("sample", "sample from a saved checkpoint");
  sm->add_option("--checkpoint", checkpoint, "dual pair or BP map checkpoint")->required();
  sm->add_option("--source-csv", source_csv, "source points, one per row")->required();
  sm->add_option("--score-checkpoint", score_checkpoint, "score net for the target");
  sm->add_option("--gaussian-dim", gaussian_dim, "exact Gaussian target from a benchmark instance");
  sm->add_option("--gaussian-seed", gaussian_seed, "seed of that instance");
  common(sm);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : int(ErrorCategory::kInvalidArgument);
  }

  try {
    if (!config_file.empty()) cfg = load_config(config_file);
    CLI::App* sub = app.get_subcommands().front();
    cfg.experiment = sub->get_name();
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--out")) cfg.out_dir = out;
    if (sub->count("--threads")) cfg.threads = threads;
    if (sub == gb) {
      if (!dims.empty()) cfg.dims = dims;
      if (gb->count("--trials")) cfg.trials = trials;
      if (gb->count("--samples")) cfg.samples = samples;
      if (gb->count("--lambda")) cfg.lambda = lambda;
      if (gb->count("--method")) cfg.method = method;
      return report_gaussian(run_gaussian_benchmark(cfg));
    }
    if (sub == dv) {
      if (dv->count("--nx")) cfg.nx = nx;
      if (dv->count("--ny")) cfg.ny = ny;
      if (dv->count("--kind")) cfg.kind = kind;
      if (dv->count("--lambda")) cfg.lambdas = {lambda};
      return report_discrete(run_discrete_validation(cfg));
    }
    if (sub == sr) {
      if (sr->count("--iters-score")) cfg.iters_score = iters_score;
      if (sr->count("--iters-dual")) cfg.iters_dual = iters_dual;
      const SwissRollResult r = run_swissroll(cfg);
      std::printf("energy distance to held-out target: scones %.6g  bp %.6g  target-self %.6g\n", r.energy_scones,
                  r.energy_bp, r.energy_self);
      return 0;
    }
    cfg.checkpoint = checkpoint;
    cfg.source_csv = source_csv;
    if (sm->count("--score-checkpoint")) cfg.score_checkpoint = score_checkpoint;
    if (sm->count("--gaussian-dim")) cfg.gaussian_dim = gaussian_dim;
    if (sm->count("--gaussian-seed")) cfg.gaussian_seed = gaussian_seed;
    const Matrix joint = run_sample(cfg);
    if (cfg.out_dir.empty()) {
      const CsvTable t = matrix_table(joint, "x", joint.cols() / 2, "y");
      for (std::size_t i = 0; i < t.header.size(); ++i) std::cout << (i ? "," : "") << t.header[i];
      std::cout << '\n';
      for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) std::cout << (i ? "," : "") << r[i];
        std::cout << '\n';
      }
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return int(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
