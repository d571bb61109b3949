// Command-line front end: generate datasets, run filters, sweep the full
// profile × seed grid, or recompute comparisons from runs already on disk.
//
// Exit codes: 0 success, 1 command-line error, 2 configuration error,
// 3 data error, 4 numerical error.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsekit/dsekit.hpp"

namespace {

int category_exit_code(const std::string& category) {
  if (category == "config") return 2;
  if (category == "data") return 3;
  if (category == "numeric") return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic state estimation experiments for synchronous generators"};
  app.require_subcommand(1);

  std::string configs_dir = "configs";
  app.add_option("--configs", configs_dir,
                 "configs root holding params/, profiles/, scenarios/, experiments/")
      ->capture_default_str();

  std::vector<std::string> set_exprs;
  app.add_option("--set", set_exprs,
                 "override a config value by dotted path, e.g. --set huber_c=2.0 or "
                 "--set scenario.duration=10");

  std::string experiment;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  bool timing = false;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", experiment, "experiment name or path to an experiment .json")
        ->required();
    cmd->add_option("--seed", seeds, "replace the configured seed list");
    cmd->add_option("--out", out_dir, "replace the configured output directory");
    cmd->add_flag("--timing", timing, "print per-step timing after the run");
  };
  CLI::App* generate = app.add_subcommand("generate", "synthesize measurement datasets only");
  CLI::App* run = app.add_subcommand("run", "filter one noise profile and write traces/metrics");
  CLI::App* sweep = app.add_subcommand("sweep", "run every configured profile and seed");
  add_common(generate);
  add_common(run);
  add_common(sweep);

  CLI::App* compare =
      app.add_subcommand("compare", "recompute comparison metrics from run directories");
  // Let --configs / --set appear after the subcommand as well as before it.
  for (CLI::App* cmd : {generate, run, sweep, compare}) cmd->fallthrough();
  std::vector<std::string> run_dirs;
  std::string compare_out = "out/compare";
  std::size_t warmup = 0;
  std::string baseline_filter = "ckf";
  std::string robust_filter = "rckf";
  compare->add_option("dirs", run_dirs, "run directories holding dataset.csv and trace files")
      ->required();
  compare->add_option("--out", compare_out, "where summary.csv and plot data go")
      ->capture_default_str();
  compare->add_option("--warmup", warmup, "posteriors to drop before computing metrics");
  compare->add_option("--baseline-filter", baseline_filter, "trace used as the baseline")
      ->capture_default_str();
  compare->add_option("--robust-filter", robust_filter, "trace used as the robust run")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    std::vector<dsekit::Override> overrides;
    overrides.reserve(set_exprs.size());
    for (const std::string& expr : set_exprs) overrides.push_back(dsekit::parse_override(expr));
    const dsekit::ConfigStore store(configs_dir, overrides);

    if (compare->parsed()) {
      dsekit::CompareRequest req;
      req.run_dirs = run_dirs;
      req.out_dir = compare_out;
      req.warmup = warmup;
      req.baseline_filter = baseline_filter;
      req.robust_filter = robust_filter;
      dsekit::run_compare(req);
      return 0;
    }

    dsekit::ExperimentConfig cfg = store.load_experiment(experiment);
    if (!seeds.empty()) cfg.seeds = seeds;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (timing) cfg.timing = true;

    if (generate->parsed()) {
      dsekit::run_generate(store, cfg);
      return 0;
    }

    const dsekit::ExperimentResult result = dsekit::run_experiment(store, cfg, sweep->parsed());
    if (!result.any_success()) {
      // Every seed failed; surface the first recorded failure's category.
      for (const dsekit::FamilyOutcome& family : result.families)
        for (const dsekit::SeedOutcome& seed : family.seeds)
          if (!seed.ok) {
            const std::size_t colon = seed.error.find(':');
            return category_exit_code(seed.error.substr(0, colon));
          }
      return 1;
    }
    return 0;
  } catch (const dsekit::Error& e) {
    std::cerr << "error (" << e.category() << "): " << e.what() << "\n";
    return dsekit::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
