#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mrb/catalog.hpp"
#include "mrb/config.hpp"
#include "mrb/report.hpp"
#include "mrb/runner.hpp"

using nlohmann::json;

namespace {

// stdout carries exactly one machine-readable JSON summary; all progress and
// diagnostics go to stderr.
void print_summary(const json& j) { std::fputs((j.dump() + "\n").c_str(), stdout); }

int exit_code_for_stats(const mrb::RunStats& stats) {
  return stats.failed > 0 ? 3 : 0;
}

json stats_json(const mrb::RunConfig& cfg, const mrb::RunStats& stats) {
  json j;
  j["config_digest"] = cfg.digest;
  j["trained"] = stats.trained;
  j["attacked"] = stats.attacked;
  j["skipped"] = stats.skipped;
  j["failed"] = stats.failed;
  j["stopped_early"] = stats.stopped_early;
  return j;
}

mrb::RunConfig load_and_announce(const std::string& path) {
  mrb::RunConfig cfg = mrb::load_config(path);
  std::fprintf(stderr, "[mrbench] config digest %s\n", cfg.digest.c_str());
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mrbench: adversarial-robustness benchmark for differentiable "
               "no-reference image/video quality metrics"};
  app.require_subcommand(1);

  std::string config_path;
  std::string metric_filter, attack_filter, dataset_filter, trainset_filter;
  double amplitude_filter = -1.0;
  std::string level = "all";
  int stop_after = -1;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run configuration file (JSON)")->required();
  };

  CLI::App* validate = app.add_subcommand(
      "validate-config", "Parse and validate a run configuration, then exit");
  add_config(validate);

  CLI::App* run = app.add_subcommand(
      "run", "Execute the full training + attack matrix with resume support");
  add_config(run);
  run->add_option("--stop-after", stop_after,
                  "Stop scheduling new jobs after N executed (testing hook)");

  CLI::App* attack = app.add_subcommand(
      "attack", "Run one attack for one metric on one test dataset");
  add_config(attack);
  attack->add_option("--metric", metric_filter, "Metric name")->required();
  attack->add_option("--attack", attack_filter, "Attack name from the config")->required();
  attack->add_option("--dataset", dataset_filter, "Test dataset id")->required();

  CLI::App* train = app.add_subcommand(
      "train-uap", "Train universal perturbations (optionally filtered)");
  add_config(train);
  train->add_option("--metric", metric_filter, "Metric name");
  train->add_option("--attack", attack_filter, "UAP attack name from the config");
  train->add_option("--trainset", trainset_filter, "Training dataset id");
  train->add_option("--amplitude", amplitude_filter, "Amplitude from the sweep");

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Recompute robustness measures from persisted attack results");
  add_config(evaluate);

  CLI::App* report = app.add_subcommand(
      "report", "Write report tables (per-attack, overall, Wilcoxon, curves)");
  add_config(report);
  report->add_option("--level", level, "cell | attack | overall | all");

  CLI::App* docs = app.add_subcommand("docs", "Print the attack catalog as markdown");

  CLI11_PARSE(app, argc, argv);

  try {
    if (docs->parsed()) {
      std::fputs(mrb::render_attack_docs().c_str(), stdout);
      return 0;
    }
    if (validate->parsed()) {
      mrb::RunConfig cfg = load_and_announce(config_path);
      mrb::check_role_leakage(cfg.datasets, cfg.base_dir);
      json j;
      j["ok"] = true;
      j["config_digest"] = cfg.digest;
      print_summary(j);
      return 0;
    }
    if (run->parsed()) {
      mrb::RunConfig cfg = load_and_announce(config_path);
      mrb::RunOptions opt;
      opt.stop_after = stop_after;
      mrb::RunStats stats = mrb::run_matrix(cfg, opt);
      print_summary(stats_json(cfg, stats));
      return exit_code_for_stats(stats);
    }
    if (attack->parsed()) {
      mrb::RunConfig cfg = load_and_announce(config_path);
      bool known = false;
      for (const auto& a : cfg.attacks) known |= a.name == attack_filter;
      if (!known) throw mrb::ConfigError("attack '" + attack_filter + "' is not in the config");
      if (!cfg.find_dataset(dataset_filter)) {
        throw mrb::ConfigError("dataset '" + dataset_filter + "' is not in the config");
      }
      mrb::RunOptions opt;
      opt.only_metric = metric_filter;
      opt.only_attack = attack_filter;
      opt.only_dataset = dataset_filter;
      mrb::RunStats stats = mrb::run_matrix(cfg, opt);
      print_summary(stats_json(cfg, stats));
      return exit_code_for_stats(stats);
    }
    if (train->parsed()) {
      mrb::RunConfig cfg = load_and_announce(config_path);
      mrb::RunOptions opt;
      opt.only_metric = metric_filter;
      opt.only_attack = attack_filter;
      opt.only_trainset = trainset_filter;
      opt.only_amplitude = amplitude_filter;
      opt.train_only = true;
      mrb::RunStats stats = mrb::run_matrix(cfg, opt);
      print_summary(stats_json(cfg, stats));
      return exit_code_for_stats(stats);
    }
    if (evaluate->parsed() || report->parsed()) {
      mrb::RunConfig cfg = load_and_announce(config_path);
      const std::string lvl = evaluate->parsed() ? "cell" : level;
      mrb::ReportSummary s = mrb::write_reports(cfg, lvl);
      json j;
      j["config_digest"] = cfg.digest;
      j["cells_total"] = s.cells_total;
      j["cells_done"] = s.cells_done;
      j["cells_failed"] = s.cells_failed;
      j["partial"] = s.partial;
      j["files"] = s.files;
      print_summary(j);
      return s.partial ? 3 : 0;
    }
  } catch (const mrb::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
