#pragma once

#include <string>
#include <vector>

#include "mrb/attacks.hpp"
#include "mrb/config.hpp"
#include "mrb/ledger.hpp"

namespace mrb {

struct TrainJob {
  std::string key;  // uap/<metric>/<attack>+<trainset>+a<amp>
  std::string attack_name;
  AttackKind kind = AttackKind::uap_optimized;
  std::string metric;
  std::string trainset;
  double amplitude = 0.0;
  AttackSpec spec;  // per-job seed already derived
};

struct EvalCell {
  std::string key;        // cells/<metric>/<attack_id>/<dataset>
  std::string attack_name;
  std::string attack_id;  // attack_name, plus +trainset+a<amp> for UAP versions
  AttackKind kind = AttackKind::fgsm;
  std::string metric;
  std::string dataset;
  std::string trainset;   // UAP only
  double amplitude = 0.0; // UAP only
  AttackSpec spec;
};

struct JobPlan {
  std::vector<TrainJob> train_jobs;
  std::vector<EvalCell> cells;
};

// Expands the config into the full training/evaluation matrix. Trainable
// attacks get one training job per (metric, train dataset, amplitude), reused
// across every test dataset.
JobPlan plan_matrix(const RunConfig& cfg);

std::string train_job_stem(const RunConfig& cfg, const TrainJob& job);
std::string cell_results_path(const RunConfig& cfg, const EvalCell& cell);
std::string ledger_path(const RunConfig& cfg);

struct RunOptions {
  // Graceful-stop hook: stop scheduling new work after this many executed
  // jobs (training + cells). -1 runs everything.
  int stop_after = -1;
  bool quiet = false;
  // Optional job selectors (the `attack` / `train-uap` subcommands). Empty
  // string matches everything. UAP filters match the attack name.
  std::string only_metric;
  std::string only_attack;
  std::string only_dataset;
  std::string only_trainset;
  double only_amplitude = -1.0;  // <0 matches all
  bool train_only = false;
};

struct RunStats {
  int trained = 0;
  int attacked = 0;
  int skipped = 0;
  int failed = 0;
  bool stopped_early = false;
};

// Executes the matrix with per-cell failure isolation, resume via the ledger
// plus persisted outputs, and a bounded worker pool.
RunStats run_matrix(const RunConfig& cfg, const RunOptions& opt = {});

// Per-clip attack used by run_matrix and the `attack` subcommand: per-image
// attacks run frame by frame; scores and proxies are averaged per clip.
AttackResult attack_clip(const MetricModel& metric, const Clip& clip, const AttackSpec& spec,
                         const EpsProvider* provider, const Perturbation* uap,
                         double amplitude);

}  // namespace mrb
