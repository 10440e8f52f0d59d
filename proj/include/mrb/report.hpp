#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mrb/config.hpp"
#include "mrb/runner.hpp"
#include "mrb/stats.hpp"

namespace mrb {

// One persisted per-clip attack record, as read back from results.json.
struct ResultRow {
  std::string id;
  double before = 0.0;
  double after = 0.0;
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double linf = 0.0;
  int steps = 0;
  double eps_used = 0.0;
  std::vector<std::string> flags;
};

struct CellData {
  EvalCell cell;
  std::vector<ResultRow> rows;
  bool done = false;
  std::string failure;
};

std::vector<CellData> load_cell_data(const RunConfig& cfg, const JobPlan& plan);

// Robustness measures of one cell, computed on min-max scaled (and, when
// enabled, domain-transported) scores.
struct CellMeasures {
  Gains gains;
  RScore rscore;
  double w_score = 0.0;
  double e_score = 0.0;
  double mean_mse = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  ScoreSeries scaled;  // retained so aggregates can pool raw pairs
};

struct EvaluatedCell {
  CellData data;
  std::optional<CellMeasures> measures;  // empty for failed/degenerate cells
  std::string skip_reason;
};

// Scaling parameters come from before-attack scores pooled per
// (metric, dataset); transport maps target the primary metric's domain.
std::vector<EvaluatedCell> evaluate_cells(const RunConfig& cfg, const std::vector<CellData>& cells);

// Writes evaluation/report files under <output_dir>/report. `level` selects
// detail: "cell", "attack", "overall" or "all".
struct ReportSummary {
  int cells_total = 0;
  int cells_done = 0;
  int cells_failed = 0;
  bool partial = false;
  std::vector<std::string> files;
};

ReportSummary write_reports(const RunConfig& cfg, const std::string& level = "all");

// Stable float formatting used in every CSV ("%.10g"; infinities as "inf").
std::string fmt_num(double v);

}  // namespace mrb
