#include "mrb/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mrb/rng.hpp"
#include "mrb/weights.hpp"

namespace mrb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr int kBootstrapResamples = 10000;

}  // namespace

std::string fmt_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::vector<CellData> load_cell_data(const RunConfig& cfg, const JobPlan& plan) {
  std::vector<CellData> out;
  RunLedger ledger = load_ledger(ledger_path(cfg));
  for (const EvalCell& cell : plan.cells) {
    CellData cd;
    cd.cell = cell;
    const std::string path = cell_results_path(cfg, cell);
    auto rec = ledger.cells.find(cell.key);
    if (rec != ledger.cells.end() && rec->second.status == "failed") {
      cd.failure = rec->second.reason;
    } else if (fs::exists(path)) {
      json doc;
      try {
        doc = json::parse(read_file_bytes(path));
        for (const auto& r : doc.at("results")) {
          ResultRow row;
          row.id = r.at("id").get<std::string>();
          row.before = r.at("before").get<double>();
          row.after = r.at("after").get<double>();
          row.mse = r.at("mse").get<double>();
          row.psnr = r.at("psnr").is_string() ? std::numeric_limits<double>::infinity()
                                              : r.at("psnr").get<double>();
          row.ssim = r.at("ssim").get<double>();
          row.linf = r.value("linf", 0.0);
          row.steps = r.value("steps", 0);
          row.eps_used = r.value("eps_used", 0.0);
          if (r.contains("flags")) row.flags = r.at("flags").get<std::vector<std::string>>();
          cd.rows.push_back(std::move(row));
        }
        cd.done = true;
      } catch (const json::exception& e) {
        cd.failure = std::string("corrupt results file: ") + e.what();
      }
    } else {
      cd.failure = "missing results";
    }
    out.push_back(std::move(cd));
  }
  return out;
}

std::vector<EvaluatedCell> evaluate_cells(const RunConfig& cfg,
                                          const std::vector<CellData>& cells) {
  // Before-attack scores are attack-independent, so pool them per
  // (metric, dataset) for the scaling parameters.
  std::map<std::pair<std::string, std::string>, std::vector<double>> before_pool;
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> before_by_id;
  for (const CellData& cd : cells) {
    if (!cd.done) continue;
    auto key = std::make_pair(cd.cell.metric, cd.cell.dataset);
    for (const ResultRow& r : cd.rows) {
      before_pool[key].push_back(r.before);
      before_by_id[key].emplace(r.id, r.before);
    }
  }
  std::map<std::pair<std::string, std::string>, ScalingParams> scaling;
  for (const auto& [key, scores] : before_pool) {
    try {
      scaling[key] = minmax_fit(scores);
    } catch (const CalibrationError&) {
      // constant scores; cells over this pair are skipped below
    }
  }

  // Quantile-transport maps into the primary metric's scaled domain, fitted
  // on the matching dataset's before-attack scores.
  std::map<std::pair<std::string, std::string>, TransportMap> transport;
  if (cfg.domain_transport) {
    for (const auto& [key, by_id] : before_by_id) {
      const auto& [metric, dataset] = key;
      auto skey = std::make_pair(metric, dataset);
      auto pkey = std::make_pair(cfg.primary_metric, dataset);
      if (!scaling.count(skey) || !scaling.count(pkey) || !before_by_id.count(pkey)) continue;
      std::vector<double> src, dst;
      for (const auto& [id, v] : by_id) src.push_back(v);
      for (const auto& [id, v] : before_by_id.at(pkey)) dst.push_back(v);
      src = minmax_apply(src, scaling.at(skey));
      dst = minmax_apply(dst, scaling.at(pkey));
      transport[key] = fit_transport(src, dst, cfg.transport_grid);
    }
  }

  std::vector<EvaluatedCell> out;
  for (const CellData& cd : cells) {
    EvaluatedCell ec;
    ec.data = cd;
    if (!cd.done) {
      ec.skip_reason = cd.failure;
      out.push_back(std::move(ec));
      continue;
    }
    auto key = std::make_pair(cd.cell.metric, cd.cell.dataset);
    if (!scaling.count(key)) {
      ec.skip_reason = "constant before-attack scores; min-max scaling undefined";
      out.push_back(std::move(ec));
      continue;
    }
    ScoreSeries raw;
    raw.metric = cd.cell.metric;
    raw.dataset = cd.cell.dataset;
    raw.attack = cd.cell.attack_id;
    for (const ResultRow& r : cd.rows) {
      raw.before.push_back(r.before);
      raw.after.push_back(r.after);
    }
    ScoreSeries scaled = minmax_scale(raw, scaling.at(key));
    if (cfg.domain_transport && transport.count(key)) {
      const TransportMap& map = transport.at(key);
      scaled.before = apply_transport(map, scaled.before);
      scaled.after = apply_transport(map, scaled.after);
    }
    CellMeasures m;
    m.gains = gains(scaled);
    m.rscore = r_score(scaled);
    m.w_score = w_score(scaled);
    m.e_score = e_score(scaled);
    double n = static_cast<double>(cd.rows.size());
    for (const ResultRow& r : cd.rows) {
      m.mean_mse += r.mse / n;
      m.mean_ssim += r.ssim / n;
    }
    m.mean_psnr = psnr_from_mse(m.mean_mse);
    m.scaled = std::move(scaled);
    ec.measures = std::move(m);
    out.push_back(std::move(ec));
  }
  return out;
}

namespace {

struct Csv {
  std::ostringstream os;
  void cell(const std::string& s) {
    if (!first) os << ',';
    os << s;
    first = false;
  }
  void cell(double v) { cell(fmt_num(v)); }
  void endrow() {
    os << '\n';
    first = true;
  }
  bool first = true;
};

std::string attack_kind_of(const EvaluatedCell& ec) {
  return attack_kind_name(ec.data.cell.kind);
}

// Deterministic orderings for report rows/columns.
std::vector<std::string> metric_order(const RunConfig& cfg) {
  std::vector<std::string> v;
  for (const auto& m : cfg.metrics) v.push_back(m.name);
  return v;
}

std::vector<std::string> attack_kind_order(const RunConfig& cfg) {
  std::vector<std::string> v;
  for (const auto& a : cfg.attacks) {
    const std::string k = attack_kind_name(a.spec.kind);
    if (std::find(v.begin(), v.end(), k) == v.end()) v.push_back(k);
  }
  return v;
}

}  // namespace

ReportSummary write_reports(const RunConfig& cfg, const std::string& level) {
  if (level != "all" && level != "cell" && level != "attack" && level != "overall") {
    throw ConfigError("unknown report level '" + level + "'");
  }
  JobPlan plan = plan_matrix(cfg);
  std::vector<CellData> cells = load_cell_data(cfg, plan);
  if (cells.empty()) throw ConfigError("nothing to report: empty evaluation matrix");
  std::vector<EvaluatedCell> evaluated = evaluate_cells(cfg, cells);

  ReportSummary summary;
  summary.cells_total = static_cast<int>(evaluated.size());
  for (const auto& ec : evaluated) {
    if (ec.data.done) ++summary.cells_done;
    else ++summary.cells_failed;
  }
  summary.partial = summary.cells_failed > 0;
  if (summary.cells_done == 0) throw ConfigError("nothing to report: no completed cells");

  const fs::path dir = fs::path(cfg.output_dir) / "report";
  fs::create_directories(dir);
  auto emit = [&](const std::string& name, const std::string& bytes) {
    const std::string path = (dir / name).string();
    write_file_atomic(path, bytes);
    summary.files.push_back(path);
  };

  const bool want_cell = level == "all" || level == "cell";
  const bool want_attack = level == "all" || level == "attack";
  const bool want_overall = level == "all" || level == "overall";

  // ---- per-cell evaluation table ------------------------------------------
  if (want_cell) {
    Csv csv;
    for (const char* h : {"metric", "attack_id", "kind", "dataset", "trainset", "amplitude",
                          "status", "n", "abs_gain", "rel_gain", "r_score", "r_excluded",
                          "w_score", "e_score", "mean_mse", "mean_psnr", "mean_ssim"}) {
      csv.cell(std::string(h));
    }
    csv.endrow();
    json jrows = json::array();
    for (const auto& ec : evaluated) {
      const auto& c = ec.data.cell;
      csv.cell(c.metric);
      csv.cell(c.attack_id);
      csv.cell(std::string(attack_kind_name(c.kind)));
      csv.cell(c.dataset);
      csv.cell(c.trainset.empty() ? "-" : c.trainset);
      csv.cell(c.amplitude);
      csv.cell(ec.measures ? "done" : (ec.data.done ? "skipped" : "failed"));
      json jr;
      jr["metric"] = c.metric;
      jr["attack_id"] = c.attack_id;
      jr["kind"] = attack_kind_name(c.kind);
      jr["dataset"] = c.dataset;
      jr["trainset"] = c.trainset;
      jr["amplitude"] = c.amplitude;
      if (ec.measures) {
        const auto& m = *ec.measures;
        csv.cell(static_cast<double>(m.scaled.before.size()));
        csv.cell(m.gains.abs_gain);
        csv.cell(m.gains.rel_gain);
        csv.cell(m.rscore.defined ? fmt_num(m.rscore.value) : "undefined");
        csv.cell(static_cast<double>(m.rscore.excluded_small_delta +
                                     m.rscore.excluded_zero_numerator));
        csv.cell(m.w_score);
        csv.cell(m.e_score);
        csv.cell(m.mean_mse);
        csv.cell(m.mean_psnr);
        csv.cell(m.mean_ssim);
        jr["status"] = "done";
        jr["n"] = m.scaled.before.size();
        jr["abs_gain"] = m.gains.abs_gain;
        jr["rel_gain"] = m.gains.rel_gain;
        if (m.rscore.defined) jr["r_score"] = m.rscore.value;
        else jr["r_score"] = nullptr;
        jr["r_excluded_small_delta"] = m.rscore.excluded_small_delta;
        jr["r_excluded_zero_numerator"] = m.rscore.excluded_zero_numerator;
        jr["w_score"] = m.w_score;
        jr["e_score"] = m.e_score;
        jr["mean_mse"] = m.mean_mse;
        jr["mean_psnr"] = std::isinf(m.mean_psnr) ? json("inf") : json(m.mean_psnr);
        jr["mean_ssim"] = m.mean_ssim;
      } else {
        for (int k = 0; k < 10; ++k) csv.cell(std::string("-"));
        jr["status"] = ec.data.done ? "skipped" : "failed";
        jr["reason"] = ec.skip_reason;
      }
      csv.endrow();
      jrows.push_back(jr);
    }
    emit("evaluation.csv", csv.os.str());
    json jdoc;
    jdoc["config_digest"] = cfg.digest;
    jdoc["rows"] = jrows;
    emit("evaluation.json", jdoc.dump(2) + "\n");
  }

  const auto metrics = metric_order(cfg);
  const auto kinds = attack_kind_order(cfg);

  // ---- per-attack table (energy-distance score, averaged across cells) -----
  if (want_attack) {
    Csv csv;
    csv.cell(std::string("metric"));
    for (const auto& k : kinds) csv.cell(k);
    csv.endrow();
    for (const auto& metric : metrics) {
      csv.cell(metric);
      for (const auto& kind : kinds) {
        double acc = 0.0;
        int n = 0;
        for (const auto& ec : evaluated) {
          if (!ec.measures) continue;
          if (ec.data.cell.metric != metric || attack_kind_of(ec) != kind) continue;
          acc += ec.measures->e_score;
          ++n;
        }
        csv.cell(n ? fmt_num(acc / n) : "-");
      }
      csv.endrow();
    }
    emit("table_escore_by_attack.csv", csv.os.str());

    // Robustness-score vs proxy-SSIM curve data.
    Csv curve;
    for (const char* h : {"metric", "attack_id", "dataset", "r_score", "mean_ssim",
                          "mean_psnr", "mean_mse"}) {
      curve.cell(std::string(h));
    }
    curve.endrow();
    for (const auto& ec : evaluated) {
      if (!ec.measures || !ec.measures->rscore.defined) continue;
      curve.cell(ec.data.cell.metric);
      curve.cell(ec.data.cell.attack_id);
      curve.cell(ec.data.cell.dataset);
      curve.cell(ec.measures->rscore.value);
      curve.cell(ec.measures->mean_ssim);
      curve.cell(ec.measures->mean_psnr);
      curve.cell(ec.measures->mean_mse);
      curve.endrow();
    }
    emit("rscore_vs_ssim.csv", curve.os.str());

    // UAP aggregation reported under both nesting orders: mean of per-cell
    // means, and the pooled per-image mean.
    Csv nest;
    for (const char* h : {"metric", "attack_name", "mean_of_cell_means", "pooled_mean",
                          "cells", "images"}) {
      nest.cell(std::string(h));
    }
    nest.endrow();
    for (const auto& metric : metrics) {
      for (const auto& a : cfg.attacks) {
        if (!attack_is_trainable(a.spec.kind)) continue;
        double cell_acc = 0.0;
        int cell_n = 0;
        std::vector<double> pooled;
        for (const auto& ec : evaluated) {
          if (!ec.measures) continue;
          if (ec.data.cell.metric != metric || ec.data.cell.attack_name != a.name) continue;
          cell_acc += ec.measures->gains.abs_gain;
          ++cell_n;
          for (size_t i = 0; i < ec.measures->scaled.before.size(); ++i) {
            pooled.push_back(ec.measures->scaled.after[i] - ec.measures->scaled.before[i]);
          }
        }
        if (cell_n == 0) continue;
        nest.cell(metric);
        nest.cell(a.name);
        nest.cell(cell_acc / cell_n);
        nest.cell(mean_of(pooled));
        nest.cell(static_cast<double>(cell_n));
        nest.cell(static_cast<double>(pooled.size()));
        nest.endrow();
      }
    }
    emit("uap_nesting_orders.csv", nest.os.str());
  }

  // ---- overall table + Wilcoxon matrix --------------------------------------
  if (want_overall) {
    Csv csv;
    for (const char* h : {"metric", "abs_gain", "abs_lo", "abs_hi", "rel_gain", "rel_lo",
                          "rel_hi", "r_score", "r_lo", "r_hi", "e_score", "w_score"}) {
      csv.cell(std::string(h));
    }
    csv.endrow();
    json jdoc;
    jdoc["config_digest"] = cfg.digest;
    jdoc["metrics"] = json::array();
    for (const auto& metric : metrics) {
      std::vector<double> abs_pool, rel_pool, r_terms, before_pool, after_pool;
      for (const auto& ec : evaluated) {
        if (!ec.measures || ec.data.cell.metric != metric) continue;
        const auto& s = ec.measures->scaled;
        for (size_t i = 0; i < s.before.size(); ++i) {
          const double d = s.after[i] - s.before[i];
          abs_pool.push_back(d);
          rel_pool.push_back(d / (s.before[i] + 1.0));
          before_pool.push_back(s.before[i]);
          after_pool.push_back(s.after[i]);
          const double delta = std::abs(d);
          if (delta >= 1e-6) {
            const double num = std::max(1.0 - s.after[i], s.before[i]);
            if (num > 0.0) r_terms.push_back(std::log10(num / delta));
          }
        }
      }
      if (abs_pool.empty()) continue;
      const double abs_mean = mean_of(abs_pool);
      const double rel_mean = mean_of(rel_pool);
      CI abs_ci = bootstrap_mean_ci(abs_pool, kBootstrapResamples,
                                    derive_seed(cfg.seed, fnv1a64(metric + "/abs")));
      CI rel_ci = bootstrap_mean_ci(rel_pool, kBootstrapResamples,
                                    derive_seed(cfg.seed, fnv1a64(metric + "/rel")));
      csv.cell(metric);
      csv.cell(abs_mean);
      csv.cell(abs_ci.lo);
      csv.cell(abs_ci.hi);
      csv.cell(rel_mean);
      csv.cell(rel_ci.lo);
      csv.cell(rel_ci.hi);
      json jm;
      jm["metric"] = metric;
      jm["abs_gain"] = {{"value", abs_mean}, {"ci", {abs_ci.lo, abs_ci.hi}}};
      jm["rel_gain"] = {{"value", rel_mean}, {"ci", {rel_ci.lo, rel_ci.hi}}};
      if (!r_terms.empty()) {
        const double r_mean = mean_of(r_terms);
        CI r_ci = bootstrap_mean_ci(r_terms, kBootstrapResamples,
                                    derive_seed(cfg.seed, fnv1a64(metric + "/r")));
        csv.cell(r_mean);
        csv.cell(r_ci.lo);
        csv.cell(r_ci.hi);
        jm["r_score"] = {{"value", r_mean}, {"ci", {r_ci.lo, r_ci.hi}}};
      } else {
        for (int k = 0; k < 3; ++k) csv.cell(std::string("undefined"));
        jm["r_score"] = nullptr;
      }
      // Distribution scores on the whole pooled set, no averaging.
      const double e_pooled = e_score_pooled(before_pool, after_pool);
      const double w_pooled = w_score_pooled(before_pool, after_pool);
      csv.cell(e_pooled);
      csv.cell(w_pooled);
      csv.endrow();
      jm["e_score"] = e_pooled;
      jm["w_score"] = w_pooled;
      jm["images"] = abs_pool.size();
      jdoc["metrics"].push_back(jm);
    }
    emit("table_overall.csv", csv.os.str());
    emit("table_overall.json", jdoc.dump(2) + "\n");

    // One-sided Wilcoxon signed-rank tests on paired per-image absolute gains.
    // p_less(row, col): alternative "row metric gains are smaller" (more robust).
    std::map<std::string, std::map<std::string, double>> gain_by_key;  // metric -> item -> gain
    for (const auto& ec : evaluated) {
      if (!ec.measures) continue;
      const auto& s = ec.measures->scaled;
      const auto& c = ec.data.cell;
      for (size_t i = 0; i < s.before.size(); ++i) {
        const std::string item =
            c.attack_id + "/" + c.dataset + "/" + ec.data.rows[i].id;
        gain_by_key[c.metric][item] = s.after[i] - s.before[i];
      }
    }
    Csv wcsv;
    wcsv.cell(std::string("metric"));
    for (const auto& m : metrics) wcsv.cell(m);
    wcsv.endrow();
    for (const auto& ma : metrics) {
      wcsv.cell(ma);
      for (const auto& mb : metrics) {
        if (ma == mb) {
          wcsv.cell(std::string("-"));
          continue;
        }
        if (!gain_by_key.count(ma) || !gain_by_key.count(mb)) {
          wcsv.cell(std::string("-"));
          continue;
        }
        std::vector<double> a, b;
        for (const auto& [item, ga] : gain_by_key.at(ma)) {
          auto it = gain_by_key.at(mb).find(item);
          if (it == gain_by_key.at(mb).end()) continue;
          a.push_back(ga);
          b.push_back(it->second);
        }
        if (a.empty()) {
          wcsv.cell(std::string("-"));
          continue;
        }
        WilcoxonResult w = wilcoxon_one_sided(a, b);
        wcsv.cell(w.defined ? fmt_num(w.p_less) : "undefined");
      }
      wcsv.endrow();
    }
    emit("wilcoxon_p_less.csv", wcsv.os.str());
  }

  return summary;
}

}  // namespace mrb
