#include "mrb/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "mrb/digest.hpp"
#include "mrb/image_io.hpp"
#include "mrb/models.hpp"
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

std::string amp_str(double a) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", a);
  return buf;
}

json psnr_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

// Full spec echo; results must be reproducible from the persisted files alone.
json attack_spec_json(const AttackSpec& s) {
  json j;
  j["kind"] = attack_kind_name(s.kind);
  j["epsilon"] = s.epsilon;
  j["alpha"] = s.alpha;
  j["iterations"] = s.iterations;
  j["momentum"] = s.momentum;
  j["amplitude"] = s.amplitude;
  j["seed"] = s.seed;
  j["epochs"] = s.epochs;
  j["batch_size"] = s.batch_size;
  j["lr"] = s.lr;
  j["beta1"] = s.beta1;
  j["beta2"] = s.beta2;
  j["noise_channels"] = s.noise_channels;
  j["mse_budget"] = s.mse_budget;
  j["mse_precision"] = s.mse_precision;
  j["mse_units"] = s.mse_units == MseUnits::unit ? "unit" : "8bit";
  j["eps_provider"] = s.eps_provider;
  return j;
}

double psnr_from_json(const json& v) {
  if (v.is_string()) return std::numeric_limits<double>::infinity();
  return v.get<double>();
}

}  // namespace

JobPlan plan_matrix(const RunConfig& cfg) {
  JobPlan plan;
  const auto trainsets = cfg.datasets_with_role("train");
  const auto testsets = cfg.datasets_with_role("test");
  for (const MetricConfig& m : cfg.metrics) {
    for (const AttackConfig& a : cfg.attacks) {
      if (attack_is_trainable(a.spec.kind)) {
        for (const DatasetConfig* tr : trainsets) {
          for (double amp : a.amplitudes) {
            TrainJob job;
            job.attack_name = a.name;
            job.kind = a.spec.kind;
            job.metric = m.name;
            job.trainset = tr->id;
            job.amplitude = amp;
            job.spec = a.spec;
            job.spec.amplitude = amp;
            job.key = "uap/" + m.name + "/" + a.name + "+" + tr->id + "+a" + amp_str(amp);
            job.spec.seed = derive_seed(cfg.seed, fnv1a64(job.key));
            plan.train_jobs.push_back(job);

            for (const DatasetConfig* te : testsets) {
              EvalCell cell;
              cell.attack_name = a.name;
              cell.attack_id = a.name + "+" + tr->id + "+a" + amp_str(amp);
              cell.kind = a.spec.kind;
              cell.metric = m.name;
              cell.dataset = te->id;
              cell.trainset = tr->id;
              cell.amplitude = amp;
              cell.spec = job.spec;
              cell.key = "cells/" + m.name + "/" + cell.attack_id + "/" + te->id;
              plan.cells.push_back(std::move(cell));
            }
          }
        }
      } else {
        for (const DatasetConfig* te : testsets) {
          EvalCell cell;
          cell.attack_name = a.name;
          cell.attack_id = a.name;
          cell.kind = a.spec.kind;
          cell.metric = m.name;
          cell.dataset = te->id;
          cell.spec = a.spec;
          cell.key = "cells/" + m.name + "/" + a.name + "/" + te->id;
          cell.spec.seed = derive_seed(cfg.seed, fnv1a64(cell.key));
          plan.cells.push_back(std::move(cell));
        }
      }
    }
  }
  return plan;
}

std::string train_job_stem(const RunConfig& cfg, const TrainJob& job) {
  return (fs::path(cfg.output_dir) / job.key).string();
}

std::string cell_results_path(const RunConfig& cfg, const EvalCell& cell) {
  return (fs::path(cfg.output_dir) / cell.key / "results.json").string();
}

std::string ledger_path(const RunConfig& cfg) {
  return (fs::path(cfg.output_dir) / "ledger.json").string();
}

AttackResult attack_clip(const MetricModel& metric, const Clip& clip, const AttackSpec& spec,
                         const EpsProvider* provider, const Perturbation* uap,
                         double amplitude) {
  if (clip.frames.empty()) throw AttackError("clip '" + clip.id + "' has no frames");
  std::vector<AttackResult> frames;
  frames.reserve(clip.frames.size());
  for (const Image& img : clip.frames) {
    switch (spec.kind) {
      case AttackKind::fgsm: frames.push_back(fgsm(metric, img, spec)); break;
      case AttackKind::ifgsm: frames.push_back(ifgsm(metric, img, spec)); break;
      case AttackKind::mifgsm: frames.push_back(mifgsm(metric, img, spec)); break;
      case AttackKind::amifgsm: {
        if (!provider) throw AttackError("amifgsm needs a quality provider");
        frames.push_back(amifgsm(metric, img, spec, *provider));
        break;
      }
      case AttackKind::korhonen: frames.push_back(korhonen_attack(metric, img, spec)); break;
      case AttackKind::madc: frames.push_back(madc_attack(metric, img, spec)); break;
      case AttackKind::uap_cumulative:
      case AttackKind::uap_optimized:
      case AttackKind::uap_generative: {
        if (!uap) throw AttackError("UAP evaluation needs a trained perturbation");
        frames.push_back(evaluate_uap(metric, *uap, img, amplitude, spec));
        break;
      }
    }
  }
  if (frames.size() == 1) {
    AttackResult r = std::move(frames.front());
    r.image_id = clip.id;
    return r;
  }
  // Frame sequence: scores averaged per clip, psnr rederived from pooled mse.
  AttackResult r;
  r.image_id = clip.id;
  r.spec_digest = frames.front().spec_digest;
  const double n = static_cast<double>(frames.size());
  Sha256 hash;
  for (const AttackResult& f : frames) {
    r.score_before += f.score_before / n;
    r.score_after += f.score_after / n;
    r.proxy.mse += f.proxy.mse / n;
    r.proxy.ssim += f.proxy.ssim / n;
    r.steps_used = std::max(r.steps_used, f.steps_used);
    r.eps_used = std::max(r.eps_used, f.eps_used);
    r.linf = std::max(r.linf, f.linf);
    r.terminal_mse = std::max(r.terminal_mse, f.terminal_mse);
    r.noop = r.noop || f.noop;
    r.degenerate = r.degenerate || f.degenerate;
    r.non_converged = r.non_converged || f.non_converged;
    r.projection_skipped = r.projection_skipped || f.projection_skipped;
    auto bytes = encode_f64le(f.attacked.array());
    hash.update(bytes.data(), bytes.size());
  }
  r.proxy.psnr = psnr_from_mse(r.proxy.mse);
  r.attacked = frames.back().attacked;  // representative frame for persistence
  r.spec_digest += ":" + hash.hex().substr(0, 16);
  return r;
}

namespace {

struct RunnerContext {
  const RunConfig* cfg;
  std::map<std::string, LoadedDataset> datasets;  // by id
  std::map<std::string, std::shared_ptr<MetricModel>> metrics;
  EpsProvider provider;
  std::mutex ledger_mu;
  RunLedger ledger;
  std::atomic<int> executed{0};
  std::atomic<bool> stop{false};
  RunOptions opt;
  RunStats stats;
  std::mutex stats_mu;
};

void note(RunnerContext& ctx, const std::string& msg) {
  if (!ctx.opt.quiet) std::fprintf(stderr, "[mrbench] %s\n", msg.c_str());
}

void ledger_update(RunnerContext& ctx, const std::string& key, const std::string& status,
                   const std::string& reason, double wall_ms) {
  std::lock_guard<std::mutex> lock(ctx.ledger_mu);
  CellRecord r;
  r.key = key;
  r.status = status;
  r.reason = reason;
  r.wall_ms = wall_ms;
  ctx.ledger.cells[key] = std::move(r);
  save_ledger(ledger_path(*ctx.cfg), ctx.ledger);
}

bool should_stop(RunnerContext& ctx) {
  if (ctx.opt.stop_after < 0) return false;
  return ctx.executed.load() >= ctx.opt.stop_after;
}

void run_train_job(RunnerContext& ctx, const TrainJob& job) {
  const std::string stem = train_job_stem(*ctx.cfg, job);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto& metric = *ctx.metrics.at(job.metric);
    const auto& trainset = ctx.datasets.at(job.trainset);
    std::vector<Image> images = trainset.all_frames();
    Perturbation p;
    switch (job.kind) {
      case AttackKind::uap_cumulative:
        p = train_uap_cumulative(metric, images, job.spec);
        break;
      case AttackKind::uap_optimized:
        p = train_uap_optimized(metric, images, job.spec);
        break;
      case AttackKind::uap_generative:
        p = train_uap_generative(metric, images, job.spec);
        break;
      default:
        throw AttackError("not a trainable attack");
    }
    p.trained_on = job.trainset;
    save_perturbation(stem, p);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
    ledger_update(ctx, job.key, "done", "", ms);
    {
      std::lock_guard<std::mutex> lock(ctx.stats_mu);
      ++ctx.stats.trained;
    }
    note(ctx, "trained " + job.key);
  } catch (const std::exception& e) {
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
    ledger_update(ctx, job.key, "failed", e.what(), ms);
    {
      std::lock_guard<std::mutex> lock(ctx.stats_mu);
      ++ctx.stats.failed;
    }
    note(ctx, "FAILED " + job.key + ": " + e.what());
  }
  ++ctx.executed;
}

void write_cell_results(RunnerContext& ctx, const EvalCell& cell,
                        const std::vector<AttackResult>& results) {
  json doc;
  doc["schema"] = 1;
  doc["config_digest"] = ctx.cfg->digest;
  doc["cell"] = cell.key;
  doc["metric"] = cell.metric;
  doc["attack_name"] = cell.attack_name;
  doc["attack_id"] = cell.attack_id;
  doc["kind"] = attack_kind_name(cell.kind);
  doc["dataset"] = cell.dataset;
  doc["trainset"] = cell.trainset;
  doc["amplitude"] = cell.amplitude;
  doc["results"] = json::array();
  for (const AttackResult& r : results) {
    json row;
    row["id"] = r.image_id;
    row["before"] = r.score_before;
    row["after"] = r.score_after;
    row["mse"] = r.proxy.mse;
    row["psnr"] = psnr_json(r.proxy.psnr);
    row["ssim"] = r.proxy.ssim;
    row["linf"] = r.linf;
    row["steps"] = r.steps_used;
    row["eps_used"] = r.eps_used;
    row["terminal_mse"] = r.terminal_mse;
    json flags = json::array();
    if (r.noop) flags.push_back("noop");
    if (r.degenerate) flags.push_back("degenerate");
    if (r.non_converged) flags.push_back("non-converged");
    if (r.projection_skipped) flags.push_back("projection-skipped");
    row["flags"] = flags;
    row["spec_digest"] = r.spec_digest;
    auto bytes = encode_f64le(r.attacked.array());
    row["attacked_sha256"] = sha256_hex(bytes);
    doc["results"].push_back(row);
  }
  write_file_atomic(cell_results_path(*ctx.cfg, cell), doc.dump(2) + "\n");
}

void run_eval_cell(RunnerContext& ctx, const EvalCell& cell) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto& metric = *ctx.metrics.at(cell.metric);
    const auto& dataset = ctx.datasets.at(cell.dataset);
    Perturbation uap;
    const Perturbation* uap_ptr = nullptr;
    if (attack_is_trainable(cell.kind)) {
      TrainJob probe;
      probe.key = "uap/" + cell.metric + "/" + cell.attack_id;
      {
        std::lock_guard<std::mutex> lock(ctx.ledger_mu);
        if (!ctx.ledger.is_done(probe.key)) {
          throw AttackError("training job " + probe.key + " did not complete");
        }
      }
      uap = load_perturbation(train_job_stem(*ctx.cfg, probe));
      uap_ptr = &uap;
    }
    const EpsProvider* provider =
        (cell.kind == AttackKind::amifgsm) ? &ctx.provider : nullptr;
    std::vector<AttackResult> results;
    results.reserve(dataset.clips.size());
    for (const Clip& clip : dataset.clips) {
      AttackResult r = attack_clip(metric, clip, cell.spec, provider, uap_ptr, cell.amplitude);
      if (ctx.cfg->persist_images) {
        const fs::path dir = fs::path(ctx.cfg->output_dir) / cell.key / "img";
        fs::create_directories(dir);
        save_ppm((dir / (r.image_id + ".ppm")).string(), r.attacked);
      }
      r.attacked = Tensor();  // only hashes are persisted
      results.push_back(std::move(r));
    }
    write_cell_results(ctx, cell, results);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
    ledger_update(ctx, cell.key, "done", "", ms);
    {
      std::lock_guard<std::mutex> lock(ctx.stats_mu);
      ++ctx.stats.attacked;
    }
    note(ctx, "attacked " + cell.key);
  } catch (const std::exception& e) {
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
    ledger_update(ctx, cell.key, "failed", e.what(), ms);
    {
      std::lock_guard<std::mutex> lock(ctx.stats_mu);
      ++ctx.stats.failed;
    }
    note(ctx, "FAILED " + cell.key + ": " + e.what());
  }
  ++ctx.executed;
}

// Runs jobs[i] for i in [0, n) over a bounded pool; returns false when the
// stop hook fired before all jobs were dispatched.
template <typename Fn>
bool parallel_for(RunnerContext& ctx, size_t n, Fn&& fn) {
  std::atomic<size_t> next{0};
  const int workers = std::max(1, std::min(ctx.cfg->workers, static_cast<int>(n ? n : 1)));
  std::vector<std::thread> pool;
  bool completed = true;
  std::mutex completed_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        if (should_stop(ctx)) {
          std::lock_guard<std::mutex> lock(completed_mu);
          completed = false;
          return;
        }
        const size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
  return completed;
}

}  // namespace

RunStats run_matrix(const RunConfig& cfg, const RunOptions& opt) {
  check_role_leakage(cfg.datasets, cfg.base_dir);
  fs::create_directories(cfg.output_dir);

  RunnerContext ctx;
  ctx.cfg = &cfg;
  ctx.opt = opt;
  ctx.ledger = load_ledger(ledger_path(cfg));
  if (!ctx.ledger.config_digest.empty() && ctx.ledger.config_digest != cfg.digest) {
    throw ConfigError("output dir holds a run with a different config digest (" +
                      ctx.ledger.config_digest.substr(0, 12) + " vs " +
                      cfg.digest.substr(0, 12) + ")");
  }
  ctx.ledger.config_digest = cfg.digest;
  ctx.ledger.environment = environment_fingerprint();

  // Ingest everything up front; a broken dataset fails its cells, not the run.
  std::map<std::string, std::string> dataset_errors;
  for (const DatasetConfig& d : cfg.datasets) {
    try {
      ctx.datasets.emplace(d.id, ingest(d, cfg.base_dir));
    } catch (const std::exception& e) {
      dataset_errors[d.id] = e.what();
    }
  }
  const auto calib_sets = cfg.datasets_with_role("calibration");
  if (calib_sets.empty() || !ctx.datasets.count(calib_sets.front()->id)) {
    throw ConfigError("calibration dataset unavailable" +
                      (calib_sets.empty() ? std::string()
                                          : ": " + dataset_errors[calib_sets.front()->id]));
  }
  const std::vector<Image> calib_images = ctx.datasets.at(calib_sets.front()->id).all_frames();

  for (const MetricConfig& m : cfg.metrics) {
    std::string stem = m.weights;
    if (!stem.empty() && fs::path(stem).is_relative()) {
      stem = (fs::path(cfg.base_dir) / stem).string();
    }
    auto model = build_metric(m.name, stem, parse_input_policy(m.input_policy));
    calibrate_range(*model, calib_images);
    ctx.metrics.emplace(m.name, std::move(model));
  }

  // One shared provider instance; scoring is reentrant.
  std::shared_ptr<MetricModel> provider_model;
  for (const AttackConfig& a : cfg.attacks) {
    if (a.spec.kind == AttackKind::amifgsm) {
      auto it = ctx.metrics.find(a.spec.eps_provider);
      if (it != ctx.metrics.end()) {
        provider_model = it->second;
      } else {
        provider_model = build_metric(a.spec.eps_provider, "", InputPolicy::full());
      }
      break;
    }
  }
  if (provider_model) {
    ctx.provider = [provider_model](const Image& img) { return provider_model->score(img); };
  }

  JobPlan plan = plan_matrix(cfg);

  auto job_ready = [&](const std::string& dataset_id) {
    return ctx.datasets.count(dataset_id) > 0;
  };

  auto match = [](const std::string& filter, const std::string& v) {
    return filter.empty() || filter == v;
  };
  auto train_selected = [&](const TrainJob& j) {
    return match(opt.only_metric, j.metric) && match(opt.only_attack, j.attack_name) &&
           match(opt.only_trainset, j.trainset) &&
           (opt.only_amplitude < 0.0 || opt.only_amplitude == j.amplitude);
  };
  auto cell_selected = [&](const EvalCell& c) {
    return !opt.train_only && match(opt.only_metric, c.metric) &&
           match(opt.only_attack, c.attack_name) && match(opt.only_dataset, c.dataset) &&
           match(opt.only_trainset, c.trainset.empty() ? opt.only_trainset : c.trainset) &&
           (opt.only_amplitude < 0.0 || c.trainset.empty() ||
            opt.only_amplitude == c.amplitude);
  };

  // Phase 1: training jobs.
  std::vector<const TrainJob*> pending_train;
  for (const TrainJob& job : plan.train_jobs) {
    if (!train_selected(job)) continue;
    const std::string stem = train_job_stem(cfg, job);
    if (ctx.ledger.is_done(job.key) && fs::exists(stem + ".json") && fs::exists(stem + ".f64")) {
      ++ctx.stats.skipped;
      continue;
    }
    if (!job_ready(job.trainset)) {
      ledger_update(ctx, job.key, "failed", "dataset: " + dataset_errors[job.trainset], 0.0);
      ++ctx.stats.failed;
      continue;
    }
    pending_train.push_back(&job);
  }
  bool completed = parallel_for(ctx, pending_train.size(),
                                [&](size_t i) { run_train_job(ctx, *pending_train[i]); });

  // Phase 2: evaluation cells.
  if (completed) {
    std::vector<const EvalCell*> pending;
    for (const EvalCell& cell : plan.cells) {
      if (!cell_selected(cell)) continue;
      if (ctx.ledger.is_done(cell.key) && fs::exists(cell_results_path(cfg, cell))) {
        ++ctx.stats.skipped;
        continue;
      }
      if (!job_ready(cell.dataset)) {
        ledger_update(ctx, cell.key, "failed", "dataset: " + dataset_errors[cell.dataset], 0.0);
        ++ctx.stats.failed;
        continue;
      }
      pending.push_back(&cell);
    }
    completed = parallel_for(ctx, pending.size(), [&](size_t i) { run_eval_cell(ctx, *pending[i]); });
  }

  save_ledger(ledger_path(cfg), ctx.ledger);
  ctx.stats.stopped_early = !completed;
  return ctx.stats;
}

}  // namespace mrb
