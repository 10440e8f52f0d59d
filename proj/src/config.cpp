#include "mrb/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "mrb/digest.hpp"
#include "mrb/models.hpp"
#include "mrb/weights.hpp"

namespace mrb {

using nlohmann::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return (v && *v) ? std::string(v) : fallback;
}

AttackConfig parse_attack(const json& j, size_t index) {
  const std::string where = "attacks[" + std::to_string(index) + "]";
  AttackConfig a;
  if (!j.contains("name")) throw ConfigError(where + ".name: missing");
  a.name = j.at("name").get<std::string>();
  if (!j.contains("kind")) throw ConfigError(where + ".kind: missing");
  try {
    a.spec.kind = parse_attack_kind(j.at("kind").get<std::string>());
  } catch (const ConfigError& e) {
    throw ConfigError(where + ".kind: " + e.what());
  }
  a.spec.epsilon = j.value("epsilon", a.spec.epsilon);
  a.spec.alpha = j.value("alpha", a.spec.alpha);
  a.spec.iterations = j.value("iterations", a.spec.iterations);
  a.spec.momentum = j.value("momentum", a.spec.momentum);
  a.spec.epochs = j.value("epochs", a.spec.epochs);
  a.spec.batch_size = j.value("batch_size", a.spec.batch_size);
  a.spec.lr = j.value("lr", a.spec.lr);
  a.spec.beta1 = j.value("beta1", a.spec.beta1);
  a.spec.beta2 = j.value("beta2", a.spec.beta2);
  a.spec.noise_channels = j.value("noise_channels", a.spec.noise_channels);
  a.spec.mse_budget = j.value("mse_budget", a.spec.mse_budget);
  a.spec.mse_precision = j.value("mse_precision", a.spec.mse_precision);
  a.spec.eps_provider = j.value("eps_provider", a.spec.eps_provider);
  const std::string units = j.value("mse_units", "unit");
  if (units == "unit") a.spec.mse_units = MseUnits::unit;
  else if (units == "8bit") a.spec.mse_units = MseUnits::eight_bit;
  else throw ConfigError(where + ".mse_units: unknown value '" + units + "'");
  if (j.contains("amplitudes")) {
    a.amplitudes = j.at("amplitudes").get<std::vector<double>>();
  }
  if (a.spec.epsilon < 0.0) throw ConfigError(where + ".epsilon: must be >= 0");
  if (a.spec.iterations < 1) throw ConfigError(where + ".iterations: must be >= 1");
  if (attack_is_trainable(a.spec.kind)) {
    if (a.amplitudes.empty()) {
      throw ConfigError(where + ".amplitudes: UAP attacks need an amplitude sweep");
    }
    for (double amp : a.amplitudes) {
      if (!(amp > 0.0)) throw ConfigError(where + ".amplitudes: must be positive");
    }
  }
  return a;
}

// Canonical content fingerprint. Runtime knobs (output dir, worker count,
// image persistence) stay out so resume works across environments.
std::string config_digest(const RunConfig& cfg) {
  json c;
  c["version"] = cfg.version;
  c["seed"] = cfg.seed;
  c["domain_transport"] = cfg.domain_transport;
  c["transport_grid"] = cfg.transport_grid;
  c["primary_metric"] = cfg.primary_metric;
  c["ssim_mode"] = cfg.ssim_mode == SsimChannelMode::luma601 ? "luma" : "per-channel";
  for (const auto& m : cfg.metrics) {
    c["metrics"].push_back({{"name", m.name}, {"weights", m.weights},
                            {"input_policy", m.input_policy}});
  }
  for (const auto& d : cfg.datasets) {
    c["datasets"].push_back({{"id", d.id}, {"path", d.path}, {"kind", d.kind},
                             {"role", d.role}});
  }
  for (const auto& a : cfg.attacks) {
    json aj;
    aj["name"] = a.name;
    aj["spec"] = a.spec.digest();
    aj["amplitudes"] = a.amplitudes;
    c["attacks"].push_back(aj);
  }
  return sha256_hex(c.dump());
}

}  // namespace

const DatasetConfig* RunConfig::find_dataset(const std::string& id) const {
  for (const auto& d : datasets) {
    if (d.id == id) return &d;
  }
  return nullptr;
}

std::vector<const DatasetConfig*> RunConfig::datasets_with_role(const std::string& role) const {
  std::vector<const DatasetConfig*> out;
  for (const auto& d : datasets) {
    if (d.role == role) out.push_back(&d);
  }
  return out;
}

RunConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path + ": " + e.what());
  }
  RunConfig cfg;
  cfg.base_dir = std::filesystem::absolute(path).parent_path().string();
  try {
    cfg.version = j.value("version", 1);
    cfg.seed = j.value("seed", uint64_t{0});
    cfg.output_dir = j.value("output_dir", std::string("out"));
    cfg.workers = j.value("workers", 1);
    cfg.persist_images = j.value("persist_images", false);
    cfg.domain_transport = j.value("domain_transport", true);
    cfg.transport_grid = j.value("transport_grid", 64);
    cfg.primary_metric = j.value("primary_metric", std::string());
    const std::string ssim_mode = j.value("ssim_mode", "luma");
    if (ssim_mode == "luma") cfg.ssim_mode = SsimChannelMode::luma601;
    else if (ssim_mode == "per-channel") cfg.ssim_mode = SsimChannelMode::per_channel;
    else throw ConfigError("ssim_mode: unknown value '" + ssim_mode + "'");

    if (!j.contains("metrics")) throw ConfigError("metrics: missing");
    for (const auto& m : j.at("metrics")) {
      MetricConfig mc;
      mc.name = m.at("name").get<std::string>();
      mc.weights = m.value("weights", "");
      mc.input_policy = m.value("input_policy", "full");
      cfg.metrics.push_back(std::move(mc));
    }
    if (!j.contains("datasets")) throw ConfigError("datasets: missing");
    for (const auto& d : j.at("datasets")) {
      DatasetConfig dc;
      dc.id = d.at("id").get<std::string>();
      dc.path = d.at("path").get<std::string>();
      dc.kind = d.value("kind", "image-set");
      dc.role = d.at("role").get<std::string>();
      cfg.datasets.push_back(std::move(dc));
    }
    if (!j.contains("attacks")) throw ConfigError("attacks: missing");
    size_t idx = 0;
    for (const auto& a : j.at("attacks")) {
      cfg.attacks.push_back(parse_attack(a, idx++));
    }
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }

  cfg.output_dir = env_or("MRB_OUTPUT_DIR", cfg.output_dir);
  const std::string workers = env_or("MRB_WORKERS", "");
  if (!workers.empty()) cfg.workers = std::stoi(workers);
  const std::string data_dir = env_or("MRB_DATA_DIR", "");
  if (!data_dir.empty()) cfg.base_dir = data_dir;

  validate_config(cfg);
  cfg.digest = config_digest(cfg);
  return cfg;
}

void validate_config(const RunConfig& cfg) {
  if (cfg.metrics.empty()) throw ConfigError("metrics: list is empty");
  if (cfg.datasets.empty()) throw ConfigError("datasets: list is empty");
  if (cfg.attacks.empty()) throw ConfigError("attacks: list is empty");
  if (cfg.workers < 1) throw ConfigError("workers: must be >= 1");
  if (cfg.transport_grid < 2) throw ConfigError("transport_grid: must be >= 2");

  std::set<std::string> metric_names;
  const auto shipped = shipped_metric_names();
  for (size_t i = 0; i < cfg.metrics.size(); ++i) {
    const auto& m = cfg.metrics[i];
    const std::string where = "metrics[" + std::to_string(i) + "]";
    if (std::find(shipped.begin(), shipped.end(), m.name) == shipped.end()) {
      throw ConfigError(where + ".name: unknown metric '" + m.name + "'");
    }
    if (!metric_names.insert(m.name).second) {
      throw ConfigError(where + ".name: duplicate metric '" + m.name + "'");
    }
    if (metric_needs_weights(m.name) && m.weights.empty()) {
      throw ConfigError(where + ".weights: metric '" + m.name + "' needs a weights file");
    }
    parse_input_policy(m.input_policy);  // throws on junk
  }
  if (!cfg.primary_metric.empty() && !metric_names.count(cfg.primary_metric)) {
    throw ConfigError("primary_metric: '" + cfg.primary_metric + "' is not in metrics");
  }
  if (cfg.domain_transport && cfg.primary_metric.empty()) {
    throw ConfigError("primary_metric: required when domain_transport is on");
  }

  std::set<std::string> dataset_ids;
  bool has_calibration = false, has_test = false;
  for (size_t i = 0; i < cfg.datasets.size(); ++i) {
    const auto& d = cfg.datasets[i];
    const std::string where = "datasets[" + std::to_string(i) + "]";
    if (!dataset_ids.insert(d.id).second) {
      throw ConfigError(where + ".id: duplicate dataset '" + d.id + "'");
    }
    if (d.role != "train" && d.role != "test" && d.role != "calibration") {
      throw ConfigError(where + ".role: unknown role '" + d.role + "'");
    }
    if (d.kind != "image-set" && d.kind != "frame-sequence") {
      throw ConfigError(where + ".kind: unknown kind '" + d.kind + "'");
    }
    has_calibration |= d.role == "calibration";
    has_test |= d.role == "test";
  }
  if (!has_calibration) throw ConfigError("datasets: need a calibration dataset");
  if (!has_test) throw ConfigError("datasets: need at least one test dataset");

  std::set<std::string> attack_names;
  bool any_trainable = false;
  for (size_t i = 0; i < cfg.attacks.size(); ++i) {
    const auto& a = cfg.attacks[i];
    const std::string where = "attacks[" + std::to_string(i) + "]";
    if (!attack_names.insert(a.name).second) {
      throw ConfigError(where + ".name: duplicate attack '" + a.name + "'");
    }
    any_trainable |= attack_is_trainable(a.spec.kind);
    if (a.spec.kind == AttackKind::amifgsm &&
        std::find(shipped.begin(), shipped.end(), a.spec.eps_provider) == shipped.end()) {
      throw ConfigError(where + ".eps_provider: unknown metric '" + a.spec.eps_provider + "'");
    }
  }
  if (any_trainable && cfg.datasets_with_role("train").empty()) {
    throw ConfigError("datasets: UAP attacks need at least one train dataset");
  }
}

}  // namespace mrb
