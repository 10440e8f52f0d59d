#pragma once

#include <string>
#include <vector>

#include "mrb/attacks.hpp"
#include "mrb/dataset.hpp"
#include "mrb/metrics.hpp"

namespace mrb {

struct MetricConfig {
  std::string name;
  std::string weights;       // weight-file stem, relative to the config dir
  std::string input_policy;  // "full", "center-crop(N)", "resize(N)"
};

struct AttackConfig {
  std::string name;  // unique row id in reports
  AttackSpec spec;
  std::vector<double> amplitudes;  // UAP kinds only
};

struct RunConfig {
  int version = 1;
  uint64_t seed = 0;
  std::string output_dir = "out";
  int workers = 1;
  bool persist_images = false;
  bool domain_transport = true;
  int transport_grid = 64;
  std::string primary_metric;
  SsimChannelMode ssim_mode = SsimChannelMode::luma601;
  std::vector<MetricConfig> metrics;
  std::vector<DatasetConfig> datasets;
  std::vector<AttackConfig> attacks;

  std::string digest;    // canonical fingerprint (runtime knobs excluded)
  std::string base_dir;  // config file directory; anchors relative paths

  const DatasetConfig* find_dataset(const std::string& id) const;
  std::vector<const DatasetConfig*> datasets_with_role(const std::string& role) const;
};

// Parses and validates; throws ConfigError naming the offending key. Honors
// MRB_OUTPUT_DIR, MRB_WORKERS and MRB_DATA_DIR environment overrides.
RunConfig load_config(const std::string& path);

// Structural checks that need no file I/O (also used by load_config).
void validate_config(const RunConfig& cfg);

}  // namespace mrb
