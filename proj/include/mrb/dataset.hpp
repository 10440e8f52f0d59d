#pragma once

#include <string>
#include <vector>

#include "mrb/tensor.hpp"

namespace mrb {

struct DatasetConfig {
  std::string id;
  std::string path;
  std::string kind = "image-set";  // or "frame-sequence"
  std::string role;                // train | test | calibration
};

// Unit of work: one clip. Image sets load as single-frame clips; frame
// sequences carry one clip per subdirectory with contiguously numbered frames.
struct Clip {
  std::string id;
  std::vector<Image> frames;
};

struct LoadedDataset {
  DatasetConfig cfg;
  std::vector<Clip> clips;

  size_t image_count() const;
  // Flat view used by calibration and UAP training.
  std::vector<Image> all_frames() const;
  std::vector<std::string> item_ids() const;
};

// Decodes every file up front; unreadable or malformed inputs throw IoError.
LoadedDataset ingest(const DatasetConfig& cfg, const std::string& base_dir);

// Item ids (file stems / clip names) without decoding; used by the
// train/test leakage check.
std::vector<std::string> list_item_ids(const DatasetConfig& cfg, const std::string& base_dir);

// Throws ConfigError when an item id appears in both a train and a test role.
void check_role_leakage(const std::vector<DatasetConfig>& datasets, const std::string& base_dir);

}  // namespace mrb
