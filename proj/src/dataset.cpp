#include "mrb/dataset.hpp"

#include <algorithm>
#include <filesystem>

#include "mrb/image_io.hpp"

namespace mrb {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".png";
}

std::vector<fs::path> sorted_image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory missing: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Trailing integer of the stem, e.g. frame_0042 -> 42; -1 when absent.
long frame_number(const fs::path& p) {
  const std::string stem = p.stem().string();
  size_t i = stem.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(stem[i - 1]))) --i;
  if (i == stem.size()) return -1;
  return std::stol(stem.substr(i));
}

}  // namespace

size_t LoadedDataset::image_count() const {
  size_t n = 0;
  for (const Clip& c : clips) n += c.frames.size();
  return n;
}

std::vector<Image> LoadedDataset::all_frames() const {
  std::vector<Image> out;
  out.reserve(image_count());
  for (const Clip& c : clips)
    for (const Image& f : c.frames) out.push_back(f);
  return out;
}

std::vector<std::string> LoadedDataset::item_ids() const {
  std::vector<std::string> ids;
  ids.reserve(clips.size());
  for (const Clip& c : clips) ids.push_back(c.id);
  return ids;
}

std::vector<std::string> list_item_ids(const DatasetConfig& cfg, const std::string& base_dir) {
  fs::path root(cfg.path);
  if (root.is_relative() && !base_dir.empty()) root = fs::path(base_dir) / root;
  std::vector<std::string> ids;
  if (cfg.kind == "frame-sequence") {
    if (!fs::is_directory(root)) throw IoError("dataset directory missing: " + root.string());
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory()) ids.push_back(e.path().filename().string());
    }
  } else {
    for (const fs::path& f : sorted_image_files(root)) ids.push_back(f.stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void check_role_leakage(const std::vector<DatasetConfig>& datasets, const std::string& base_dir) {
  std::vector<std::string> train_ids, test_ids;
  for (const DatasetConfig& d : datasets) {
    if (d.role != "train" && d.role != "test") continue;
    std::vector<std::string> ids;
    try {
      ids = list_item_ids(d, base_dir);
    } catch (const IoError&) {
      continue;  // unreadable dataset: its cells fail individually at ingest
    }
    auto& bucket = (d.role == "train") ? train_ids : test_ids;
    bucket.insert(bucket.end(), ids.begin(), ids.end());
  }
  std::sort(train_ids.begin(), train_ids.end());
  std::sort(test_ids.begin(), test_ids.end());
  std::vector<std::string> both;
  std::set_intersection(train_ids.begin(), train_ids.end(), test_ids.begin(), test_ids.end(),
                        std::back_inserter(both));
  if (!both.empty()) {
    throw ConfigError("datasets: item '" + both.front() +
                      "' appears in both train and test roles");
  }
}

LoadedDataset ingest(const DatasetConfig& cfg, const std::string& base_dir) {
  fs::path root(cfg.path);
  if (root.is_relative() && !base_dir.empty()) root = fs::path(base_dir) / root;

  LoadedDataset ds;
  ds.cfg = cfg;
  if (cfg.kind == "image-set") {
    for (const fs::path& f : sorted_image_files(root)) {
      Clip c;
      c.id = f.stem().string();
      c.frames.push_back(load_image(f.string()));
      ds.clips.push_back(std::move(c));
    }
  } else if (cfg.kind == "frame-sequence") {
    if (!fs::is_directory(root)) throw IoError("dataset directory missing: " + root.string());
    std::vector<fs::path> clip_dirs;
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory()) clip_dirs.push_back(e.path());
    }
    std::sort(clip_dirs.begin(), clip_dirs.end());
    if (clip_dirs.empty()) throw IoError("frame-sequence dataset has no clip directories: " + root.string());
    for (const fs::path& cd : clip_dirs) {
      auto files = sorted_image_files(cd);
      if (files.empty()) throw IoError("clip has no frames: " + cd.string());
      std::vector<std::pair<long, fs::path>> numbered;
      for (const auto& f : files) {
        const long n = frame_number(f);
        if (n < 0) throw IoError("frame file lacks a numeric suffix: " + f.string());
        numbered.emplace_back(n, f);
      }
      std::sort(numbered.begin(), numbered.end());
      for (size_t i = 0; i < numbered.size(); ++i) {
        const long expect = numbered.front().first + static_cast<long>(i);
        if (numbered[i].first != expect) {
          throw IoError("clip " + cd.string() + " is missing frame index " +
                        std::to_string(expect));
        }
      }
      Clip c;
      c.id = cd.filename().string();
      for (const auto& [n, f] : numbered) c.frames.push_back(load_image(f.string()));
      ds.clips.push_back(std::move(c));
    }
  } else {
    throw ConfigError("dataset '" + cfg.id + "' has unknown kind '" + cfg.kind + "'");
  }
  if (ds.clips.empty()) throw IoError("dataset '" + cfg.id + "' is empty");
  return ds;
}

}  // namespace mrb
