#include "mrb/weights.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace mrb {

using nlohmann::json;

std::vector<uint8_t> encode_f64le(const Array& a) {
  std::vector<uint8_t> out(static_cast<size_t>(a.size()) * 8);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    uint64_t bits;
    std::memcpy(&bits, &a[i], 8);
    for (int b = 0; b < 8; ++b) out[static_cast<size_t>(i) * 8 + b] = uint8_t(bits >> (8 * b));
  }
  return out;
}

Array decode_f64le(const std::vector<uint8_t>& bytes) {
  if (bytes.size() % 8 != 0) throw IoError("f64 blob length not a multiple of 8");
  Array a(static_cast<Eigen::Index>(bytes.size() / 8));
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= uint64_t(bytes[static_cast<size_t>(i) * 8 + b]) << (8 * b);
    double v;
    std::memcpy(&v, &bits, 8);
    a[i] = v;
  }
  return a;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed for " + path);
  return s;
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path);
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  std::string tmp = path + ".tmp";
  write_file_bytes(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("atomic rename to " + path + " failed: " + ec.message());
}

WeightFile load_weights(const std::string& stem) {
  json manifest;
  try {
    manifest = json::parse(read_file_bytes(stem + ".json"));
  } catch (const json::exception& e) {
    throw IoError("bad weight manifest " + stem + ".json: " + e.what());
  }
  WeightFile w;
  w.model = manifest.value("model", "");
  if (manifest.value("dtype", "f64le") != "f64le") {
    throw IoError("unsupported weight dtype in " + stem + ".json");
  }
  Eigen::Index total = 0;
  for (const auto& p : manifest.at("params")) {
    ParamSpec ps;
    ps.name = p.at("name").get<std::string>();
    ps.shape = p.at("shape").get<std::vector<int>>();
    ps.initializer = p.value("initializer", "");
    total += shape_numel(ps.shape);
    w.params.push_back(std::move(ps));
  }
  std::string blob = read_file_bytes(stem + ".f64");
  if (static_cast<Eigen::Index>(blob.size()) != total * 8) {
    throw IoError("weight blob " + stem + ".f64 holds " + std::to_string(blob.size()) +
                  " bytes, manifest expects " + std::to_string(total * 8));
  }
  Array all = decode_f64le(std::vector<uint8_t>(blob.begin(), blob.end()));
  Eigen::Index off = 0;
  for (const ParamSpec& ps : w.params) {
    Eigen::Index n = shape_numel(ps.shape);
    w.tensors.emplace(ps.name, Tensor(ps.shape, all.segment(off, n)));
    off += n;
  }
  return w;
}

void save_weights(const std::string& stem, const WeightFile& w) {
  json manifest;
  manifest["model"] = w.model;
  manifest["dtype"] = "f64le";
  manifest["params"] = json::array();
  Eigen::Index total = 0;
  for (const ParamSpec& ps : w.params) total += shape_numel(ps.shape);
  Array all(total);
  Eigen::Index off = 0;
  for (const ParamSpec& ps : w.params) {
    json p;
    p["name"] = ps.name;
    p["shape"] = ps.shape;
    if (!ps.initializer.empty()) p["initializer"] = ps.initializer;
    manifest["params"].push_back(p);
    const Tensor& t = w.tensors.at(ps.name);
    if (t.shape() != ps.shape) throw ShapeError("weight tensor/manifest mismatch for " + ps.name);
    all.segment(off, t.numel()) = t.array();
    off += t.numel();
  }
  write_file_bytes(stem + ".json", manifest.dump(2) + "\n");
  auto bytes = encode_f64le(all);
  write_file_bytes(stem + ".f64", std::string(bytes.begin(), bytes.end()));
}

}  // namespace mrb
