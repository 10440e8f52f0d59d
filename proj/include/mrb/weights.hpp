#pragma once

#include <map>
#include <string>
#include <vector>

#include "mrb/tensor.hpp"

namespace mrb {

// One named parameter tensor as listed in a weight manifest.
struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  std::string initializer;  // provenance only; ignored by the loader
};

struct WeightFile {
  std::string model;
  std::vector<ParamSpec> params;          // manifest order == blob order
  std::map<std::string, Tensor> tensors;  // by name
};

// Weight files are a pair: <stem>.json (manifest) and <stem>.f64 (row-major
// little-endian doubles in manifest order). The loader validates that the
// blob length matches the manifest exactly.
WeightFile load_weights(const std::string& stem);
void save_weights(const std::string& stem, const WeightFile& w);

std::vector<uint8_t> encode_f64le(const Array& a);
Array decode_f64le(const std::vector<uint8_t>& bytes);

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);
// Write via temp file + rename so readers never observe partial contents.
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace mrb
