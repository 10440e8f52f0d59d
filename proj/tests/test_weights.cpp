#include <doctest.h>

#include <filesystem>

#include "mrb/digest.hpp"
#include "mrb/models.hpp"
#include "mrb/weights.hpp"

using namespace mrb;

namespace {

std::string tmp_stem(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("sha256 matches the FIPS test vector") {
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string()) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("weight files round-trip bit-exactly") {
  WeightFile w = init_metric_weights("tiny-cnn-nr", 1234);
  const std::string stem = tmp_stem("mrb_weights_roundtrip");
  save_weights(stem, w);
  WeightFile r = load_weights(stem);
  CHECK(r.params.size() == w.params.size());
  for (const auto& [name, t] : w.tensors) {
    CHECK(r.tensors.at(name).bit_equal(t));
  }
}

TEST_CASE("loader validates the blob length") {
  WeightFile w = init_metric_weights("tiny-cnn-nr", 99);
  const std::string stem = tmp_stem("mrb_weights_truncated");
  save_weights(stem, w);
  std::string blob = read_file_bytes(stem + ".f64");
  blob.resize(blob.size() - 8);
  write_file_bytes(stem + ".f64", blob);
  CHECK_THROWS_AS(load_weights(stem), IoError);
}

TEST_CASE("f64le encoding is little-endian by construction") {
  Array a(1);
  a[0] = 1.0;  // 0x3FF0000000000000
  auto bytes = encode_f64le(a);
  REQUIRE(bytes.size() == 8);
  CHECK(bytes[7] == 0x3f);
  CHECK(bytes[6] == 0xf0);
  CHECK(bytes[0] == 0x00);
  Array back = decode_f64le(bytes);
  CHECK(back[0] == 1.0);
}
