#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mrb {

// Minimal SHA-256 (FIPS 180-4), used for config digests and attacked-image
// fingerprints. Not a performance path.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }
  // Lowercase hex digest; finalizes an internal copy so the object stays usable.
  std::string hex() const;

 private:
  void process_block(const uint8_t* p);
  void finalize(uint8_t out[32]) const;

  uint32_t h_[8];
  uint64_t total_ = 0;
  uint8_t buf_[64];
  size_t buf_len_ = 0;
};

std::string sha256_hex(const std::string& data);
std::string sha256_hex(const std::vector<uint8_t>& data);

}  // namespace mrb
