#include "mrb/ledger.hpp"

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "mrb/errors.hpp"
#include "mrb/weights.hpp"

#ifdef __VERSION__
#define MRB_COMPILER __VERSION__
#else
#define MRB_COMPILER "unknown"
#endif

namespace mrb {

using nlohmann::json;

RunLedger load_ledger(const std::string& path) {
  RunLedger ledger;
  if (!std::filesystem::exists(path)) return ledger;
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const json::exception& e) {
    throw IoError("corrupt ledger " + path + ": " + e.what());
  }
  ledger.config_digest = j.value("config_digest", "");
  ledger.environment = j.value("environment", "");
  if (j.contains("cells")) {
    for (const auto& c : j.at("cells")) {
      CellRecord r;
      r.key = c.at("key").get<std::string>();
      r.status = c.at("status").get<std::string>();
      r.reason = c.value("reason", "");
      r.wall_ms = c.value("wall_ms", 0.0);
      ledger.cells[r.key] = std::move(r);
    }
  }
  return ledger;
}

void save_ledger(const std::string& path, const RunLedger& ledger) {
  json j;
  j["config_digest"] = ledger.config_digest;
  j["environment"] = ledger.environment;
  j["cells"] = json::array();
  for (const auto& [key, r] : ledger.cells) {
    json c;
    c["key"] = r.key;
    c["status"] = r.status;
    if (!r.reason.empty()) c["reason"] = r.reason;
    c["wall_ms"] = r.wall_ms;
    j["cells"].push_back(c);
  }
  write_file_atomic(path, j.dump(2) + "\n");
}

std::string environment_fingerprint() {
  std::ostringstream os;
  os << "cxx=" << MRB_COMPILER;
#if defined(__linux__)
  os << ";os=linux";
#elif defined(__APPLE__)
  os << ";os=darwin";
#else
  os << ";os=other";
#endif
  os << ";eigen=" << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "."
     << EIGEN_MINOR_VERSION;
  return os.str();
}

}  // namespace mrb
