#pragma once

#include <map>
#include <string>

namespace mrb {

struct CellRecord {
  std::string key;
  std::string status;  // "done" | "failed"
  std::string reason;  // failure detail
  double wall_ms = 0.0;
};

// Append-only run state: cells move to done/failed and never disappear.
// Persisted as JSON with atomic replacement.
struct RunLedger {
  std::string config_digest;
  std::string environment;
  std::map<std::string, CellRecord> cells;

  bool is_done(const std::string& key) const {
    auto it = cells.find(key);
    return it != cells.end() && it->second.status == "done";
  }
};

RunLedger load_ledger(const std::string& path);  // missing file -> empty ledger
void save_ledger(const std::string& path, const RunLedger& ledger);

std::string environment_fingerprint();

}  // namespace mrb
