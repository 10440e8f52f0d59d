#pragma once

#include <string>
#include <vector>

namespace mrb {

// Single source for the attack catalog: CLI help and the generated docs both
// read this table.
struct CatalogEntry {
  std::string name;
  std::string synopsis;
  std::string parameters;
};

const std::vector<CatalogEntry>& attack_catalog();

// Man-style markdown rendering of the catalog.
std::string render_attack_docs();

}  // namespace mrb
