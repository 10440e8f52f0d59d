#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrb/metrics.hpp"
#include "mrb/weights.hpp"

namespace mrb {

// Parameter layout of a shipped weighted metric, in weight-file order.
std::vector<ParamSpec> metric_param_specs(const std::string& name);

// Deterministic fan-in-scaled initialization; used to mint fixture weights.
WeightFile init_metric_weights(const std::string& name, uint64_t seed);

}  // namespace mrb
