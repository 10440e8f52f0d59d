#pragma once

#include <stdexcept>
#include <string>

namespace mrb {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct GraphError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct CalibrationError : Error { using Error::Error; };
struct AttackError : Error { using Error::Error; };

}  // namespace mrb
