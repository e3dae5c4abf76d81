#ifndef PROTOMOCO_ERRORS_HPP
#define PROTOMOCO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace protomoco {

/// Base class for all protomoco exceptions.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or extent mismatch between tensors; the message names both shapes.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// Vector with (near-)zero norm where a direction is required.
class DegenerateVectorError : public Error {
 public:
  explicit DegenerateVectorError(const std::string& msg) : Error(msg) {}
};

/// Crop request that would produce an empty image.
class DegenerateCropError : public Error {
 public:
  explicit DegenerateCropError(const std::string& msg) : Error(msg) {}
};

/// API misuse: a precondition on the call itself was violated.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

/// Episode cannot be sampled from the given data; names the offending class.
class EpisodeInfeasibleError : public Error {
 public:
  explicit EpisodeInfeasibleError(const std::string& msg) : Error(msg) {}
};

/// Metric denominator is zero; raised instead of silently reporting 0.
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& msg) : Error(msg) {}
};

/// Invalid configuration file or value.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Filesystem or format failure while reading/writing datasets and checkpoints.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace protomoco

#endif  // PROTOMOCO_ERRORS_HPP
