#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "nodefilter/error.hpp"
#include "nodefilter/model.hpp"

namespace nodefilter {

// Compact JSON with sorted keys.
std::string model_config_to_json(const ModelConfig& config);
// Missing keys keep their defaults; unknown keys and ill-typed values throw
// ConfigError.
ModelConfig model_config_from_json(std::string_view json);

// Model checkpoint, little-endian:
//   "PFM1" | u32 version=1 | u64 config length | config JSON
//   | u32 tensor count | per tensor: u32 name length | name | u32 ndim
//   | ndim x u64 dims | f64 values
class CheckpointFormatError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct Checkpoint {
  ModelConfig config;
  ModelState state;
};

void write_checkpoint(const ModelConfig& config, ModelState& state, std::ostream& out);
void write_checkpoint(const ModelConfig& config, ModelState& state, const std::filesystem::path& path);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace nodefilter
