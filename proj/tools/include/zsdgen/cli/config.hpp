#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "zsdgen/datakit.hpp"
#include "zsdgen/detector.hpp"
#include "zsdgen/metrics.hpp"
#include "zsdgen/trainer.hpp"

namespace zsdgen::cli {

// Bad configuration file content. key() is empty for syntax errors.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  std::uint64_t seed = 42;
  ToyWorldSpec world;
  TrainConfig train;
  DetectOptions detect;
  double iou_threshold = 0.5;
  std::size_t recall_k = 100;
  ApMode ap_mode = ApMode::AllPoint;

  std::filesystem::path out_dir = "run";
  // Inputs; when unset, commands read the artifacts in out_dir.
  std::optional<std::filesystem::path> semantics_path;
  std::optional<std::filesystem::path> features_path;
  std::optional<std::filesystem::path> scenes_path;

  void validate() const;
};

/// Line-oriented `key = value` file; `#` starts a comment, strings may be
/// quoted. Absent keys keep their defaults. Input paths must exist.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>");

}  // namespace zsdgen::cli
