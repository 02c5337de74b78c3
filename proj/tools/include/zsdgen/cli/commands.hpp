#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsdgen/cli/config.hpp"

namespace zsdgen::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitMissingPrerequisite = 2,
  kExitDivergence = 3,
};

class MissingPrerequisite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An output exists and overwriting was disabled.
class OutputExists : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File names of every artifact inside the output directory.
struct Artifacts {
  explicit Artifacts(const RunConfig& cfg);

  std::filesystem::path semantics;
  std::filesystem::path features;
  std::filesystem::path scenes;
  std::filesystem::path seen_head;
  std::filesystem::path semantic_classifier;
  std::filesystem::path generator;
  std::filesystem::path critic;
  std::filesystem::path train_log;
  std::filesystem::path training_summary;
  std::filesystem::path synthetic;
  std::filesystem::path head;
  std::filesystem::path classifier_summary;
  std::filesystem::path detections;
  std::filesystem::path baseline_detections;
  std::filesystem::path report;
  std::filesystem::path baseline_report;
  std::filesystem::path grad_check;
};

struct RunOptions {
  bool no_clobber = false;
  std::ostream* progress = nullptr;  // stderr when null
};

const std::vector<std::string>& command_names();

// Each command throws on failure; run_command maps exceptions to exit codes.
void cmd_gen_data(const RunConfig& cfg, const RunOptions& opts);
void cmd_train_gan(const RunConfig& cfg, const RunOptions& opts);
void cmd_synthesize(const RunConfig& cfg, const RunOptions& opts);
void cmd_train_classifier(const RunConfig& cfg, const RunOptions& opts);
void cmd_detect(const RunConfig& cfg, const RunOptions& opts);
void cmd_evaluate(const RunConfig& cfg, const RunOptions& opts);
void cmd_grad_check(const RunConfig& cfg, const RunOptions& opts);
void cmd_pipeline(const RunConfig& cfg, const RunOptions& opts);

/// Runs one command and returns its exit status: 0 on success, 2 for a
/// missing prerequisite, 3 for numeric divergence, 1 otherwise. The
/// diagnostic goes to the progress stream.
int run_command(const std::string& name, const RunConfig& cfg, const RunOptions& opts = {});

}  // namespace zsdgen::cli
