#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "edd/config.hpp"

namespace edd {

// A stage was asked to run before the stage it depends on, or the dependency
// was produced under a different configuration. The message names the stage
// that has to run first.
struct PrerequisiteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class StageStatus {
  completed,  // the stage ran and its artifacts were (re)written
  skipped,    // the manifest already records this stage for this config
};

struct StageResult {
  StageStatus status = StageStatus::completed;
  std::string message;  // one human-readable line about what happened
};

// The six stages in dependency order:
//   prepare   - load the dataset, normalize, cache both splits under data/
//   pretext   - per repetition seed, self-supervised base for the distilled model
//   ensemble  - per repetition seed, the M-member ensemble and a single baseline
//   distill   - per repetition seed, the prior network distilled from the ensemble
//   evaluate  - per repetition seed, clean + adversarial metrics (eval.json/.csv)
//   report    - aggregate across repetitions (report.json/.csv)
const std::vector<std::string>& pipeline_stages();

// Complete configuration for a self-contained synthetic-data run. Every key
// the pipeline reads appears here with its default value.
std::string default_config_text();

// Runs one stage against run_dir, creating it if needed.
//
// Idempotence: each finished stage records the active config hash in
// run_dir/manifest.json (artifacts first, manifest entry last, every file
// written to a temp name and renamed). Re-running a recorded stage with an
// unchanged config is a no-op; any config change re-runs every stage.
//
// Errors: unknown stage or bad config keys -> ConfigError; missing or
// config-mismatched dependency -> PrerequisiteError naming the stage to run.
StageResult run_stage(const std::string& stage, const Config& cfg,
                      const std::string& run_dir);

}  // namespace edd
