#pragma once

#include <atomic>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "impact/config.hpp"
#include "impact/runtime.hpp"

namespace impact {

/// Set by SIGINT/SIGTERM while a command runs; runs stop at the next step.
std::atomic<bool>& interrupt_flag();

struct SeedArtifacts {
  std::uint64_t seed = 0;
  std::filesystem::path metrics;
  std::filesystem::path checkpoint;
  EvalResult eval;
  bool interrupted = false;
};

/// Runs every configured seed in sequence into `out_dir`, writing
/// metrics_seed<N>.csv, checkpoint_seed<N>.bin, config.txt and
/// manifest.json. Greedy evaluation of each final policy goes in the manifest.
std::vector<SeedArtifacts> train_seeds(const ExperimentConfig& config, const std::filesystem::path& out_dir);

enum class Study { ratios, target_frequency, buffer_k, ladder };

Study study_from_string(const std::string& name);
std::string to_string(Study study);

struct StudyVariant {
  std::string tag;
  std::vector<KeyValue> overrides;
};

/// Expands an ablation study into tagged config overrides.
std::vector<StudyVariant> expand_study(Study study, const ExperimentConfig& base);

/// Cartesian product of `key=v1,v2,...` grid axes (';' separates values
/// when present, for list-valued keys).
std::vector<StudyVariant> expand_grid(const std::vector<std::string>& axes);

/// Entry point shared by the `impact` executable and the tests.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace impact
