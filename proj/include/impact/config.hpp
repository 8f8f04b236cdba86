#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "impact/nnet.hpp"
#include "impact/objective.hpp"
#include "impact/optimizer.hpp"

namespace impact {

enum class Profile { discrete, continuous };

/// Training mode, in order of the IMPALA -> IMPACT ladder plus synchronous PPO.
///  - impala_is: IS policy gradient on worker ratios, V-trace targets, K = 1
///  - appo:      + eps-clipped surrogate and replay (K > 1), worker ratios
///  - impact:    + target network and the clipped target-worker ratio
///  - ppo_sync:  workers and learner alternate; fresh target per train phase
enum class Mode { impala_is, appo, impact, ppo_sync };

std::string to_string(Profile profile);
std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);
Profile profile_from_string(const std::string& name);

struct ExperimentConfig {
  std::string env = "cartpole";
  Profile profile = Profile::discrete;
  Mode mode = Mode::impact;
  RatioVariant variant = RatioVariant::r3;

  int workers = 2;
  int sample_batch_size = 50;   // S
  int train_batch_size = 500;   // M
  int buffer_slots = 4;         // N
  int replay_k = 2;             // K
  int t_target = 0;             // learner steps; 0 means N * K
  int t_frequency = 1;          // learner steps between weight broadcasts

  double lr = 1e-4;
  double value_lr = 0.0;  // 0 shares `lr`
  bool lr_anneal = false;  // linear decay to zero over total_timesteps
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 10.0;

  double gamma = 0.99;
  double lambda = 0.995;
  double vtrace_clip_c = 1.0;
  double vtrace_clip_rho = 1.0;

  bool use_eps_clip = true;
  double clip_eps = 0.3;
  double target_clip_rho = 2.0;
  double kl_coeff = 0.0;
  double kl_target = 0.01;
  bool adaptive_kl = true;
  bool kl_swap = false;
  double entropy_coeff = 0.01;
  double value_coeff = 1.0;
  bool standardize_advantages = true;
  bool value_from_target = true;

  std::vector<int> hidden = {64, 64};
  bool shared_value = false;
  double log_std_init = 0.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  bool allow_stale_evict = false;
  bool obs_filter = false;
  int max_episode_steps = 200;

  std::uint64_t total_timesteps = 300000;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::uint64_t seed = 1;  // seed of the current run
  int eval_episodes = 10;
  int metrics_window = 100;
  bool deterministic = false;

  int desk_divisor = 16;
  bool paper_scale = false;

  std::string metrics_path;

  bool operator==(const ExperimentConfig&) const = default;

  /// Throws ConfigError on any invariant violation.
  void validate() const;

  /// Parameters as actually used by the runtime: mode overrides applied and
  /// t_target resolved.
  ExperimentConfig resolved() const;

  NetLayout layout() const;
  UpdateRule update_rule() const;
  LossHyper loss_hyper() const;
};

/// Built-in defaults. Continuous S and M are divided by `desk_divisor`
/// unless `paper_scale` is set.
ExperimentConfig profile_defaults(Profile profile, int desk_divisor = 16, bool paper_scale = false);
Profile profile_for_env(const std::string& env);

using KeyValue = std::pair<std::string, std::string>;

/// Parses "key=value" (whitespace around either side is ignored).
KeyValue parse_override(const std::string& text);

/// Parses a flat key-value text: one `key = value` per line, `#` comments.
std::vector<KeyValue> parse_key_values(const std::string& text);

/// Layered resolution: profile -> entries in order. The env id must appear
/// among the entries. Unknown keys and ill-typed values throw ConfigError.
ExperimentConfig resolve_config(const std::vector<KeyValue>& entries);

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::string>& overrides);

/// Applies one setting to an existing config (no validation).
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& config, const std::string& key);
const std::vector<std::string>& config_keys();

/// Full key-value text, accepted back by `parse_key_values`.
std::string serialize_config(const ExperimentConfig& config);

}  // namespace impact
