#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "impact/cbuffer.hpp"
#include "impact/config.hpp"
#include "impact/distributions.hpp"
#include "impact/envs.hpp"
#include "impact/nnet.hpp"
#include "impact/objective.hpp"
#include "impact/optimizer.hpp"

namespace impact {

/// Mixes (seed, stream, index) into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Seed streams. Worker i samples actions from
/// mt19937_64(derive_seed(seed, kActionStream, i)) and resets its env for
/// episode e with derive_seed(seed, kEnvStream + i, e).
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kBufferStream = 2;
inline constexpr std::uint64_t kActionStream = 3;
inline constexpr std::uint64_t kEvalStream = 4;
inline constexpr std::uint64_t kEnvStream = 1000;

/// S consecutive steps from one worker.
struct SampleBatch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  std::vector<bool> dones;
  Eigen::VectorXd logp;
  Eigen::VectorXd values;
  Eigen::VectorXd bootstrap_obs;  // state after the last step
  int worker_id = 0;
  std::uint64_t fragment = 0;  // per-worker sequence number
  std::uint64_t policy_version = 0;
  std::vector<double> episode_returns;  // episodes completed inside this batch

  Eigen::Index rows() const { return rewards.size(); }
};

/// A maximal run of rows that is one contiguous trajectory of one worker.
struct Segment {
  Eigen::Index begin = 0;
  Eigen::Index length = 0;
  int worker_id = 0;
};

/// M rows assembled from whole sample batches; stored in one buffer slot.
struct TrainBatch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  std::vector<bool> dones;
  Eigen::VectorXd worker_logp;
  Eigen::VectorXd worker_values;
  std::vector<int> worker_ids;  // per row
  std::vector<Segment> segments;
  Eigen::MatrixXd bootstrap_obs;  // one row per segment
  std::uint64_t oldest_version = 0;
  std::vector<double> episode_returns;

  Eigen::Index rows() const { return rewards.size(); }
};

/// Per-batch data attached at the first traversal: target-network outputs
/// and the advantages derived from them.
struct TargetOutputs {
  DistBatch dist;
  Eigen::VectorXd logp;
  Eigen::VectorXd values;
  Eigen::VectorXd bootstrap_values;
  Eigen::VectorXd advantages;  // standardized if configured
  Eigen::VectorXd value_targets;
  std::uint64_t target_version = 0;
};

using ReplayBuffer = CircularBuffer<TrainBatch, TargetOutputs>;

/// Concatenates sample batches into train batches of `rows` rows.
/// Adjacent fragments of the same worker are merged into one segment.
class BatchCollector {
 public:
  explicit BatchCollector(Eigen::Index rows) : rows_(rows) {}

  /// Returns a completed train batch once enough rows have accumulated.
  std::optional<TrainBatch> add(SampleBatch batch);
  Eigen::Index pending_rows() const;

 private:
  Eigen::Index rows_;
  std::vector<SampleBatch> pending_;
};

/// Latest-wins publication cell for immutable parameter snapshots.
class WeightPublisher {
 public:
  explicit WeightPublisher(std::shared_ptr<const ParamSet> initial) : latest_(std::move(initial)) {}

  void publish(std::shared_ptr<const ParamSet> params);
  std::shared_ptr<const ParamSet> latest() const;
  std::uint64_t publications() const;

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const ParamSet> latest_;
  std::uint64_t publications_ = 0;
};

/// Welford running mean / variance used to normalize observations.
class RunningMeanStd {
 public:
  explicit RunningMeanStd(int dim) : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}

  void update(const Eigen::VectorXd& x);
  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const;
  std::uint64_t count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::VectorXd stddev() const;

  void save(const std::filesystem::path& path) const;
  static RunningMeanStd load(const std::filesystem::path& path);

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
  std::uint64_t count_ = 0;
};

/// Rolls out a private policy copy in a private environment.
class Worker {
 public:
  Worker(int id, const ExperimentConfig& config, std::shared_ptr<const ParamSet> params);

  /// Collects `steps` transitions, resetting the env across episode ends.
  SampleBatch collect(int steps);

  /// Adopts the publisher's snapshot if it is newer. Returns true on change.
  bool pull(const WeightPublisher& publisher);

  int id() const { return id_; }
  std::uint64_t policy_version() const { return params_->version; }
  const std::optional<RunningMeanStd>& filter() const { return filter_; }

 private:
  Eigen::VectorXd observe(const Eigen::VectorXd& raw);
  void begin_episode();

  int id_;
  std::uint64_t seed_;
  std::shared_ptr<const ParamSet> params_;
  std::unique_ptr<Environment> env_;
  std::mt19937_64 rng_;
  Eigen::VectorXd obs_;
  double episode_return_ = 0.0;
  std::uint64_t episode_ = 0;
  std::uint64_t fragment_ = 0;
  std::optional<RunningMeanStd> filter_;
};

/// Deep copy of the master into a fresh target snapshot.
ParamSet sync_target(const ParamSet& master);

struct LearnerStep {
  LossReport loss;
  std::uint64_t learner_steps = 0;
  std::uint64_t target_version = 0;
  std::uint64_t batch_version = 0;  // oldest producing policy version in the batch
  std::uint64_t annotation_version = 0;
  int traversals = 0;               // before this step
  bool target_synced = false;
  bool broadcast = false;
};

/// Owns the master network (theta, w), its target copy, and optimizer state.
class Learner {
 public:
  /// `config` must already be resolved.
  Learner(const ExperimentConfig& config, ParamSet initial, WeightPublisher* publisher = nullptr);

  /// One update from a buffer draw; attaches target outputs when the draw is
  /// the batch's first traversal.
  LearnerStep step(const ReplayBuffer::Draw& draw);

  /// Target outputs and advantages for a batch under the current target.
  TargetOutputs evaluate_target(const TrainBatch& batch) const;

  const ParamSet& master() const { return master_; }
  const ParamSet& target() const { return target_; }
  std::uint64_t steps() const { return steps_; }
  double kl_coeff() const { return kl_coeff_; }
  const std::deque<double>& recent_returns() const { return returns_; }
  std::uint64_t env_steps() const { return env_steps_; }

 private:
  ExperimentConfig config_;
  UpdateRule rule_;
  LossHyper hyper_;
  ParamSet master_;
  ParamSet target_;
  OptimizerState optimizer_;
  WeightPublisher* publisher_;
  std::uint64_t steps_ = 0;
  double kl_coeff_;
  std::deque<double> returns_;
  std::uint64_t env_steps_ = 0;
};

/// One learner step's worth of training metrics.
struct MetricsRow {
  double wall_clock_s = 0.0;
  std::uint64_t env_steps = 0;
  std::uint64_t learner_steps = 0;
  double mean_return = 0.0;  // NaN before the first finished episode
  double mean_kl = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  int buffer_occupancy = 0;
  std::int64_t version_lag = 0;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "wall_clock_s,env_steps,learner_steps,mean_return,mean_kl,mean_ratio,clip_fraction,buffer_occupancy,version_lag";

std::string format_metrics_row(const MetricsRow& row);

/// Appends rows to a CSV, flushing each one so a partial file stays valid.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const MetricsRow& row);

 private:
  std::ofstream out_;
};

/// Reads a metrics CSV; throws std::runtime_error on a header mismatch or a
/// malformed row.
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct RunOptions {
  std::optional<std::filesystem::path> metrics_path;
  std::optional<std::filesystem::path> checkpoint_path;
  /// Set asynchronously (e.g. from a signal handler) to stop early.
  const std::atomic<bool>* stop = nullptr;
  /// Worker thread cap; 0 reads IMPACT_THREADS, unset means one per worker.
  int thread_cap = 0;
  /// Called on the learner thread after every step with the updated master.
  std::function<void(const LearnerStep&, const ParamSet&)> on_step;
};

struct RunResult {
  ParamSet params;
  std::vector<MetricsRow> metrics;
  std::uint64_t env_steps = 0;  // rows pushed into the buffer
  std::uint64_t learner_steps = 0;
  bool interrupted = false;
  std::optional<RunningMeanStd> obs_filter;
};

/// Runs the configured experiment: W workers, one learner, the circular
/// buffer and weight publication in between. With `config.deterministic`
/// everything runs on the calling thread under a fixed schedule, and
/// wall_clock_s holds the learner step count instead of seconds.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> returns;
};

/// Greedy-policy rollouts (argmax / mean action), no learning.
EvalResult evaluate_policy(const ParamSet& params, const std::string& env, int episodes, std::uint64_t seed,
                           int max_episode_steps = 0, const RunningMeanStd* filter = nullptr);

}  // namespace impact
