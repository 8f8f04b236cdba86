#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>

#include "impact/checkpoint.hpp"
#include "impact/errors.hpp"
#include "impact/runtime.hpp"

namespace impact {

namespace {

int thread_cap_from_env() {
  if (const char* v = std::getenv("IMPACT_THREADS")) {
    const int cap = std::atoi(v);
    if (cap > 0) return cap;
  }
  return 0;
}

double mean_of(const std::deque<double>& xs) {
  if (xs.empty()) return std::nan("");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

class Run {
 public:
  Run(const ExperimentConfig& config, const RunOptions& options)
      : config_(config),
        options_(options),
        initial_(init_params(config.layout(), derive_seed(config.seed, kInitStream, 0))),
        publisher_(std::make_shared<const ParamSet>(initial_)),
        buffer_(config.buffer_slots, config.replay_k, config.allow_stale_evict,
                derive_seed(config.seed, kBufferStream, 0)),
        learner_(config, initial_, &publisher_),
        start_(std::chrono::steady_clock::now()) {
    for (int i = 0; i < config.workers; ++i) workers_.emplace_back(i, config, publisher_.latest());
    if (options.metrics_path) writer_.emplace(*options.metrics_path);
  }

  RunResult execute() {
    RunResult result;
    try {
      if (config_.total_timesteps > 0) {
        if (config_.deterministic) {
          run_scheduled(result);
        } else {
          run_threaded(result);
        }
      }
    } catch (...) {
      // Keep the last good parameters around for diagnosis.
      if (options_.checkpoint_path) save_checkpoint(*options_.checkpoint_path, learner_.master());
      throw;
    }
    result.params = learner_.master();
    result.env_steps = produced_.load();
    result.learner_steps = learner_.steps();
    result.metrics = std::move(rows_);
    if (!workers_.empty() && workers_.front().filter()) result.obs_filter = workers_.front().filter();
    if (options_.checkpoint_path) {
      save_checkpoint(*options_.checkpoint_path, result.params);
      if (result.obs_filter) result.obs_filter->save(std::filesystem::path(*options_.checkpoint_path).concat(".filter.json"));
    }
    return result;
  }

 private:
  bool stop_requested() const { return options_.stop && options_.stop->load(); }

  void record(const LearnerStep& step, std::uint64_t master_version_before) {
    MetricsRow row;
    if (config_.deterministic) {
      row.wall_clock_s = static_cast<double>(step.learner_steps);
    } else {
      row.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    row.env_steps = produced_.load();
    row.learner_steps = step.learner_steps;
    row.mean_return = mean_of(learner_.recent_returns());
    row.mean_kl = step.loss.mean_kl;
    row.mean_ratio = step.loss.mean_ratio;
    row.clip_fraction = step.loss.clip_fraction;
    row.buffer_occupancy = buffer_.live_slots();
    row.version_lag = static_cast<std::int64_t>(master_version_before) - static_cast<std::int64_t>(step.batch_version);
    if (writer_) writer_->write(row);
    rows_.push_back(row);
  }

  void learn(const ReplayBuffer::Draw& draw) {
    const std::uint64_t version = learner_.master().version;
    const LearnerStep step = learner_.step(draw);
    record(step, version);
    if (options_.on_step) options_.on_step(step, learner_.master());
  }

  // Single-threaded schedule. Workers take turns (round-robin over sample
  // batches) producing one train batch whenever the buffer accepts a push
  // without blocking; then the learner takes one step. In ppo_sync the
  // workers instead refill all N slots once every slot is exhausted.
  void run_scheduled(RunResult& result) {
    BatchCollector collector(config_.train_batch_size);
    std::size_t cursor = 0;
    auto produce = [&] {
      for (;;) {
        Worker& w = workers_[cursor];
        cursor = (cursor + 1) % workers_.size();
        w.pull(publisher_);
        auto batch = collector.add(w.collect(config_.sample_batch_size));
        if (!batch) continue;
        const auto rows = static_cast<std::uint64_t>(batch->rows());
        if (!buffer_.try_push(*batch)) throw std::logic_error("scheduled push would block");
        produced_ += rows;
        return;
      }
    };
    for (;;) {
      if (stop_requested()) {
        result.interrupted = true;
        return;
      }
      if (config_.mode == Mode::ppo_sync) {
        if (buffer_.live_slots() == 0) {
          for (int i = 0; i < config_.buffer_slots && produced_ < config_.total_timesteps; ++i) produce();
        }
      } else if (produced_ < config_.total_timesteps && buffer_.can_push()) {
        produce();
      }
      const auto draw = buffer_.try_sample();
      if (!draw) return;
      learn(*draw);
    }
  }

  void run_threaded(RunResult& result) {
    int threads = static_cast<int>(workers_.size());
    const int cap = options_.thread_cap > 0 ? options_.thread_cap : thread_cap_from_env();
    if (cap > 0) threads = std::min(threads, cap);

    std::atomic<std::uint64_t> reserved{0};
    std::atomic<bool> halt{false};
    std::atomic<int> running{threads};
    std::mutex collector_mutex;
    BatchCollector collector(config_.train_batch_size);
    std::mutex error_mutex;
    std::exception_ptr worker_error;
    const auto sample_rows = static_cast<std::uint64_t>(config_.sample_batch_size);

    auto body = [&](int slot) {
      try {
        bool done = false;
        while (!done) {
          for (std::size_t i = static_cast<std::size_t>(slot); i < workers_.size(); i += static_cast<std::size_t>(threads)) {
            if (halt || stop_requested() || reserved.fetch_add(sample_rows) >= config_.total_timesteps) {
              done = true;
              break;
            }
            Worker& w = workers_[i];
            w.pull(publisher_);
            SampleBatch sample = w.collect(config_.sample_batch_size);
            std::optional<TrainBatch> batch;
            {
              std::lock_guard lock(collector_mutex);
              batch = collector.add(std::move(sample));
            }
            if (batch) {
              const auto rows = static_cast<std::uint64_t>(batch->rows());
              if (!buffer_.push(std::move(*batch))) {
                done = true;
                break;
              }
              produced_ += rows;
            }
          }
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!worker_error) worker_error = std::current_exception();
        buffer_.shutdown();
      }
      if (--running == 0) buffer_.finish();
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(body, t);

    auto stop_all = [&] {
      halt = true;
      buffer_.shutdown();
      for (auto& t : pool) {
        if (t.joinable()) t.join();
      }
    };
    try {
      while (auto draw = buffer_.sample()) {
        if (stop_requested()) {
          result.interrupted = true;
          break;
        }
        learn(*draw);
      }
      if (stop_requested()) result.interrupted = true;
    } catch (...) {
      stop_all();
      throw;
    }
    stop_all();
    if (worker_error) std::rethrow_exception(worker_error);
  }

  ExperimentConfig config_;
  RunOptions options_;
  ParamSet initial_;
  WeightPublisher publisher_;
  ReplayBuffer buffer_;
  Learner learner_;
  std::vector<Worker> workers_;
  std::optional<MetricsWriter> writer_;
  std::vector<MetricsRow> rows_;
  std::atomic<std::uint64_t> produced_{0};
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Run run(config.resolved(), options);
  return run.execute();
}

EvalResult evaluate_policy(const ParamSet& params, const std::string& env_id, int episodes, std::uint64_t seed,
                           int max_episode_steps, const RunningMeanStd* filter) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  auto env = make_env(env_id, max_episode_steps);
  EvalResult result;
  Eigen::MatrixXd row(1, env->spec().obs_dim);
  for (int e = 0; e < episodes; ++e) {
    Eigen::VectorXd obs = env->reset(derive_seed(seed, kEvalStream, static_cast<std::uint64_t>(e)));
    double total = 0.0;
    while (!env->done()) {
      row = (filter ? filter->normalize(obs) : obs).transpose();
      const Action action = mode(impact::row(forward_policy(params, row), 0));
      const StepResult step = env->step(action);
      total += step.reward;
      obs = step.obs;
    }
    result.returns.push_back(total);
  }
  const double n = static_cast<double>(episodes);
  result.mean = std::accumulate(result.returns.begin(), result.returns.end(), 0.0) / n;
  double var = 0.0;
  for (double r : result.returns) var += (r - result.mean) * (r - result.mean);
  result.stddev = std::sqrt(var / n);
  return result;
}

}  // namespace impact
