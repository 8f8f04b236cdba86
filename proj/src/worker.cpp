#include "impact/runtime.hpp"

namespace impact {

Worker::Worker(int id, const ExperimentConfig& config, std::shared_ptr<const ParamSet> params)
    : id_(id),
      seed_(config.seed),
      params_(std::move(params)),
      env_(make_env(config.env, config.max_episode_steps)),
      rng_(derive_seed(config.seed, kActionStream, static_cast<std::uint64_t>(id))) {
  if (config.obs_filter) filter_.emplace(env_->spec().obs_dim);
}

Eigen::VectorXd Worker::observe(const Eigen::VectorXd& raw) {
  if (!filter_) return raw;
  filter_->update(raw);
  return filter_->normalize(raw);
}

void Worker::begin_episode() {
  const std::uint64_t env_seed = derive_seed(seed_, kEnvStream + static_cast<std::uint64_t>(id_), episode_++);
  obs_ = observe(env_->reset(env_seed));
  episode_return_ = 0.0;
}

bool Worker::pull(const WeightPublisher& publisher) {
  auto latest = publisher.latest();
  if (!latest || latest->version <= params_->version) return false;
  params_ = std::move(latest);
  return true;
}

SampleBatch Worker::collect(int steps) {
  const EnvSpec spec = env_->spec();
  SampleBatch b;
  b.obs.resize(steps, spec.obs_dim);
  b.actions.resize(steps, spec.action_width());
  b.rewards.resize(steps);
  b.dones.resize(static_cast<std::size_t>(steps));
  b.logp.resize(steps);
  b.values.resize(steps);
  b.worker_id = id_;
  b.fragment = fragment_++;
  b.policy_version = params_->version;

  Eigen::MatrixXd row(1, spec.obs_dim);
  for (int t = 0; t < steps; ++t) {
    if (env_->done()) begin_episode();
    row = obs_.transpose();
    const ForwardCache out = forward(*params_, row);
    const DistParams dist = impact::row(out.dist, 0);
    const Action action = sample(dist, rng_);
    b.obs.row(t) = obs_.transpose();
    b.actions.row(t) = action.transpose();
    b.logp(t) = log_prob(dist, action);
    b.values(t) = out.values(0);

    const StepResult step = env_->step(action);
    b.rewards(t) = step.reward;
    b.dones[static_cast<std::size_t>(t)] = step.done;
    episode_return_ += step.reward;
    if (step.done) b.episode_returns.push_back(episode_return_);
    obs_ = observe(step.obs);
  }
  b.bootstrap_obs = obs_;
  return b;
}

}  // namespace impact
