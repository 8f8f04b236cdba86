#include <algorithm>

#include "impact/errors.hpp"
#include "impact/gae.hpp"
#include "impact/runtime.hpp"

namespace impact {

ParamSet sync_target(const ParamSet& master) { return master; }

Learner::Learner(const ExperimentConfig& config, ParamSet initial, WeightPublisher* publisher)
    : config_(config),
      rule_(config.update_rule()),
      hyper_(config.loss_hyper()),
      master_(std::move(initial)),
      target_(sync_target(master_)),
      publisher_(publisher),
      kl_coeff_(config.kl_coeff) {
  if (config_.t_target < 1) throw ConfigError("learner needs a resolved t_target >= 1");
  hyper_.validate();
}

TargetOutputs Learner::evaluate_target(const TrainBatch& batch) const {
  TargetOutputs out;
  const ForwardCache target = forward(target_, batch.obs);
  const ParamSet& value_net = config_.value_from_target ? target_ : master_;
  out.dist = target.dist;
  out.logp = log_prob(target.dist, batch.actions);
  out.values = config_.value_from_target ? target.values : forward_value(master_, batch.obs);
  out.bootstrap_values = forward_value(value_net, batch.bootstrap_obs);
  out.target_version = target_.version;

  const Eigen::Index n = batch.rows();
  out.advantages.resize(n);
  out.value_targets.resize(n);
  for (std::size_t s = 0; s < batch.segments.size(); ++s) {
    const Segment& seg = batch.segments[s];
    TrajectorySlice<double> slice;
    slice.rewards = batch.rewards.segment(seg.begin, seg.length);
    slice.dones.assign(batch.dones.begin() + seg.begin, batch.dones.begin() + seg.begin + seg.length);
    slice.values = out.values.segment(seg.begin, seg.length);
    slice.bootstrap_value = out.bootstrap_values(static_cast<Eigen::Index>(s));
    slice.log_rhos = out.logp.segment(seg.begin, seg.length) - batch.worker_logp.segment(seg.begin, seg.length);
    slice.gamma = config_.gamma;
    slice.lambda = config_.lambda;
    slice.clip_c = config_.vtrace_clip_c;
    slice.clip_rho = config_.vtrace_clip_rho;
    const AdvantageSet<double> adv =
        config_.mode == Mode::impala_is ? vtrace_pg_advantages(slice) : vgae_advantages(slice);
    out.advantages.segment(seg.begin, seg.length) = adv.advantages;
    out.value_targets.segment(seg.begin, seg.length) = adv.value_targets;
  }
  if (config_.standardize_advantages) out.advantages = standardize(out.advantages);
  if (!out.advantages.allFinite() || !out.value_targets.allFinite()) {
    throw NumericalError("non-finite advantages or value targets");
  }
  return out;
}

LearnerStep Learner::step(const ReplayBuffer::Draw& draw) {
  auto& entry = *draw.entry;
  const TrainBatch& batch = entry.batch;
  LearnerStep info;
  info.traversals = draw.traversals;
  info.batch_version = batch.oldest_version;
  if (!entry.annotation) {
    entry.annotation = evaluate_target(batch);
    env_steps_ += static_cast<std::uint64_t>(batch.rows());
    for (double r : batch.episode_returns) {
      returns_.push_back(r);
      if (static_cast<int>(returns_.size()) > config_.metrics_window) returns_.pop_front();
    }
  }
  const TargetOutputs& target = *entry.annotation;
  info.annotation_version = target.target_version;

  const ForwardCache current = forward(master_, batch.obs);
  LossInputs inputs{current.dist,  target.dist,   batch.worker_logp,   batch.actions,
                    target.advantages, current.values, target.value_targets};
  hyper_.kl_coeff = kl_coeff_;
  const LossResult loss = surrogate_loss(inputs, hyper_);
  const GradSet grads = backward(master_, current, loss.upstream);
  UpdateRule rule = rule_;
  if (config_.lr_anneal && config_.total_timesteps > 0) {
    const double left = std::max(0.0, 1.0 - static_cast<double>(env_steps_) / static_cast<double>(config_.total_timesteps));
    rule.lr *= left;
    if (rule.value_lr) *rule.value_lr *= left;
  }
  master_ = apply_update(master_, grads, optimizer_, rule);
  ++steps_;
  info.loss = loss.report;
  info.learner_steps = steps_;

  if (config_.adaptive_kl) kl_coeff_ = adaptive_kl_update(kl_coeff_, loss.report.mean_kl, config_.kl_target);
  if (steps_ % static_cast<std::uint64_t>(config_.t_target) == 0) {
    target_ = sync_target(master_);
    info.target_synced = true;
  }
  if (publisher_ && steps_ % static_cast<std::uint64_t>(config_.t_frequency) == 0) {
    publisher_->publish(std::make_shared<const ParamSet>(master_));
    info.broadcast = true;
  }
  info.target_version = target_.version;
  return info;
}

}  // namespace impact
