#pragma once

// Reference computations written independently of the library code they
// check. Shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "impact/distributions.hpp"
#include "impact/envs.hpp"
#include "impact/gae.hpp"
#include "impact/nnet.hpp"
#include "impact/objective.hpp"
#include "impact/runtime.hpp"

namespace impact::testing {

/// Plain GAE-lambda as an explicit truncated sum of discounted TD errors.
inline Eigen::VectorXd vanilla_gae(const Eigen::VectorXd& rewards, const std::vector<bool>& dones,
                                   const Eigen::VectorXd& values, double bootstrap, double gamma, double lambda) {
  const Eigen::Index n = rewards.size();
  Eigen::VectorXd delta(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double next = t + 1 < n ? values(t + 1) : bootstrap;
    if (dones[static_cast<std::size_t>(t)]) next = 0.0;
    delta(t) = rewards(t) + gamma * next - values(t);
  }
  Eigen::VectorXd adv = Eigen::VectorXd::Zero(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double weight = 1.0;
    for (Eigen::Index i = t; i < n; ++i) {
      adv(t) += weight * delta(i);
      if (dones[static_cast<std::size_t>(i)]) break;
      weight *= gamma * lambda;
    }
  }
  return adv;
}

/// On-policy n-step return to the end of the episode or slice:
/// sum_i gamma^(i-t) r_i + gamma^(T-t) V_boot (no bootstrap after a done).
inline Eigen::VectorXd nstep_returns(const Eigen::VectorXd& rewards, const std::vector<bool>& dones,
                                     double bootstrap, double gamma) {
  const Eigen::Index n = rewards.size();
  Eigen::VectorXd out(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double total = 0.0;
    double discount = 1.0;
    bool ended = false;
    for (Eigen::Index i = t; i < n; ++i) {
      total += discount * rewards(i);
      discount *= gamma;
      if (dones[static_cast<std::size_t>(i)]) {
        ended = true;
        break;
      }
    }
    if (!ended) total += discount * bootstrap;
    out(t) = total;
  }
  return out;
}

/// Off-policy V-trace targets with the trace products multiplied out term by
/// term.
inline Eigen::VectorXd brute_force_vtrace(const TrajectorySlice<double>& s) {
  const Eigen::Index n = s.size();
  std::vector<double> rho(static_cast<std::size_t>(n)), c(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t) {
    rho[static_cast<std::size_t>(t)] = std::min(s.clip_rho, std::exp(s.log_rhos(t)));
    c[static_cast<std::size_t>(t)] = std::min(s.clip_c, std::exp(s.log_rhos(t)));
  }
  Eigen::VectorXd out(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double total = s.values(t);
    for (Eigen::Index i = t; i < n; ++i) {
      double trace = std::pow(s.gamma, static_cast<double>(i - t));
      for (Eigen::Index j = t; j < i; ++j) trace *= c[static_cast<std::size_t>(j)];
      const bool done = s.dones[static_cast<std::size_t>(i)];
      const double next = done ? 0.0 : (i + 1 < n ? s.values(i + 1) : s.bootstrap_value);
      total += trace * rho[static_cast<std::size_t>(i)] * (s.rewards(i) + s.gamma * next - s.values(i));
      if (done) break;
    }
    out(t) = total;
  }
  return out;
}

inline TrajectorySlice<double> random_slice(std::mt19937_64& rng, Eigen::Index length, double done_prob,
                                            bool on_policy) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TrajectorySlice<double> s;
  s.rewards.resize(length);
  s.values.resize(length);
  s.log_rhos.resize(length);
  s.dones.resize(static_cast<std::size_t>(length));
  for (Eigen::Index t = 0; t < length; ++t) {
    s.rewards(t) = normal(rng);
    s.values(t) = normal(rng);
    s.log_rhos(t) = on_policy ? 0.0 : 0.7 * normal(rng);
    s.dones[static_cast<std::size_t>(t)] = unit(rng) < done_prob;
  }
  s.bootstrap_value = normal(rng);
  s.gamma = 0.8 + 0.2 * unit(rng);
  s.lambda = unit(rng);
  return s;
}

/// Small network with N(0, gain^2/fan_in) weights, random biases and log-std,
/// so that policies are far from uniform.
inline ParamSet random_net(std::mt19937_64& rng, HeadKind head, bool shared_value) {
  std::uniform_int_distribution<int> width(2, 5);
  NetLayout layout;
  const int obs = width(rng);
  layout.sizes = {obs, width(rng)};
  if (rng() % 2 == 0) layout.sizes.push_back(width(rng));
  layout.sizes.push_back(head == HeadKind::categorical ? width(rng) : 1 + static_cast<int>(rng() % 2));
  layout.head = head;
  layout.shared_value = shared_value;
  InitOptions init;
  init.orthogonal = false;
  init.hidden_gain = 1.0;
  init.output_gain = 1.0;
  ParamSet p = init_params(layout, rng(), init);
  std::normal_distribution<double> normal(0.0, 0.3);
  Eigen::VectorXd flat = p.tensors.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) += normal(rng);
  p.tensors.assign_flat(flat);
  return p;
}

inline Eigen::MatrixXd random_actions(std::mt19937_64& rng, const DistBatch& dist) {
  Eigen::MatrixXd actions(dist.rows(), dist.kind == HeadKind::categorical ? 1 : dist.params.cols());
  for (Eigen::Index i = 0; i < dist.rows(); ++i) actions.row(i) = sample(row(dist, i), rng).transpose();
  return actions;
}

/// Relative error of two gradient vectors, ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

/// Loss of a network on fixed data, as a function of its flat parameters.
struct LossProblem {
  ParamSet net;
  Eigen::MatrixXd obs;
  DistBatch target;
  Eigen::VectorXd logp_worker;
  Eigen::MatrixXd actions;
  Eigen::VectorXd advantages;
  Eigen::VectorXd value_targets;
  LossHyper hyper;

  LossInputs inputs_at(const ParamSet& p, ForwardCache& cache) const {
    cache = forward(p, obs);
    return LossInputs{cache.dist, target, logp_worker, actions, advantages, cache.values, value_targets};
  }

  double loss_at(const Eigen::VectorXd& flat) const {
    ParamSet p = net;
    p.tensors.assign_flat(flat);
    ForwardCache cache;
    return surrogate_loss(inputs_at(p, cache), hyper).report.total;
  }

  Eigen::VectorXd analytic_gradient() const {
    ForwardCache cache;
    const LossResult result = surrogate_loss(inputs_at(net, cache), hyper);
    return backward(net, cache, result.upstream).flatten();
  }

  Eigen::VectorXd numeric_gradient(double h = 1e-6) const {
    const Eigen::VectorXd base = net.tensors.flatten();
    Eigen::VectorXd grad(base.size());
    for (Eigen::Index i = 0; i < base.size(); ++i) {
      Eigen::VectorXd up = base, down = base;
      up(i) += h;
      down(i) -= h;
      grad(i) = (loss_at(up) - loss_at(down)) / (2.0 * h);
    }
    return grad;
  }
};

/// Random problem: a perturbed copy of the net stands in for the target, a
/// second perturbation for the worker policy.
inline LossProblem random_problem(std::mt19937_64& rng, HeadKind head, const LossHyper& hyper, Eigen::Index rows) {
  LossProblem prob;
  prob.net = random_net(rng, head, rng() % 2 == 0);
  prob.hyper = hyper;
  std::normal_distribution<double> normal(0.0, 1.0);
  prob.obs = Eigen::MatrixXd::NullaryExpr(rows, prob.net.layout.obs_dim(), [&] { return normal(rng); });

  auto perturbed = [&](double scale) {
    ParamSet p = prob.net;
    Eigen::VectorXd flat = p.tensors.flatten();
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) += scale * normal(rng);
    p.tensors.assign_flat(flat);
    return p;
  };
  prob.target = forward_policy(perturbed(0.2), prob.obs);
  const DistBatch worker = forward_policy(perturbed(0.3), prob.obs);
  prob.actions = random_actions(rng, worker);
  prob.logp_worker = log_prob(worker, prob.actions);
  prob.advantages = Eigen::VectorXd::NullaryExpr(rows, [&] { return normal(rng); });
  prob.value_targets = Eigen::VectorXd::NullaryExpr(rows, [&] { return normal(rng); });
  return prob;
}

/// Finite-horizon LQR for the point mass (cost x^2 + 0.01 a^2 on the
/// linearized, wall-free dynamics), with the action saturated to [-1, 1].
class PointMassLqr {
 public:
  explicit PointMassLqr(int horizon) : gains_(static_cast<std::size_t>(horizon)) {
    const double dt = PointMass1D::kDt;
    Eigen::Matrix2d a;
    a << 1.0, dt, 0.0, 1.0;
    const Eigen::Vector2d b(dt * dt, dt);
    Eigen::Matrix2d q = Eigen::Matrix2d::Zero();
    q(0, 0) = 1.0;
    const double r = PointMass1D::kActionCost;
    Eigen::Matrix2d p = Eigen::Matrix2d::Zero();
    for (int t = horizon - 1; t >= 0; --t) {
      const Eigen::RowVector2d k = (b.transpose() * p * a) / (r + b.dot(p * b));
      gains_[static_cast<std::size_t>(t)] = k;
      p = q + a.transpose() * p * (a - b * k);
    }
  }

  double action(int t, const Eigen::VectorXd& state) const {
    const double u = -(gains_[static_cast<std::size_t>(t)] * Eigen::Vector2d(state(0) - PointMass1D::kGoal, state(1))).value();
    return std::clamp(u, -1.0, 1.0);
  }

  /// Mean return over the same episode seeds `evaluate_policy` uses.
  double mean_return(int episodes, std::uint64_t seed, int max_steps) const {
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) {
      auto env = make_env("pointmass1d", max_steps);
      Eigen::VectorXd obs = env->reset(derive_seed(seed, kEvalStream, static_cast<std::uint64_t>(e)));
      int t = 0;
      while (!env->done()) {
        const StepResult step = env->step(Eigen::VectorXd::Constant(1, action(t++, obs)));
        total += step.reward;
        obs = step.obs;
      }
    }
    return total / episodes;
  }

 private:
  std::vector<Eigen::RowVector2d> gains_;
};

}  // namespace impact::testing
