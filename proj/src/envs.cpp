#include "impact/envs.hpp"

#include <algorithm>
#include <cmath>

#include "impact/errors.hpp"

namespace impact {

int EnvSpec::action_outputs() const {
  if (const auto* d = std::get_if<DiscreteActions>(&actions)) return d->n;
  return std::get<ContinuousActions>(actions).dim;
}

int EnvSpec::action_width() const { return discrete() ? 1 : std::get<ContinuousActions>(actions).dim; }

Eigen::VectorXd Environment::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  steps_ = 0;
  done_ = false;
  return reset_state(rng);
}

StepResult Environment::step(const Eigen::VectorXd& action) {
  if (done_) throw EnvError("step() called on a finished episode; call reset() first");
  const EnvSpec s = spec();
  Eigen::VectorXd act = action;
  if (const auto* d = std::get_if<DiscreteActions>(&s.actions)) {
    if (act.size() != 1 || !(act(0) >= 0.0) || act(0) >= d->n || std::floor(act(0)) != act(0)) {
      throw EnvError("invalid discrete action");
    }
  } else {
    const auto& c = std::get<ContinuousActions>(s.actions);
    if (act.size() != c.dim || !act.allFinite()) throw EnvError("invalid continuous action");
    act = act.cwiseMax(c.low).cwiseMin(c.high);
  }
  StepResult result;
  bool terminal = false;
  result.obs = advance(act, result.reward, terminal);
  ++steps_;
  result.episode_steps = steps_;
  result.done = terminal || steps_ >= s.max_episode_steps;
  done_ = result.done;
  return result;
}

EnvSpec CartPole::spec() const { return EnvSpec{4, DiscreteActions{2}, max_steps_}; }

Eigen::Vector4d CartPole::dynamics(const Eigen::Vector4d& s, int action) {
  const double x = s(0), x_dot = s(1), theta = s(2), theta_dot = s(3);
  const double force = action == 1 ? kForce : -kForce;
  const double total_mass = kCartMass + kPoleMass;
  const double pole_mass_length = kPoleMass * kHalfLength;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (kGravity * sin_t - cos_t * temp) / (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;
  return {x + kDt * x_dot, x_dot + kDt * x_acc, theta + kDt * theta_dot, theta_dot + kDt * theta_acc};
}

Eigen::VectorXd CartPole::reset_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (int i = 0; i < 4; ++i) state_(i) = u(rng);
  return state_;
}

Eigen::VectorXd CartPole::advance(const Eigen::VectorXd& action, double& reward, bool& terminal) {
  state_ = dynamics(state_, static_cast<int>(action(0)));
  terminal = std::abs(state_(0)) > kPositionLimit || std::abs(state_(2)) > kAngleLimit;
  reward = 1.0;
  return state_;
}

EnvSpec PointMass1D::spec() const {
  return EnvSpec{2, ContinuousActions{1, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)},
                 max_steps_};
}

Eigen::Vector2d PointMass1D::dynamics(const Eigen::Vector2d& s, double force) {
  double v = s(1) + kDt * force;
  double x = s(0) + kDt * v;
  if (x > kWall || x < -kWall) {
    x = std::clamp(x, -kWall, kWall);
    v = 0.0;
  }
  return {x, v};
}

double PointMass1D::reward(const Eigen::Vector2d& s, double force) {
  const double err = s(0) - kGoal;
  return -err * err - kActionCost * force * force;
}

Eigen::VectorXd PointMass1D::reset_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> position(-1.0, 1.0);
  std::uniform_real_distribution<double> velocity(-0.1, 0.1);
  state_(0) = position(rng);
  state_(1) = velocity(rng);
  return state_;
}

Eigen::VectorXd PointMass1D::advance(const Eigen::VectorXd& action, double& r, bool& terminal) {
  r = reward(state_, action(0));
  state_ = dynamics(state_, action(0));
  terminal = false;
  return state_;
}

bool is_known_env(const std::string& id) { return id == "cartpole" || id == "pointmass1d"; }

std::unique_ptr<Environment> make_env(const std::string& id, int max_episode_steps) {
  const int steps = max_episode_steps > 0 ? max_episode_steps : 200;
  if (id == "cartpole") return std::make_unique<CartPole>(steps);
  if (id == "pointmass1d") return std::make_unique<PointMass1D>(steps);
  throw ConfigError("unknown environment id: " + id);
}

EnvSpec env_spec(const std::string& id) { return make_env(id)->spec(); }

}  // namespace impact
