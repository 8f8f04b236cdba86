#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "impact/errors.hpp"

namespace impact {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One contiguous trajectory fragment with behaviour/target log-ratios.
///
/// Step t received `rewards[t]` after acting in state t; `dones[t]` marks that
/// the episode ended at that step, so nothing after t is credited to it.
/// `values[t]` estimates state t and `bootstrap_value` estimates the state
/// following the last step. `log_rhos[t]` = log pi_target(a_t|s_t) -
/// log pi_behaviour(a_t|s_t).
template <typename Scalar>
struct TrajectorySlice {
  VectorX<Scalar> rewards;
  std::vector<bool> dones;
  VectorX<Scalar> values;
  Scalar bootstrap_value = 0;
  VectorX<Scalar> log_rhos;
  Scalar gamma = Scalar(0.99);
  Scalar lambda = Scalar(1);
  Scalar clip_c = Scalar(1);    // c-bar, truncates the trace
  Scalar clip_rho = Scalar(1);  // rho-bar, truncates the TD-error weight

  Eigen::Index size() const { return rewards.size(); }

  void validate() const {
    const Eigen::Index n = size();
    if (values.size() != n || log_rhos.size() != n || static_cast<Eigen::Index>(dones.size()) != n) {
      throw ShapeError("trajectory slice arrays differ in length");
    }
    if (!(gamma >= 0 && gamma <= 1) || !(lambda >= 0 && lambda <= 1)) {
      throw ConfigError("gamma and lambda must lie in [0, 1]");
    }
    if (!(clip_c >= 1) || !(clip_rho >= 1)) throw ConfigError("trace clip constants must be >= 1");
  }
};

template <typename Scalar>
struct AdvantageSet {
  VectorX<Scalar> advantages;
  VectorX<Scalar> value_targets;
};

/// min(bound, exp(log_ratio)), elementwise.
template <typename Derived>
auto clipped_ratios(const Eigen::MatrixBase<Derived>& log_ratios, typename Derived::Scalar bound) {
  return log_ratios.array().exp().min(bound).matrix();
}

namespace detail {

template <typename Scalar>
VectorX<Scalar> next_values(const TrajectorySlice<Scalar>& s) {
  const Eigen::Index n = s.size();
  VectorX<Scalar> next(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (s.dones[t]) {
      next(t) = 0;
    } else {
      next(t) = t + 1 < n ? s.values(t + 1) : s.bootstrap_value;
    }
  }
  return next;
}

// Backward recursion acc_t = rho_t * delta_t + decay * c_t * (1 - done_t) * acc_{t+1}.
template <typename Scalar>
VectorX<Scalar> weighted_td_sum(const TrajectorySlice<Scalar>& s, Scalar decay) {
  s.validate();
  const Eigen::Index n = s.size();
  const VectorX<Scalar> next = next_values(s);
  const VectorX<Scalar> rho = clipped_ratios(s.log_rhos, s.clip_rho);
  const VectorX<Scalar> c = clipped_ratios(s.log_rhos, s.clip_c);
  VectorX<Scalar> acc(n);
  Scalar carry = 0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const Scalar delta = rho(t) * (s.rewards(t) + s.gamma * next(t) - s.values(t));
    if (s.dones[t]) carry = 0;
    carry = delta + decay * c(t) * carry;
    acc(t) = carry;
  }
  return acc;
}

}  // namespace detail

/// V-trace value targets
///   v_t = V(s_t) + sum_{i>=t} gamma^{i-t} (prod_{j=t}^{i-1} c_j) rho_i delta_i,
/// truncated at episode ends and at the end of the slice.
template <typename Scalar>
VectorX<Scalar> vtrace_targets(const TrajectorySlice<Scalar>& slice) {
  return slice.values + detail::weighted_td_sum(slice, slice.gamma);
}

/// GAE-lambda with V-trace importance weights on the TD-error sum:
///   A_t = sum_{i>=t} (lambda gamma)^{i-t} (prod_{j=t}^{i-1} c_j) rho_i delta_i,
/// and value targets A_t + V(s_t).
template <typename Scalar>
AdvantageSet<Scalar> vgae_advantages(const TrajectorySlice<Scalar>& slice) {
  AdvantageSet<Scalar> out;
  out.advantages = detail::weighted_td_sum(slice, slice.lambda * slice.gamma);
  out.value_targets = out.advantages + slice.values;
  return out;
}

/// IMPALA policy-gradient advantages rho_t (r_t + gamma v_{t+1} - V(s_t)),
/// with v the V-trace targets and v_T the bootstrap value. Value targets are
/// the V-trace targets themselves.
template <typename Scalar>
AdvantageSet<Scalar> vtrace_pg_advantages(const TrajectorySlice<Scalar>& slice) {
  AdvantageSet<Scalar> out;
  out.value_targets = vtrace_targets(slice);
  const Eigen::Index n = slice.size();
  const VectorX<Scalar> rho = clipped_ratios(slice.log_rhos, slice.clip_rho);
  out.advantages.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    Scalar next = 0;
    if (!slice.dones[t]) next = t + 1 < n ? out.value_targets(t + 1) : slice.bootstrap_value;
    out.advantages(t) = rho(t) * (slice.rewards(t) + slice.gamma * next - slice.values(t));
  }
  return out;
}

}  // namespace impact
