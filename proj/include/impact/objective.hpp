#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "impact/distributions.hpp"
#include "impact/nnet.hpp"

namespace impact {

/// Ratio used in the surrogate:
///   r1 = pi_theta / pi_target
///   r2 = pi_theta / pi_worker
///   r3 = pi_theta / max(pi_target, pi_worker / rho)
enum class RatioVariant { r1, r2, r3 };

std::string to_string(RatioVariant variant);
RatioVariant ratio_variant_from_string(const std::string& name);

/// min(pi_worker / pi_target, rho) * pi_theta / pi_worker, evaluated in log
/// space as exp(logp_theta - max(logp_target, logp_worker - ln rho)).
template <typename Scalar>
Scalar clipped_target_ratio(Scalar logp_theta, Scalar logp_target, Scalar logp_worker, Scalar rho) {
  using std::exp;
  using std::log;
  using std::max;
  return exp(logp_theta - max(logp_target, logp_worker - log(rho)));
}

template <typename Scalar>
Scalar ratio_variant(RatioVariant variant, Scalar logp_theta, Scalar logp_target, Scalar logp_worker, Scalar rho) {
  using std::exp;
  switch (variant) {
    case RatioVariant::r1:
      return exp(logp_theta - logp_target);
    case RatioVariant::r2:
      return exp(logp_theta - logp_worker);
    case RatioVariant::r3:
      break;
  }
  return clipped_target_ratio(logp_theta, logp_target, logp_worker, rho);
}

/// Vectorized ratio over a batch.
Eigen::VectorXd ratio_variant(RatioVariant variant, const Eigen::Ref<const Eigen::VectorXd>& logp_theta,
                              const Eigen::Ref<const Eigen::VectorXd>& logp_target,
                              const Eigen::Ref<const Eigen::VectorXd>& logp_worker, double rho);

/// Zero mean, unit (population) standard deviation; 1e-8 guards the divisor.
Eigen::VectorXd standardize(const Eigen::Ref<const Eigen::VectorXd>& x);

struct LossHyper {
  RatioVariant variant = RatioVariant::r3;
  bool use_eps_clip = true;
  double clip_eps = 0.3;
  double target_clip_rho = 2.0;
  double kl_coeff = 0.0;
  double entropy_coeff = 0.0;
  double value_coeff = 1.0;
  /// Penalize KL(pi_theta || pi_target) instead of KL(pi_target || pi_theta).
  bool kl_swap = false;

  void validate() const;
};

/// Everything the surrogate needs for one train batch. `learner` is the
/// differentiable head output; the rest are constants.
struct LossInputs {
  DistBatch learner;
  DistBatch target;
  Eigen::VectorXd logp_worker;
  Eigen::MatrixXd actions;
  Eigen::VectorXd advantages;
  Eigen::VectorXd values;         // V_w(s), differentiable
  Eigen::VectorXd value_targets;  // constant
};

struct LossReport {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_kl = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
};

struct LossResult {
  LossReport report;
  Upstream upstream;  // d total / d (head outputs, log-std, values)
};

/// total = policy - entropy_coeff * entropy + value_coeff * value + kl_coeff * kl
/// where policy = -mean min(R A, clip(R, 1-eps, 1+eps) A) (plain -mean R A
/// when eps-clipping is off), value = mean (V - V_target)^2, and kl, entropy
/// are batch means. Throws NumericalError if any component is not finite.
LossResult surrogate_loss(const LossInputs& inputs, const LossHyper& hyper);

/// Adaptive KL coefficient: x1.5 above twice the target, /1.5 below half the
/// target, clamped to [1e-4, 1e2]. A zero coefficient stays zero (KL off).
double adaptive_kl_update(double coeff, double observed_kl, double kl_target);

}  // namespace impact
