#include "impact/objective.hpp"

#include "impact/errors.hpp"

namespace impact {

std::string to_string(RatioVariant variant) {
  switch (variant) {
    case RatioVariant::r1:
      return "r1";
    case RatioVariant::r2:
      return "r2";
    case RatioVariant::r3:
      break;
  }
  return "r3";
}

RatioVariant ratio_variant_from_string(const std::string& name) {
  if (name == "r1" || name == "R1") return RatioVariant::r1;
  if (name == "r2" || name == "R2") return RatioVariant::r2;
  if (name == "r3" || name == "R3") return RatioVariant::r3;
  throw ConfigError("unknown ratio variant: " + name);
}

Eigen::VectorXd ratio_variant(RatioVariant variant, const Eigen::Ref<const Eigen::VectorXd>& logp_theta,
                              const Eigen::Ref<const Eigen::VectorXd>& logp_target,
                              const Eigen::Ref<const Eigen::VectorXd>& logp_worker, double rho) {
  const Eigen::Index n = logp_theta.size();
  if (logp_target.size() != n || logp_worker.size() != n) throw ShapeError("log-prob vectors differ in length");
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = ratio_variant(variant, logp_theta(i), logp_target(i), logp_worker(i), rho);
  return out;
}

Eigen::VectorXd standardize(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() == 0) return x;
  const double mean = x.mean();
  const Eigen::ArrayXd centered = x.array() - mean;
  const double stddev = std::sqrt(centered.square().mean());
  return (centered / (stddev + 1e-8)).matrix();
}

void LossHyper::validate() const {
  if (use_eps_clip && !(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must lie in (0, 1)");
  if (!(target_clip_rho >= 1.0)) throw ConfigError("target_clip_rho must be >= 1");
  if (kl_coeff < 0.0 || entropy_coeff < 0.0 || value_coeff < 0.0) throw ConfigError("loss coefficients must be >= 0");
}

namespace {

void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NumericalError(std::string("non-finite ") + what + " in surrogate loss");
}

void accumulate(Upstream& up, const DistGrad& g, const Eigen::VectorXd& row_weights) {
  up.dist.noalias() += row_weights.asDiagonal() * g.params;
  if (g.log_std.size() != 0) up.log_std.noalias() += g.log_std.transpose() * row_weights;
}

void accumulate(Upstream& up, const DistGrad& g, double weight) {
  up.dist += weight * g.params;
  if (g.log_std.size() != 0) up.log_std += weight * g.log_std.colwise().sum().transpose();
}

}  // namespace

LossResult surrogate_loss(const LossInputs& in, const LossHyper& hyper) {
  hyper.validate();
  const Eigen::Index n = in.learner.rows();
  if (n == 0) throw ShapeError("empty loss batch");
  if (in.target.rows() != n || in.logp_worker.size() != n || in.actions.rows() != n || in.advantages.size() != n ||
      in.values.size() != n || in.value_targets.size() != n) {
    throw ShapeError("loss inputs differ in length");
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  const Eigen::VectorXd logp_theta = log_prob(in.learner, in.actions);
  const Eigen::VectorXd logp_target = log_prob(in.target, in.actions);
  const Eigen::VectorXd ratio = ratio_variant(hyper.variant, logp_theta, logp_target, in.logp_worker, hyper.target_clip_rho);

  // d policy / d logp_theta; every ratio is proportional to pi_theta.
  Eigen::VectorXd dlogp(n);
  double policy_sum = 0.0;
  Eigen::Index clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = ratio(i);
    const double a = in.advantages(i);
    const double unclipped = r * a;
    double objective = unclipped;
    bool active = true;
    if (hyper.use_eps_clip) {
      const double bounded = std::clamp(r, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps) * a;
      if (bounded < unclipped) {
        objective = bounded;
        active = false;
      }
      if (std::abs(r - 1.0) > hyper.clip_eps) ++clipped;
    }
    policy_sum += objective;
    dlogp(i) = active ? -inv_n * unclipped : 0.0;
  }

  LossResult result;
  LossReport& rep = result.report;
  rep.policy_loss = -policy_sum * inv_n;
  rep.mean_ratio = ratio.mean();
  rep.clip_fraction = static_cast<double>(clipped) * inv_n;

  const Eigen::VectorXd ent = entropy(in.learner);
  rep.entropy = ent.mean();

  const DistBatch& kl_p = hyper.kl_swap ? in.learner : in.target;
  const DistBatch& kl_q = hyper.kl_swap ? in.target : in.learner;
  rep.mean_kl = kl_divergence(kl_p, kl_q).mean();

  const Eigen::VectorXd value_err = in.values - in.value_targets;
  rep.value_loss = value_err.squaredNorm() * inv_n;

  rep.total = rep.policy_loss - hyper.entropy_coeff * rep.entropy + hyper.value_coeff * rep.value_loss +
              hyper.kl_coeff * rep.mean_kl;
  check_finite(rep.policy_loss, "policy loss");
  check_finite(rep.value_loss, "value loss");
  check_finite(rep.entropy, "entropy");
  check_finite(rep.mean_kl, "KL");
  check_finite(rep.total, "total loss");

  Upstream& up = result.upstream;
  up.dist = Eigen::MatrixXd::Zero(n, in.learner.params.cols());
  up.log_std = Eigen::VectorXd::Zero(in.learner.log_std.size());
  accumulate(up, log_prob_grad(in.learner, in.actions), dlogp);
  if (hyper.entropy_coeff != 0.0) accumulate(up, entropy_grad(in.learner), -hyper.entropy_coeff * inv_n);
  if (hyper.kl_coeff != 0.0) {
    const DistGrad g = kl_grad(kl_p, kl_q, hyper.kl_swap ? KlArgument::first : KlArgument::second);
    accumulate(up, g, hyper.kl_coeff * inv_n);
  }
  up.value = (2.0 * hyper.value_coeff * inv_n) * value_err;
  return result;
}

double adaptive_kl_update(double coeff, double observed_kl, double kl_target) {
  if (coeff == 0.0) return 0.0;
  if (observed_kl > 2.0 * kl_target) {
    coeff *= 1.5;
  } else if (observed_kl < 0.5 * kl_target) {
    coeff /= 1.5;
  }
  return std::clamp(coeff, 1e-4, 1e2);
}

}  // namespace impact
