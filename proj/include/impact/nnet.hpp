#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace impact {

enum class HeadKind { categorical, gaussian };

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& name);

/// Shape of a policy/value network.
///
/// `sizes` lists the policy tower: input width, one or more hidden widths, and
/// the head width (number of logits for a categorical head, action dimension
/// for a Gaussian head). The value tower mirrors the hidden widths and ends in
/// a single output, either on its own trunk or on the policy trunk.
struct NetLayout {
  std::vector<int> sizes;
  HeadKind head = HeadKind::categorical;
  bool shared_value = false;
  double log_std_init = 0.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  int obs_dim() const { return sizes.front(); }
  int head_dim() const { return sizes.back(); }
  int num_hidden() const { return static_cast<int>(sizes.size()) - 2; }

  /// Throws ConfigError for fewer than one hidden layer, zero widths, or
  /// inverted log-std bounds.
  void validate() const;

  bool operator==(const NetLayout&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Raw tensors of a network. Doubles as the gradient container, since a
/// gradient has exactly the shape of the parameters it differentiates.
struct NetTensors {
  std::vector<DenseLayer> policy_hidden;
  DenseLayer policy_out;
  std::vector<DenseLayer> value_hidden;  // empty when the trunk is shared
  DenseLayer value_out;
  Eigen::VectorXd log_std;  // empty for categorical heads

  Eigen::Index size() const;

  /// Flat view in fixed order: policy hidden layers, policy head, value
  /// hidden layers, value head, log-std. Each layer is weight (column-major)
  /// then bias.
  Eigen::VectorXd flatten() const;
  void assign_flat(const Eigen::Ref<const Eigen::VectorXd>& flat);

  /// Half-open range [begin, end) of the value-only parameters in flat order.
  std::pair<Eigen::Index, Eigen::Index> value_range() const;

  bool all_finite() const;

  /// Same structure, all entries zero.
  NetTensors zeros_like() const;
};

using GradSet = NetTensors;

/// Policy parameters (theta), value parameters (w), and a version stamp.
/// Treated as an immutable value once published.
struct ParamSet {
  NetLayout layout;
  NetTensors tensors;
  std::uint64_t version = 0;
};

struct InitOptions {
  double hidden_gain = 1.4142135623730951;  // sqrt(2)
  double output_gain = 0.01;
  /// Orthogonal initialization; false draws N(0, gain^2 / fan_in) entries.
  bool orthogonal = true;
};

/// Deterministic in (layout, seed, options). Biases start at zero and the
/// log-std vector at `layout.log_std_init`.
ParamSet init_params(const NetLayout& layout, std::uint64_t seed, const InitOptions& options = {});

/// Head output for a batch: logits (categorical) or means (Gaussian), one row
/// per observation, plus the state-independent log-std.
struct DistBatch {
  HeadKind kind = HeadKind::categorical;
  Eigen::MatrixXd params;
  Eigen::VectorXd log_std;

  Eigen::Index rows() const { return params.rows(); }
};

/// Intermediate activations kept for the reverse pass.
struct ForwardCache {
  Eigen::MatrixXd obs;
  std::vector<Eigen::MatrixXd> policy_acts;  // post-tanh output of each hidden layer
  std::vector<Eigen::MatrixXd> value_acts;
  DistBatch dist;
  Eigen::VectorXd values;
};

ForwardCache forward(const ParamSet& params, const Eigen::Ref<const Eigen::MatrixXd>& obs);
DistBatch forward_policy(const ParamSet& params, const Eigen::Ref<const Eigen::MatrixXd>& obs);
Eigen::VectorXd forward_value(const ParamSet& params, const Eigen::Ref<const Eigen::MatrixXd>& obs);

/// Loss partials with respect to the forward outputs.
struct Upstream {
  Eigen::MatrixXd dist;     // rows x head_dim
  Eigen::VectorXd log_std;  // head_dim (Gaussian only; may be empty)
  Eigen::VectorXd value;    // rows
};

/// Exact reverse-mode gradient of <upstream, forward outputs>.
GradSet backward(const ParamSet& params, const ForwardCache& cache, const Upstream& upstream);
GradSet backward(const ParamSet& params, const Eigen::Ref<const Eigen::MatrixXd>& obs,
                 const Upstream& upstream);

}  // namespace impact
