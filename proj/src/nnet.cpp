#include "impact/nnet.hpp"

#include <cmath>
#include <random>

#include "impact/errors.hpp"

namespace impact {

std::string to_string(HeadKind kind) {
  return kind == HeadKind::categorical ? "categorical" : "gaussian";
}

HeadKind head_kind_from_string(const std::string& name) {
  if (name == "categorical") return HeadKind::categorical;
  if (name == "gaussian") return HeadKind::gaussian;
  throw ConfigError("unknown head kind: " + name);
}

void NetLayout::validate() const {
  if (sizes.size() < 3) throw ConfigError("network layout needs at least one hidden layer");
  for (int width : sizes) {
    if (width <= 0) throw ConfigError("network layout has a zero-width layer");
  }
  if (head == HeadKind::categorical && head_dim() < 2) {
    throw ConfigError("categorical head needs at least two actions");
  }
  if (!(log_std_min < log_std_max)) throw ConfigError("log_std_min must be below log_std_max");
}

namespace {

template <typename Fn>
void for_each_layer(const NetTensors& t, Fn&& fn) {
  for (const auto& layer : t.policy_hidden) fn(layer);
  fn(t.policy_out);
  for (const auto& layer : t.value_hidden) fn(layer);
  fn(t.value_out);
}

template <typename Fn>
void for_each_layer(NetTensors& t, Fn&& fn) {
  for (auto& layer : t.policy_hidden) fn(layer);
  fn(t.policy_out);
  for (auto& layer : t.value_hidden) fn(layer);
  fn(t.value_out);
}

Eigen::Index layer_size(const DenseLayer& layer) { return layer.weight.size() + layer.bias.size(); }

}  // namespace

Eigen::Index NetTensors::size() const {
  Eigen::Index n = log_std.size();
  for_each_layer(*this, [&](const DenseLayer& layer) { n += layer_size(layer); });
  return n;
}

Eigen::VectorXd NetTensors::flatten() const {
  Eigen::VectorXd flat(size());
  Eigen::Index pos = 0;
  for_each_layer(*this, [&](const DenseLayer& layer) {
    flat.segment(pos, layer.weight.size()) = layer.weight.reshaped();
    pos += layer.weight.size();
    flat.segment(pos, layer.bias.size()) = layer.bias;
    pos += layer.bias.size();
  });
  flat.segment(pos, log_std.size()) = log_std;
  return flat;
}

void NetTensors::assign_flat(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != size()) throw ShapeError("flat parameter vector has the wrong length");
  Eigen::Index pos = 0;
  for_each_layer(*this, [&](DenseLayer& layer) {
    layer.weight.reshaped() = flat.segment(pos, layer.weight.size());
    pos += layer.weight.size();
    layer.bias = flat.segment(pos, layer.bias.size());
    pos += layer.bias.size();
  });
  log_std = flat.segment(pos, log_std.size());
}

std::pair<Eigen::Index, Eigen::Index> NetTensors::value_range() const {
  Eigen::Index begin = layer_size(policy_out);
  for (const auto& layer : policy_hidden) begin += layer_size(layer);
  Eigen::Index end = begin + layer_size(value_out);
  for (const auto& layer : value_hidden) end += layer_size(layer);
  return {begin, end};
}

bool NetTensors::all_finite() const {
  bool finite = log_std.allFinite();
  for_each_layer(*this, [&](const DenseLayer& layer) {
    finite = finite && layer.weight.allFinite() && layer.bias.allFinite();
  });
  return finite;
}

NetTensors NetTensors::zeros_like() const {
  NetTensors out = *this;
  for_each_layer(out, [](DenseLayer& layer) {
    layer.weight.setZero();
    layer.bias.setZero();
  });
  out.log_std.setZero();
  return out;
}

namespace {

Eigen::MatrixXd orthogonal(int rows, int cols, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  Eigen::MatrixXd a(big, small);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign fix makes the result uniformly distributed over orthogonal matrices.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  Eigen::MatrixXd w = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
  return gain * w;
}

Eigen::MatrixXd scaled_normal(int rows, int cols, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(cols)));
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
  }
  return w;
}

DenseLayer make_layer(int in, int out, double gain, const InitOptions& options, std::mt19937_64& rng) {
  DenseLayer layer;
  layer.weight = options.orthogonal ? orthogonal(out, in, gain, rng) : scaled_normal(out, in, gain, rng);
  layer.bias = Eigen::VectorXd::Zero(out);
  return layer;
}

}  // namespace

ParamSet init_params(const NetLayout& layout, std::uint64_t seed, const InitOptions& options) {
  layout.validate();
  std::mt19937_64 rng(seed);
  ParamSet params;
  params.layout = layout;
  auto& t = params.tensors;
  const int hidden = layout.num_hidden();
  for (int l = 0; l < hidden; ++l) {
    t.policy_hidden.push_back(make_layer(layout.sizes[l], layout.sizes[l + 1], options.hidden_gain, options, rng));
  }
  t.policy_out = make_layer(layout.sizes[hidden], layout.head_dim(), options.output_gain, options, rng);
  if (!layout.shared_value) {
    for (int l = 0; l < hidden; ++l) {
      t.value_hidden.push_back(make_layer(layout.sizes[l], layout.sizes[l + 1], options.hidden_gain, options, rng));
    }
  }
  t.value_out = make_layer(layout.sizes[hidden], 1, options.output_gain, options, rng);
  if (layout.head == HeadKind::gaussian) {
    t.log_std = Eigen::VectorXd::Constant(layout.head_dim(), layout.log_std_init);
  }
  params.version = 0;
  return params;
}

namespace {

Eigen::MatrixXd affine(const DenseLayer& layer, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z = x * layer.weight.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

void run_tower(const std::vector<DenseLayer>& layers, const Eigen::MatrixXd& obs,
               std::vector<Eigen::MatrixXd>& acts) {
  acts.clear();
  acts.reserve(layers.size());
  const Eigen::MatrixXd* input = &obs;
  for (const auto& layer : layers) {
    acts.push_back(affine(layer, *input).array().tanh().matrix());
    input = &acts.back();
  }
}

void check_obs(const ParamSet& params, Eigen::Index cols) {
  if (cols != params.layout.obs_dim()) {
    throw ShapeError("observation width " + std::to_string(cols) + " does not match network input " +
                     std::to_string(params.layout.obs_dim()));
  }
}

}  // namespace

ForwardCache forward(const ParamSet& params, const Eigen::Ref<const Eigen::MatrixXd>& obs) {
  check_obs(params, obs.cols());
  const auto& t = params.tensors;
  ForwardCache cache;
  cache.obs = obs;
  run_tower(t.policy_hidden, cache.obs, cache.policy_acts);
  cache.dist.kind = params.layout.head;
  cache.dist.params = affine(t.policy_out, cache.policy_acts.back());
  cache.dist.log_std = t.log_std;
  const Eigen::MatrixXd* value_trunk = &cache.policy_acts.back();
  if (!params.layout.shared_value) {
    run_tower(t.value_hidden, cache.obs, cache.value_acts);
    value_trunk = &cache.value_acts.back();
  }
  cache.values = affine(t.value_out, *value_trunk).col(0);
  return cache;
}

DistBatch forward_policy(const ParamSet& params, const Eigen::Ref<const Eigen::MatrixXd>& obs) {
  check_obs(params, obs.cols());
  const auto& t = params.tensors;
  std::vector<Eigen::MatrixXd> acts;
  run_tower(t.policy_hidden, obs, acts);
  DistBatch dist;
  dist.kind = params.layout.head;
  dist.params = affine(t.policy_out, acts.back());
  dist.log_std = t.log_std;
  return dist;
}

Eigen::VectorXd forward_value(const ParamSet& params, const Eigen::Ref<const Eigen::MatrixXd>& obs) {
  check_obs(params, obs.cols());
  const auto& t = params.tensors;
  std::vector<Eigen::MatrixXd> acts;
  run_tower(params.layout.shared_value ? t.policy_hidden : t.value_hidden, obs, acts);
  return affine(t.value_out, acts.back()).col(0);
}

namespace {

// Backpropagates `grad_top` (gradient w.r.t. the last hidden activation)
// through a tanh tower, accumulating into `grads`.
void backprop_tower(const std::vector<DenseLayer>& layers, const std::vector<Eigen::MatrixXd>& acts,
                    const Eigen::MatrixXd& obs, Eigen::MatrixXd grad_top, std::vector<DenseLayer>& grads) {
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    const Eigen::MatrixXd dz = (grad_top.array() * (1.0 - acts[l].array().square())).matrix();
    const Eigen::MatrixXd& input = l == 0 ? obs : acts[l - 1];
    grads[l].weight.noalias() += dz.transpose() * input;
    grads[l].bias += dz.colwise().sum().transpose();
    if (l > 0) grad_top = dz * layers[l].weight;
  }
}

}  // namespace

GradSet backward(const ParamSet& params, const ForwardCache& cache, const Upstream& upstream) {
  const auto& t = params.tensors;
  const Eigen::Index n = cache.obs.rows();
  if (upstream.dist.rows() != n || upstream.dist.cols() != params.layout.head_dim()) {
    throw ShapeError("upstream distribution gradient has the wrong shape");
  }
  if (upstream.value.size() != n) throw ShapeError("upstream value gradient has the wrong length");
  if (upstream.log_std.size() != 0 && upstream.log_std.size() != t.log_std.size()) {
    throw ShapeError("upstream log-std gradient has the wrong length");
  }

  GradSet g = t.zeros_like();
  const Eigen::MatrixXd& policy_top = cache.policy_acts.back();
  g.policy_out.weight.noalias() = upstream.dist.transpose() * policy_top;
  g.policy_out.bias = upstream.dist.colwise().sum().transpose();
  Eigen::MatrixXd grad_policy_top = upstream.dist * t.policy_out.weight;

  const Eigen::MatrixXd& value_top = params.layout.shared_value ? policy_top : cache.value_acts.back();
  g.value_out.weight.noalias() = upstream.value.transpose() * value_top;
  g.value_out.bias(0) = upstream.value.sum();
  Eigen::MatrixXd grad_value_top = upstream.value * t.value_out.weight;

  if (params.layout.shared_value) {
    grad_policy_top += grad_value_top;
  } else {
    backprop_tower(t.value_hidden, cache.value_acts, cache.obs, std::move(grad_value_top), g.value_hidden);
  }
  backprop_tower(t.policy_hidden, cache.policy_acts, cache.obs, std::move(grad_policy_top), g.policy_hidden);

  if (upstream.log_std.size() != 0) g.log_std = upstream.log_std;
  return g;
}

GradSet backward(const ParamSet& params, const Eigen::Ref<const Eigen::MatrixXd>& obs, const Upstream& upstream) {
  return backward(params, forward(params, obs), upstream);
}

}  // namespace impact
