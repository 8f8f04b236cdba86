#include "impact/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "impact/envs.hpp"
#include "impact/errors.hpp"

namespace impact {

std::string to_string(Profile profile) { return profile == Profile::discrete ? "discrete" : "continuous"; }

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::impala_is:
      return "impala_is";
    case Mode::appo:
      return "appo";
    case Mode::ppo_sync:
      return "ppo_sync";
    case Mode::impact:
      break;
  }
  return "impact";
}

Mode mode_from_string(const std::string& name) {
  if (name == "impact") return Mode::impact;
  if (name == "appo") return Mode::appo;
  if (name == "impala_is") return Mode::impala_is;
  if (name == "ppo_sync") return Mode::ppo_sync;
  throw ConfigError("unknown mode: " + name);
}

Profile profile_from_string(const std::string& name) {
  if (name == "discrete") return Profile::discrete;
  if (name == "continuous") return Profile::continuous;
  throw ConfigError("unknown profile: " + name);
}

Profile profile_for_env(const std::string& env) {
  return env_spec(env).discrete() ? Profile::discrete : Profile::continuous;
}

ExperimentConfig profile_defaults(Profile profile, int desk_divisor, bool paper_scale) {
  ExperimentConfig c;
  c.desk_divisor = desk_divisor;
  c.paper_scale = paper_scale;
  c.profile = profile;
  if (profile == Profile::discrete) {
    c.env = "cartpole";
    return c;
  }
  if (desk_divisor < 1) throw ConfigError("desk_divisor must be >= 1");
  const int divisor = paper_scale ? 1 : desk_divisor;
  c.env = "pointmass1d";
  c.clip_eps = 0.4;
  c.entropy_coeff = 0.0;
  c.grad_clip = 0.5;
  c.gamma = 0.995;
  c.lambda = 0.995;
  c.lr = 3e-4;
  c.buffer_slots = 16;
  c.replay_k = 20;
  c.sample_batch_size = 1024 / divisor;
  c.train_batch_size = 32768 / divisor;
  c.kl_coeff = 1.0;
  c.kl_target = 0.04;
  c.value_coeff = 1.0;
  c.target_clip_rho = 2.0;
  c.shared_value = false;
  c.value_from_target = false;
  c.lr_anneal = true;
  c.total_timesteps = 500000;
  return c;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
  };
  require(is_known_env(env), "unknown environment id: " + env);
  require(workers >= 1, "workers must be >= 1");
  require(sample_batch_size >= 1, "sample_batch_size must be >= 1");
  require(train_batch_size >= sample_batch_size && train_batch_size % sample_batch_size == 0,
          "train_batch_size must be a positive multiple of sample_batch_size");
  require(buffer_slots >= 1, "buffer_slots (N) must be >= 1");
  require(replay_k >= 1, "replay_k (K) must be >= 1");
  require(t_target >= 0, "t_target must be >= 1 (or 0 for N*K)");
  require(t_frequency >= 1, "t_frequency must be >= 1");
  require(lr > 0.0, "lr must be > 0");
  require(value_lr >= 0.0, "value_lr must be >= 0");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
  require(vtrace_clip_c >= 1.0 && vtrace_clip_rho >= 1.0, "vtrace clip constants must be >= 1");
  require(clip_eps > 0.0 && clip_eps < 1.0, "clip_eps must lie in (0, 1)");
  require(target_clip_rho >= 1.0, "target_clip_rho (rho) must be >= 1");
  require(kl_coeff >= 0.0 && kl_target > 0.0, "kl_coeff must be >= 0 and kl_target > 0");
  require(entropy_coeff >= 0.0 && value_coeff >= 0.0, "loss coefficients must be >= 0");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0,
          "invalid Adam constants");
  require(!hidden.empty(), "at least one hidden layer is required");
  for (int h : hidden) require(h >= 1, "hidden layer widths must be >= 1");
  require(log_std_min < log_std_max, "log_std_min must be below log_std_max");
  require(max_episode_steps >= 1, "max_episode_steps must be >= 1");
  require(!seeds.empty(), "at least one seed is required");
  require(eval_episodes >= 1, "eval_episodes must be >= 1");
  require(metrics_window >= 1, "metrics_window must be >= 1");
  require(desk_divisor >= 1, "desk_divisor must be >= 1");
}

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig r = *this;
  const int nk = buffer_slots * replay_k;
  switch (mode) {
    case Mode::impact:
      r.t_target = t_target > 0 ? t_target : nk;
      break;
    case Mode::ppo_sync:
      r.t_target = nk;
      break;
    case Mode::appo:
      r.variant = RatioVariant::r2;
      r.t_target = 1;
      break;
    case Mode::impala_is:
      r.variant = RatioVariant::r2;
      r.replay_k = 1;
      r.use_eps_clip = false;
      r.t_target = 1;
      break;
  }
  return r;
}

NetLayout ExperimentConfig::layout() const {
  const EnvSpec spec = env_spec(env);
  NetLayout layout;
  layout.sizes.push_back(spec.obs_dim);
  layout.sizes.insert(layout.sizes.end(), hidden.begin(), hidden.end());
  layout.sizes.push_back(spec.action_outputs());
  layout.head = spec.discrete() ? HeadKind::categorical : HeadKind::gaussian;
  layout.shared_value = shared_value;
  layout.log_std_init = log_std_init;
  layout.log_std_min = log_std_min;
  layout.log_std_max = log_std_max;
  return layout;
}

UpdateRule ExperimentConfig::update_rule() const {
  UpdateRule rule;
  rule.kind = optimizer;
  rule.lr = lr;
  if (value_lr > 0.0) rule.value_lr = value_lr;
  rule.beta1 = adam_beta1;
  rule.beta2 = adam_beta2;
  rule.eps = adam_eps;
  rule.grad_clip = grad_clip;
  return rule;
}

LossHyper ExperimentConfig::loss_hyper() const {
  LossHyper h;
  h.variant = variant;
  h.use_eps_clip = use_eps_clip;
  h.clip_eps = clip_eps;
  h.target_clip_rho = target_clip_rho;
  h.kl_coeff = kl_coeff;
  h.entropy_coeff = entropy_coeff;
  h.value_coeff = value_coeff;
  h.kl_swap = kl_swap;
  return h;
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ConfigError("invalid value for " + key + ": '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + text + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

template <typename T>
std::string format_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field number_field(T ExperimentConfig::*member) {
  return Field{[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                 c.*member = parse_number<T>(k, v);
               },
               [member](const ExperimentConfig& c) {
                 if constexpr (std::is_floating_point_v<T>) {
                   return format_double(c.*member);
                 } else {
                   return std::to_string(c.*member);
                 }
               }};
}

Field bool_field(bool ExperimentConfig::*member) {
  return Field{[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                 c.*member = parse_bool(k, v);
               },
               [member](const ExperimentConfig& c) { return format_bool(c.*member); }};
}

const std::vector<std::pair<std::string, Field>>& registry() {
  static const std::vector<std::pair<std::string, Field>> fields = [] {
    std::vector<std::pair<std::string, Field>> f;
    f.emplace_back("env", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                  if (!is_known_env(v)) throw ConfigError("unknown environment id for " + k + ": " + v);
                                  c.env = v;
                                },
                                [](const ExperimentConfig& c) { return c.env; }});
    f.emplace_back("profile",
                   Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.profile = profile_from_string(v); },
                         [](const ExperimentConfig& c) { return to_string(c.profile); }});
    f.emplace_back("mode", Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.mode = mode_from_string(v); },
                                 [](const ExperimentConfig& c) { return to_string(c.mode); }});
    f.emplace_back("variant",
                   Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.variant = ratio_variant_from_string(v); },
                         [](const ExperimentConfig& c) { return to_string(c.variant); }});
    f.emplace_back("workers", number_field(&ExperimentConfig::workers));
    f.emplace_back("sample_batch_size", number_field(&ExperimentConfig::sample_batch_size));
    f.emplace_back("train_batch_size", number_field(&ExperimentConfig::train_batch_size));
    f.emplace_back("buffer_slots", number_field(&ExperimentConfig::buffer_slots));
    f.emplace_back("replay_k", number_field(&ExperimentConfig::replay_k));
    f.emplace_back("t_target", number_field(&ExperimentConfig::t_target));
    f.emplace_back("t_frequency", number_field(&ExperimentConfig::t_frequency));
    f.emplace_back("lr", number_field(&ExperimentConfig::lr));
    f.emplace_back("value_lr", number_field(&ExperimentConfig::value_lr));
    f.emplace_back("optimizer", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                        if (v == "adam") {
                                          c.optimizer = OptimizerKind::adam;
                                        } else if (v == "sgd") {
                                          c.optimizer = OptimizerKind::sgd;
                                        } else {
                                          throw ConfigError("invalid value for " + k + ": " + v);
                                        }
                                      },
                                      [](const ExperimentConfig& c) {
                                        return std::string(c.optimizer == OptimizerKind::adam ? "adam" : "sgd");
                                      }});
    f.emplace_back("adam_beta1", number_field(&ExperimentConfig::adam_beta1));
    f.emplace_back("adam_beta2", number_field(&ExperimentConfig::adam_beta2));
    f.emplace_back("adam_eps", number_field(&ExperimentConfig::adam_eps));
    f.emplace_back("grad_clip", number_field(&ExperimentConfig::grad_clip));
    f.emplace_back("lr_anneal", bool_field(&ExperimentConfig::lr_anneal));
    f.emplace_back("gamma", number_field(&ExperimentConfig::gamma));
    f.emplace_back("lambda", number_field(&ExperimentConfig::lambda));
    f.emplace_back("vtrace_clip_c", number_field(&ExperimentConfig::vtrace_clip_c));
    f.emplace_back("vtrace_clip_rho", number_field(&ExperimentConfig::vtrace_clip_rho));
    f.emplace_back("use_eps_clip", bool_field(&ExperimentConfig::use_eps_clip));
    f.emplace_back("clip_eps", number_field(&ExperimentConfig::clip_eps));
    f.emplace_back("target_clip_rho", number_field(&ExperimentConfig::target_clip_rho));
    f.emplace_back("kl_coeff", number_field(&ExperimentConfig::kl_coeff));
    f.emplace_back("kl_target", number_field(&ExperimentConfig::kl_target));
    f.emplace_back("adaptive_kl", bool_field(&ExperimentConfig::adaptive_kl));
    f.emplace_back("kl_swap", bool_field(&ExperimentConfig::kl_swap));
    f.emplace_back("entropy_coeff", number_field(&ExperimentConfig::entropy_coeff));
    f.emplace_back("value_coeff", number_field(&ExperimentConfig::value_coeff));
    f.emplace_back("standardize_advantages", bool_field(&ExperimentConfig::standardize_advantages));
    f.emplace_back("value_from_target", bool_field(&ExperimentConfig::value_from_target));
    f.emplace_back("hidden", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                     c.hidden = parse_list<int>(k, v);
                                   },
                                   [](const ExperimentConfig& c) { return format_list(c.hidden); }});
    f.emplace_back("shared_value", bool_field(&ExperimentConfig::shared_value));
    f.emplace_back("log_std_init", number_field(&ExperimentConfig::log_std_init));
    f.emplace_back("log_std_min", number_field(&ExperimentConfig::log_std_min));
    f.emplace_back("log_std_max", number_field(&ExperimentConfig::log_std_max));
    f.emplace_back("allow_stale_evict", bool_field(&ExperimentConfig::allow_stale_evict));
    f.emplace_back("obs_filter", bool_field(&ExperimentConfig::obs_filter));
    f.emplace_back("max_episode_steps", number_field(&ExperimentConfig::max_episode_steps));
    f.emplace_back("total_timesteps", number_field(&ExperimentConfig::total_timesteps));
    f.emplace_back("seeds", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                    c.seeds = parse_list<std::uint64_t>(k, v);
                                  },
                                  [](const ExperimentConfig& c) { return format_list(c.seeds); }});
    f.emplace_back("seed", number_field(&ExperimentConfig::seed));
    f.emplace_back("eval_episodes", number_field(&ExperimentConfig::eval_episodes));
    f.emplace_back("metrics_window", number_field(&ExperimentConfig::metrics_window));
    f.emplace_back("deterministic", bool_field(&ExperimentConfig::deterministic));
    f.emplace_back("desk_divisor", number_field(&ExperimentConfig::desk_divisor));
    f.emplace_back("paper_scale", bool_field(&ExperimentConfig::paper_scale));
    f.emplace_back("metrics_path", Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.metrics_path = v; },
                                         [](const ExperimentConfig& c) { return c.metrics_path; }});
    return f;
  }();
  return fields;
}

const Field& field(const std::string& key) {
  for (const auto& [name, f] : registry()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key: " + key);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : registry()) out.push_back(name);
    return out;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, key, value);
}

std::string get_config_value(const ExperimentConfig& config, const std::string& key) { return field(key).get(config); }

KeyValue parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like key=value: '" + text + "'");
  KeyValue kv{trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
  if (kv.first.empty()) throw ConfigError("override has an empty key: '" + text + "'");
  return kv;
}

std::vector<KeyValue> parse_key_values(const std::string& text) {
  std::vector<KeyValue> out;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    if (line.find('=') == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + " is not key = value");
    }
    out.push_back(parse_override(line));
  }
  return out;
}

ExperimentConfig resolve_config(const std::vector<KeyValue>& entries) {
  std::optional<std::string> env;
  std::optional<Profile> profile;
  int divisor = 16;
  bool paper_scale = false;
  for (const auto& [key, value] : entries) {
    field(key);  // rejects unknown keys up front
    if (key == "env") env = value;
    if (key == "profile") profile = profile_from_string(value);
    if (key == "desk_divisor") divisor = parse_number<int>(key, value);
    if (key == "paper_scale") paper_scale = parse_bool(key, value);
  }
  if (!env) throw ConfigError("missing env id (set env=cartpole or env=pointmass1d)");
  if (!is_known_env(*env)) throw ConfigError("unknown environment id: " + *env);
  if (divisor < 1) throw ConfigError("desk_divisor must be >= 1");

  ExperimentConfig config = profile_defaults(profile.value_or(profile_for_env(*env)), divisor, paper_scale);
  for (const auto& [key, value] : entries) set_config_value(config, key, value);
  config.validate();
  return config;
}

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  std::vector<KeyValue> entries;
  if (path) {
    std::ifstream file(*path);
    if (!file) throw ConfigError("cannot read config file: " + path->string());
    std::stringstream ss;
    ss << file.rdbuf();
    entries = parse_key_values(ss.str());
  }
  for (const auto& o : overrides) entries.push_back(parse_override(o));
  return resolve_config(entries);
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [name, f] : registry()) out += name + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace impact
