#include "impact/cli.hpp"

#include <algorithm>
#include <cmath>
#include <csignal>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "impact/checkpoint.hpp"
#include "impact/errors.hpp"

namespace impact {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

extern "C" void handle_interrupt(int) { interrupt_flag().store(true); }

class InterruptScope {
 public:
  InterruptScope() {
    interrupt_flag().store(false);
    previous_int_ = std::signal(SIGINT, handle_interrupt);
    previous_term_ = std::signal(SIGTERM, handle_interrupt);
  }
  ~InterruptScope() {
    std::signal(SIGINT, previous_int_);
    std::signal(SIGTERM, previous_term_);
  }
  InterruptScope(const InterruptScope&) = delete;
  InterruptScope& operator=(const InterruptScope&) = delete;

 private:
  void (*previous_int_)(int) = SIG_DFL;
  void (*previous_term_)(int) = SIG_DFL;
};

json eval_json(const EvalResult& e) { return json{{"mean", e.mean}, {"stddev", e.stddev}, {"returns", e.returns}}; }

std::string json_number(double x) { return std::isfinite(x) ? json(x).dump() : "null"; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

ExperimentConfig with_overrides(const ExperimentConfig& base, const std::vector<KeyValue>& overrides) {
  std::vector<KeyValue> entries;
  for (const auto& key : config_keys()) entries.emplace_back(key, get_config_value(base, key));
  entries.insert(entries.end(), overrides.begin(), overrides.end());
  return resolve_config(entries);
}

}  // namespace

std::atomic<bool>& interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

std::vector<SeedArtifacts> train_seeds(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  fs::create_directories(out_dir);
  write_text(out_dir / "config.txt", serialize_config(config));

  std::vector<SeedArtifacts> artifacts;
  json runs = json::array();
  bool interrupted = false;
  for (const std::uint64_t seed : config.seeds) {
    if (interrupt_flag().load()) {
      interrupted = true;
      break;
    }
    ExperimentConfig run = config;
    run.seed = seed;
    SeedArtifacts a;
    a.seed = seed;
    a.metrics = out_dir / ("metrics_seed" + std::to_string(seed) + ".csv");
    a.checkpoint = out_dir / ("checkpoint_seed" + std::to_string(seed) + ".bin");
    run.metrics_path = a.metrics.string();
    RunOptions options;
    options.metrics_path = a.metrics;
    options.checkpoint_path = a.checkpoint;
    options.stop = &interrupt_flag();
    const RunResult result = run_experiment(run, options);
    const RunningMeanStd* filter = result.obs_filter ? &*result.obs_filter : nullptr;
    a.eval = evaluate_policy(result.params, run.env, run.eval_episodes, seed, run.max_episode_steps, filter);
    a.interrupted = result.interrupted;
    interrupted = interrupted || result.interrupted;
    runs.push_back(json{{"seed", seed},
                        {"metrics", a.metrics.filename().string()},
                        {"checkpoint", a.checkpoint.filename().string()},
                        {"env_steps", result.env_steps},
                        {"learner_steps", result.learner_steps},
                        {"interrupted", result.interrupted},
                        {"eval", eval_json(a.eval)}});
    artifacts.push_back(a);
  }
  const json manifest{{"env", config.env},
                      {"mode", to_string(config.mode)},
                      {"variant", to_string(config.resolved().variant)},
                      {"config", "config.txt"},
                      {"interrupted", interrupted},
                      {"runs", runs}};
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return artifacts;
}

Study study_from_string(const std::string& name) {
  if (name == "ratios") return Study::ratios;
  if (name == "target-frequency") return Study::target_frequency;
  if (name == "buffer-K" || name == "buffer-k") return Study::buffer_k;
  if (name == "ladder") return Study::ladder;
  throw ConfigError("unknown study: " + name + " (ratios|target-frequency|buffer-K|ladder)");
}

std::string to_string(Study study) {
  switch (study) {
    case Study::ratios:
      return "ratios";
    case Study::target_frequency:
      return "target-frequency";
    case Study::buffer_k:
      return "buffer-K";
    case Study::ladder:
      break;
  }
  return "ladder";
}

std::vector<StudyVariant> expand_study(Study study, const ExperimentConfig& base) {
  std::vector<StudyVariant> out;
  switch (study) {
    case Study::ratios:
      for (const char* v : {"r1", "r2", "r3"}) {
        std::string tag = v;
        std::transform(tag.begin(), tag.end(), tag.begin(), ::toupper);
        out.push_back({tag, {{"mode", "impact"}, {"variant", v}}});
      }
      break;
    case Study::target_frequency: {
      const int n = base.buffer_slots * base.replay_k;
      // Multiples 1/16 ... 16 of n = N * K.
      for (int e = -4; e <= 4; ++e) {
        const double factor = std::ldexp(1.0, e);
        const int t = std::max(1, static_cast<int>(std::lround(n * factor)));
        const std::string tag = e < 0 ? "n_div_" + std::to_string(1 << -e) : "n_x" + std::to_string(1 << e);
        out.push_back({tag, {{"mode", "impact"}, {"t_target", std::to_string(t)}}});
      }
      break;
    }
    case Study::buffer_k:
      for (int k : {1, 2, 4, 16, 32}) out.push_back({"K" + std::to_string(k), {{"replay_k", std::to_string(k)}}});
      break;
    case Study::ladder:
      for (const char* m : {"impala_is", "appo", "impact"}) out.push_back({m, {{"mode", m}}});
      break;
  }
  return out;
}

std::vector<StudyVariant> expand_grid(const std::vector<std::string>& axes) {
  std::vector<StudyVariant> out{{"", {}}};
  for (const auto& axis : axes) {
    const KeyValue kv = parse_override(axis);
    const char sep = kv.second.find(';') != std::string::npos ? ';' : ',';
    const auto values = split(kv.second, sep);
    if (values.empty()) throw ConfigError("grid axis has no values: " + axis);
    std::vector<StudyVariant> next;
    for (const auto& prefix : out) {
      for (const auto& v : values) {
        StudyVariant s = prefix;
        s.tag += (s.tag.empty() ? "" : "__") + kv.first + "=" + v;
        s.overrides.emplace_back(kv.first, v);
        next.push_back(std::move(s));
      }
    }
    out = std::move(next);
  }
  return out;
}

namespace {

int run_variants(const ExperimentConfig& base, const std::vector<StudyVariant>& variants, const fs::path& dir,
                 const std::string& label, std::ostream& out) {
  // Validate every expansion before writing anything.
  std::vector<ExperimentConfig> configs;
  for (const auto& v : variants) configs.push_back(with_overrides(base, v.overrides));
  fs::create_directories(dir);
  json entries = json::array();
  for (std::size_t i = 0; i < variants.size(); ++i) {
    if (interrupt_flag().load()) break;
    const fs::path sub = dir / variants[i].tag;
    const auto artifacts = train_seeds(configs[i], sub);
    json runs = json::array();
    for (const auto& a : artifacts) {
      runs.push_back(json{{"seed", a.seed}, {"metrics", fs::relative(a.metrics, dir).string()}, {"eval_mean", a.eval.mean}});
    }
    entries.push_back(json{{"tag", variants[i].tag}, {"dir", variants[i].tag}, {"runs", runs}});
    out << label << " " << variants[i].tag << ": eval mean " << json_number(artifacts.empty() ? NAN : artifacts.front().eval.mean)
        << "\n";
  }
  write_text(dir / "manifest.json", json{{"study", label}, {"variants", entries}}.dump(2) + "\n");
  return interrupt_flag().load() ? 130 : 0;
}

int cmd_replay_curves(const fs::path& in_dir, const fs::path& out_file, std::ostream& out) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(in_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
        entry.path().filename().string().rfind("metrics", 0) == 0) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no metrics CSVs under " + in_dir.string());
  std::vector<std::vector<MetricsRow>> series;
  std::size_t rows = std::numeric_limits<std::size_t>::max();
  for (const auto& f : files) {
    series.push_back(read_metrics_csv(f));
    rows = std::min(rows, series.back().size());
  }
  std::ofstream csv(out_file, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + out_file.string());
  csv << "learner_steps,env_steps,wall_clock_s,return_mean,return_min,return_max,runs\n";
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0, lo = INFINITY, hi = -INFINITY, env = 0.0, clock = 0.0;
    int finite = 0;
    for (const auto& s : series) {
      env += static_cast<double>(s[r].env_steps);
      clock += s[r].wall_clock_s;
      if (std::isnan(s[r].mean_return)) continue;
      sum += s[r].mean_return;
      lo = std::min(lo, s[r].mean_return);
      hi = std::max(hi, s[r].mean_return);
      ++finite;
    }
    const double n = static_cast<double>(series.size());
    csv << series.front()[r].learner_steps << ',' << env / n << ',' << clock / n << ',';
    if (finite > 0) {
      csv << sum / finite << ',' << lo << ',' << hi;
    } else {
      csv << "nan,nan,nan";
    }
    csv << ',' << finite << '\n';
  }
  out << "aggregated " << files.size() << " runs over " << rows << " rows into " << out_file.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Asynchronous actor-learner training with clipped target networks"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::vector<std::uint64_t> seed_flag;
  bool deterministic = false;
  bool paper_scale = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Key-value config file");
    sub->add_option("--set", overrides, "Override key=value (repeatable)");
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--seed", seed_flag, "Run only this seed (repeatable)");
    sub->add_flag("--deterministic", deterministic, "Single-threaded scripted scheduler");
    sub->add_flag("--paper-scale", paper_scale, "Undivided continuous batch sizes");
  };

  auto* train = app.add_subcommand("train", "Train over the configured seeds");
  add_common(train);

  std::string study_name;
  auto* ablate = app.add_subcommand("ablate", "Run an ablation study");
  add_common(ablate);
  ablate->add_option("--study", study_name, "ratios|target-frequency|buffer-K|ladder")->required();

  std::vector<std::string> grid;
  auto* sweep = app.add_subcommand("sweep", "Grid sweep over config keys");
  add_common(sweep);
  sweep->add_option("--grid", grid, "key=v1,v2,... (repeatable; ';' separates list values)")->required();

  std::string checkpoint;
  std::string env_id;
  int episodes = 10;
  std::uint64_t eval_seed = 1;
  int max_steps = 0;
  auto* eval = app.add_subcommand("eval", "Greedy evaluation rollouts of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--env", env_id, "Environment id")->required();
  eval->add_option("--episodes", episodes, "Number of episodes");
  eval->add_option("--seed", eval_seed, "Evaluation seed");
  eval->add_option("--max-episode-steps", max_steps, "Episode cap (0 = env default)");
  std::string eval_out;
  eval->add_option("--out", eval_out, "Optional JSON result file");

  std::string curves_in;
  std::string curves_out;
  auto* curves = app.add_subcommand("replay-curves", "Aggregate metrics CSVs across seeds");
  curves->add_option("--in", curves_in, "Directory with metrics CSVs")->required();
  curves->add_option("--out", curves_out, "Aggregated CSV path")->required();

  std::vector<const char*> argv{"impact"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    InterruptScope interrupts;
    auto load = [&] {
      std::vector<std::string> all = overrides;
      if (paper_scale) all.push_back("paper_scale=true");
      if (deterministic) all.push_back("deterministic=true");
      if (!seed_flag.empty()) {
        std::string list;
        for (auto s : seed_flag) list += (list.empty() ? "" : ",") + std::to_string(s);
        all.push_back("seeds=" + list);
      }
      return parse_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path), all);
    };

    if (train->parsed()) {
      const ExperimentConfig config = load();
      const auto artifacts = train_seeds(config, out_dir);
      for (const auto& a : artifacts) {
        out << "seed " << a.seed << ": eval mean " << a.eval.mean << " (std " << a.eval.stddev << ")"
            << (a.interrupted ? " [interrupted]" : "") << "\n";
      }
      return interrupt_flag().load() ? 130 : 0;
    }
    if (ablate->parsed()) {
      const ExperimentConfig config = load();
      const Study study = study_from_string(study_name);
      return run_variants(config, expand_study(study, config), fs::path(out_dir) / to_string(study), to_string(study), out);
    }
    if (sweep->parsed()) {
      const ExperimentConfig config = load();
      return run_variants(config, expand_grid(grid), fs::path(out_dir), "sweep", out);
    }
    if (eval->parsed()) {
      if (episodes < 1) throw ConfigError("--episodes must be >= 1");
      if (!is_known_env(env_id)) throw ConfigError("unknown environment id: " + env_id);
      const ParamSet params = load_checkpoint(checkpoint);
      std::optional<RunningMeanStd> filter;
      const fs::path filter_path = fs::path(checkpoint).concat(".filter.json");
      if (fs::exists(filter_path)) filter = RunningMeanStd::load(filter_path);
      const EvalResult result = evaluate_policy(params, env_id, episodes, eval_seed, max_steps, filter ? &*filter : nullptr);
      const json j{{"env", env_id}, {"episodes", episodes}, {"mean", result.mean}, {"stddev", result.stddev}};
      if (!eval_out.empty()) write_text(eval_out, j.dump(2) + "\n");
      out << j.dump() << "\n";
      return 0;
    }
    if (curves->parsed()) return cmd_replay_curves(curves_in, curves_out, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace impact
