// Acceptance runner: one PASS/FAIL line per criterion.
//
//   impact_acceptance            run every criterion
//   impact_acceptance NAME...    run only the named criteria
//
// Exit status is non-zero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "impact/cli.hpp"
#include "impact/config.hpp"
#include "impact/objective.hpp"
#include "impact/runtime.hpp"
#include "support/buffer_script.hpp"
#include "support/equivalence.hpp"
#include "support/oracles.hpp"

using namespace impact;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "impact_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome algebraic_identity() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> logp(-3.0, 0.0);
  std::uniform_real_distribution<double> rho_dist(1.0, 10.0);
  const int triples = 100000;
  double worst = 0.0;
  for (int i = 0; i < triples; ++i) {
    const double th = logp(rng), t = logp(rng), w = logp(rng), rho = rho_dist(rng);
    const double direct = std::min(std::exp(w) / std::exp(t), rho) * std::exp(th) / std::exp(w);
    worst = std::max(worst, std::abs(direct - clipped_target_ratio(th, t, w, rho)));
  }
  return {worst <= 1e-12, fmt("max abs error %.3g over %d triples (limit 1e-12)", worst, triples)};
}

Outcome gradient_correctness() {
  std::mt19937_64 rng(77);
  int nets = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    for (auto variant : {RatioVariant::r1, RatioVariant::r2, RatioVariant::r3}) {
      for (bool eps_clip : {true, false}) {
        for (HeadKind head : {HeadKind::categorical, HeadKind::gaussian}) {
          LossHyper hyper;
          hyper.variant = variant;
          hyper.use_eps_clip = eps_clip;
          hyper.kl_coeff = rep % 2 ? 0.5 : 0.05;
          hyper.entropy_coeff = rep == 0 ? 0.0 : 0.01 * rep;
          hyper.value_coeff = 0.25 * (rep + 1);
          hyper.kl_swap = rep == 4;
          const auto prob = testing::random_problem(rng, head, hyper, 8);
          worst = std::max(worst, testing::relative_error(prob.analytic_gradient(), prob.numeric_gradient()));
          ++nets;
        }
      }
    }
  }
  return {nets >= 50 && worst <= 1e-4, fmt("max relative error %.3g over %d nets (limit 1e-4)", worst, nets)};
}

Outcome vgae_oracle() {
  std::mt19937_64 rng(99);
  double gae_worst = 0.0, vtrace_worst = 0.0;
  const int trajectories = 1000;
  for (int i = 0; i < trajectories; ++i) {
    auto s = testing::random_slice(rng, 1 + static_cast<Eigen::Index>(rng() % 64), 0.05, true);
    const Eigen::VectorXd ref = testing::vanilla_gae(s.rewards, s.dones, s.values, s.bootstrap_value, s.gamma, s.lambda);
    gae_worst = std::max(gae_worst, (vgae_advantages(s).advantages - ref).cwiseAbs().maxCoeff());
    const Eigen::VectorXd nstep = testing::nstep_returns(s.rewards, s.dones, s.bootstrap_value, s.gamma);
    vtrace_worst = std::max(vtrace_worst, (vtrace_targets(s) - nstep).cwiseAbs().maxCoeff());
  }
  return {gae_worst <= 1e-10 && vtrace_worst <= 1e-10,
          fmt("GAE max error %.3g, V-trace max error %.3g over %d trajectories (limit 1e-10)", gae_worst, vtrace_worst,
              trajectories)};
}

Outcome ppo_equivalence() {
  testing::PpoSettings s;
  s.learner_steps = 50;
  s.kl_coeff = 0.2;
  std::ostringstream detail;
  bool pass = true;

  s.minibatches = 1;
  s.epochs = 5;
  const auto one = testing::trajectory_gap(s, Mode::impact);
  pass = pass && one.steps == 50 && one.max_abs <= 1e-10;
  detail << fmt("impact N=1 K=5: max |dw| %.3g over %zu steps; ", one.max_abs, one.steps);

  s.minibatches = 2;
  const auto two = testing::trajectory_gap(s, Mode::ppo_sync);
  pass = pass && two.steps == 50 && two.max_abs <= 1e-10;
  detail << fmt("ppo_sync N=2 K=5: max |dw| %.3g over %zu steps (limit 1e-10)", two.max_abs, two.steps);
  return {pass, detail.str()};
}

Outcome buffer_semantics() {
  const auto sweep = testing::sweep_scripts(3, 12);
  return {!sweep.failure, sweep.failure ? *sweep.failure
                                        : fmt("%llu scripts (N,K <= 3, <= 12 events): at-most-K, annotate-once, "
                                              "no early eviction",
                                              static_cast<unsigned long long>(sweep.scripts))};
}

Outcome cartpole_learning() {
  ExperimentConfig c = parse_config(std::nullopt, {"env=cartpole", "workers=2", "total_timesteps=300000"});
  std::ostringstream detail;
  bool pass = true;
  for (std::uint64_t seed : c.seeds) {
    ExperimentConfig run = c;
    run.seed = seed;
    const RunResult r = run_experiment(run);
    const EvalResult e = evaluate_policy(r.params, run.env, run.eval_episodes, seed, run.max_episode_steps);
    pass = pass && e.mean >= 180.0 && r.env_steps <= 300000;
    detail << fmt("seed %llu: %.1f after %llu steps; ", static_cast<unsigned long long>(seed), e.mean,
                  static_cast<unsigned long long>(r.env_steps));
  }
  detail << "(need >= 180 on every seed)";
  return {pass, detail.str()};
}

Outcome pointmass_learning() {
  ExperimentConfig c = parse_config(std::nullopt, {"env=pointmass1d", "workers=2"});
  const int episodes = 100;
  const testing::PointMassLqr lqr(c.max_episode_steps);
  std::ostringstream detail;
  bool pass = c.total_timesteps <= 500000;
  for (std::uint64_t seed : c.seeds) {
    ExperimentConfig run = c;
    run.seed = seed;
    const RunResult r = run_experiment(run);
    const EvalResult e = evaluate_policy(r.params, run.env, episodes, seed, run.max_episode_steps);
    const double reference = lqr.mean_return(episodes, seed, run.max_episode_steps);
    const double gap = (reference - e.mean) / std::abs(reference);
    pass = pass && gap <= 0.10;
    detail << fmt("seed %llu: %.3f vs LQR %.3f (%.1f%% worse); ", static_cast<unsigned long long>(seed), e.mean,
                  reference, 100.0 * gap);
  }
  detail << "(need within 10% on every seed, 500k steps)";
  return {pass, detail.str()};
}

bool valid_metrics(const fs::path& csv, std::string& why) {
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  if (header != kMetricsHeader) {
    why = csv.string() + ": bad header";
    return false;
  }
  std::vector<MetricsRow> rows;
  try {
    rows = read_metrics_csv(csv);
  } catch (const std::exception& e) {
    why = csv.string() + ": " + e.what();
    return false;
  }
  if (rows.empty()) {
    why = csv.string() + ": no rows";
    return false;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].learner_steps != i + 1 || (i > 0 && rows[i].env_steps < rows[i - 1].env_steps)) {
      why = csv.string() + ": inconsistent row " + std::to_string(i + 1);
      return false;
    }
  }
  return true;
}

Outcome ablation_harness() {
  const fs::path out = scratch("ablate");
  std::ostringstream detail;
  bool pass = true;
  for (const char* study : {"ratios", "target-frequency", "buffer-K", "ladder"}) {
    std::ostringstream sink;
    const int code = run_cli({"ablate", "--study", study, "--set", "env=cartpole", "--set", "total_timesteps=3000",
                              "--set", "eval_episodes=2", "--seed", "1", "--out", out.string()},
                             sink, sink);
    const fs::path dir = out / to_string(study_from_string(study));
    const auto expected = expand_study(study_from_string(study), parse_config(std::nullopt, {"env=cartpole"}));
    int valid = 0;
    std::string why;
    for (const auto& v : expected) {
      if (valid_metrics(dir / v.tag / "metrics_seed1.csv", why)) ++valid;
    }
    const bool ok = code == 0 && valid == static_cast<int>(expected.size()) && fs::exists(dir / "manifest.json");
    pass = pass && ok;
    detail << study << " " << valid << "/" << expected.size() << (why.empty() ? "" : " [" + why + "]") << "; ";
  }
  return {pass, detail.str() + "valid CSVs per variant"};
}

Outcome determinism() {
  bool pass = true;
  std::ostringstream detail;
  for (const char* env : {"cartpole", "pointmass1d"}) {
    std::string contents[2];
    for (int i = 0; i < 2; ++i) {
      const fs::path out = scratch(std::string("determinism_") + env + std::to_string(i));
      std::ostringstream sink;
      run_cli({"train", "--set", std::string("env=") + env, "--set", "total_timesteps=20000", "--set", "eval_episodes=1",
               "--seed", "7", "--deterministic", "--out", out.string()},
              sink, sink);
      std::ifstream in(out / "metrics_seed7.csv", std::ios::binary);
      contents[i].assign(std::istreambuf_iterator<char>(in), {});
    }
    const bool same = !contents[0].empty() && contents[0] == contents[1];
    pass = pass && same;
    detail << env << (same ? " identical" : " DIFFERENT") << " (" << contents[0].size() << " bytes); ";
  }
  return {pass, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"algebraic-identity", 1.0, algebraic_identity},
      {"gradient-correctness", 60.0, gradient_correctness},
      {"vgae-oracle", 10.0, vgae_oracle},
      {"ppo-equivalence", 120.0, ppo_equivalence},
      {"buffer-semantics", 10.0, buffer_semantics},
      {"desk-learning-cartpole", 900.0, cartpole_learning},
      {"desk-learning-pointmass", 900.0, pointmass_learning},
      {"ablation-harness", 0.0, ablation_harness},
      {"determinism", 0.0, determinism},
  };
  std::vector<std::string> selected(argv + 1, argv + argc);
  for (const auto& name : selected) {
    const bool known = std::any_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.name == name; });
    if (!known) {
      std::cerr << "unknown criterion: " << name << "\n";
      return 2;
    }
  }

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.name) == selected.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit_s > 0.0 && seconds > c.time_limit_s) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s limit]", c.time_limit_s);
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << fmt(" (%.2f s)", seconds) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
