// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 100). --skip-long skips the full-mode
// training trend (criterion 7).

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "rewardloop/env.hpp"
#include "rewardloop/error.hpp"
#include "rewardloop/eval.hpp"
#include "rewardloop/nn.hpp"
#include "rewardloop/orchestrator.hpp"
#include "rewardloop/ppo.hpp"
#include "rewardloop/prompts.hpp"
#include "rewardloop/report.hpp"
#include "rewardloop/reward.hpp"
#include "rewardloop/rng.hpp"
#include "support.hpp"

using namespace rewardloop;
using namespace rewardloop::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

// 1: Wilson offsets at print precision.
Verdict wilson_cells() {
  struct Case {
    int k, n;
    double plus, minus;
  };
  std::string detail;
  bool ok = true;
  for (const Case c : {Case{201, 250, 4.4, 5.4}, Case{0, 250, 1.5, 0.0}, Case{234, 250, 2.4, 3.7}}) {
    const auto [lo, hi] = wilson_interval(c.k, c.n);
    const double p = static_cast<double>(c.k) / c.n;
    const double plus = 100.0 * (hi - p), minus = 100.0 * (p - lo);
    ok = ok && std::abs(plus - c.plus) <= 0.05 && std::abs(minus - c.minus) <= 0.05;
    detail += format_rate_cell(c.k, c.n) + "; ";
  }
  ok = ok && format_rate_cell(201, 250) == "80.4% +4.4/−5.4";
  return {ok, detail};
}

// 2: byte-identical weight-file round trip.
Verdict weight_round_trip() {
  const char* lines[] = {
      "reward = 0.1*speedDriveReward + -0.1*offRoadPenalty + 0.1*lateralBiasReward + 0.1*stayOnTrackReward",
      "reward = 1.0*speedDriveReward + -1.0*offRoadPenalty + 0.0*lateralBiasReward + 0.0*stayOnTrackReward",
      "reward = 1.0*speedDriveReward + -1.0*offRoadPenalty + 0.0*lateralBiasReward + 1.0*stayOnTrackReward",
      "reward = 1.0*speedDriveReward + -10.0*offRoadPenalty + 0.0*lateralBiasReward + 1.0*stayOnTrackReward",
      "reward = 1.0*speedDriveReward + -20.0*offRoadPenalty + 0.0*lateralBiasReward + 1.0*stayOnTrackReward",
      "reward = 1.0*speedDriveReward + -50.0*offRoadPenalty + 0.0*lateralBiasReward + 1.0*stayOnTrackReward",
      "reward = 1.0*speedDriveReward + -100.0*offRoadPenalty + 0.0*lateralBiasReward + 1.0*stayOnTrackReward",
  };
  int good = 0;
  for (const char* l : lines) good += serialize_weight_file(parse_weight_file(l)) == l ? 1 : 0;
  return {good == 7, std::to_string(good) + "/7 lines identical"};
}

// 3: GAE against the explicit discounted sum of TD residuals.
Verdict gae_oracle_check() {
  Rng rng(2718);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 1 + rng.below(100);
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.normal() * 5.0;
      v[i] = rng.normal() * 2.0;
      d[i] = rng.uniform() < 0.1 ? 1 : 0;
    }
    const double gamma = 0.99, lambda = 0.95, boot = rng.normal();
    const auto [adv, ret] = compute_gae(r, v, d, boot, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      double sum = 0.0, coef = 1.0;
      for (std::size_t j = t; j < n; ++j) {
        const double next = j + 1 < n ? v[j + 1] : boot;
        sum += coef * (r[j] + (d[j] ? 0.0 : gamma * next) - v[j]);
        if (d[j]) break;
        coef *= gamma * lambda;
      }
      worst = std::max(worst, std::abs(sum - adv[t]));
    }
  }
  return {worst <= 1e-10, fmt("max abs error %.3g", worst)};
}

std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> out;
  p.for_each_buffer([&](std::span<const double> b) { out.insert(out.end(), b.begin(), b.end()); });
  return out;
}

void unflatten(MlpParams& p, const std::vector<double>& v) {
  std::size_t i = 0;
  p.for_each_buffer([&](std::span<double> b) {
    for (double& x : b) x = v[i++];
  });
}

// 4: analytic gradient of a quadratic output loss vs central differences.
Verdict gradient_check() {
  MlpParams p = init_params(404);
  for (auto& net : p.nets) {
    for (double& w : net.layers.back().weight) w *= 50.0;
  }
  const std::array<double, 3> target{0.3, -0.7, 1.5};
  auto loss = [&](const MlpParams& q, const std::vector<double>& x) {
    const NetOutput o = forward(q, x);
    return 0.5 * (std::pow(o.mean[0] - target[0], 2) + std::pow(o.mean[1] - target[1], 2) +
                  std::pow(o.value - target[2], 2));
  };
  Rng rng(405);
  const auto theta = flatten(p);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    std::vector<double> x(11);
    for (double& v : x) v = rng.uniform(-1, 1);
    ForwardCache cache;
    const NetOutput o = forward(p, x, cache);
    MlpParams g = p.zeros_like();
    backward(p, cache, {{o.mean[0] - target[0], o.mean[1] - target[1]}, o.value - target[2]}, g);
    const auto grad = flatten(g);
    std::vector<double> u(theta.size());
    for (double& v : u) v = rng.normal();
    double analytic = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) analytic += grad[i] * u[i];
    const double h = 1e-6;
    auto plus = theta, minus = theta;
    for (std::size_t i = 0; i < u.size(); ++i) {
      plus[i] += h * u[i];
      minus[i] -= h * u[i];
    }
    MlpParams q = p;
    unflatten(q, plus);
    const double lp = loss(q, x);
    unflatten(q, minus);
    const double lm = loss(q, x);
    const double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max(std::abs(fd), 1e-8));
  }
  return {worst < 1e-4, fmt("max relative error %.3g over 50 directions", worst)};
}

// 5: two identical full-mode runs give identical manifests and checkpoints.
Verdict determinism() {
  RunConfig cfg;
  cfg.iterations = 2;
  cfg.eval_seeds = {11, 22};
  cfg.episodes = 5;
  cfg.train.buffer_size = 2048;
  cfg.train.batch_size = 256;
  cfg.train.total_env_steps = 4096;
  cfg.run_seed = 77;
  const std::vector<RewardWeights> script{{1, -1, 0, 1}, {1, -10, 0, 1}};
  TempDir a("accept5a"), b("accept5b");
  ScriptedProposer pa(script), pb(script);
  const RunManifest ma = run_loop(cfg, a.path(), {.proposer = &pa});
  const RunManifest mb = run_loop(cfg, b.path(), {.proposer = &pb});
  const std::string ja = strip_timings(manifest_to_json(load_manifest(a.path()))).dump(2);
  const std::string jb = strip_timings(manifest_to_json(load_manifest(b.path()))).dump(2);
  bool same_files = true;
  for (const auto& rec : ma.iterations) {
    for (const auto& f : rec.checkpoints) {
      same_files = same_files && read_text_file(iteration_dir(a.path(), rec.index) / f) ==
                                     read_text_file(iteration_dir(b.path(), rec.index) / f);
    }
    for (const char* f : {"stats.json", "prompt.txt", "curve.csv"}) {
      same_files = same_files && read_text_file(iteration_dir(a.path(), rec.index) / f) ==
                                     read_text_file(iteration_dir(b.path(), rec.index) / f);
    }
  }
  const bool ok = ja == jb && same_files && mb.iterations.size() == 2;
  return {ok, std::string("manifests ") + (ja == jb ? "identical" : "differ") + ", iteration files " +
                  (same_files ? "identical" : "differ") + " (" + ma.kernel_isa + " kernels)"};
}

// 6: hill climber in surrogate mode gains at least 20 points.
Verdict surrogate_improvement() {
  // The closed form written out, for the expected trajectory without jitter.
  auto closed_form = [](const RewardWeights& w) {
    const double s = 0.05 + 0.5 * std::tanh(std::abs(w.offroad) / 20.0) + 0.3 * std::tanh(std::max(w.stay, 0.0)) -
                     0.2 * std::abs(w.lateral) - 0.1 * std::max(-w.speed, 0.0);
    return std::clamp(s, 0.0, 1.0);
  };
  TempDir dir("accept6");
  RunConfig cfg;
  cfg.mode = Mode::Surrogate;
  cfg.iterations = 5;
  HillClimbProposer p;
  const RunManifest m = run_loop(cfg, dir.path(), {.proposer = &p});
  const double first = m.iterations.front().stats.pooled_success_rate();
  const double last = m.iterations.back().stats.pooled_success_rate();
  const double expected =
      closed_form(m.iterations.back().proposal.weights) - closed_form(m.iterations.front().proposal.weights);
  const double gain = 100.0 * (last - first);
  return {gain >= 20.0 && 100.0 * expected >= 20.0,
          fmt("pooled success %.1f%% -> %.1f%% (closed form gain %.1f points)", 100 * first, 100 * last,
              100 * expected)};
}

// 7: full-mode trend over the published off-road trajectory.
Verdict training_trend() {
  RunConfig cfg;
  cfg.iterations = 4;
  cfg.eval_seeds = {101, 202, 303};
  cfg.episodes = 20;
  cfg.train.total_env_steps = 150000;
  const std::vector<RewardWeights> script{{1, -1, 0, 1}, {1, -10, 0, 1}, {1, -20, 0, 1}, {1, -50, 0, 1}};
  TempDir dir("accept7");
  ScriptedProposer p(script);
  const RunManifest m = run_loop(cfg, dir.path(), {.proposer = &p, .log = [](const std::string& s) {
                                   std::fprintf(stderr, "  [7] %s\n", s.c_str());
                                 }});

  std::string detail = "success by iteration:";
  for (const auto& r : m.iterations) detail += fmt(" %.1f%%", 100.0 * r.stats.pooled_success_rate());

  const double s_first = m.iterations.front().stats.pooled_success_rate();
  const double s_last = m.iterations.back().stats.pooled_success_rate();
  const bool a = s_last > s_first;

  bool b = true;
  int successes = 0;
  for (const auto& r : m.iterations) {
    const auto doc = nlohmann::json::parse(read_text_file(iteration_dir(dir.path(), r.index) / "stats.json"));
    for (const auto& s : doc.at("per_seed").get<std::vector<SeedStats>>()) {
      for (const auto& e : s.episode_results) {
        if (e.outcome != Outcome::Successful) continue;
        ++successes;
        b = b && e.step_count > 0 && e.step_count < cfg.env.max_steps;
      }
    }
  }

  const TrainedPolicy untrained = untrained_policy(cfg.train_seed(0), cfg.train.net);
  const auto base = aggregate(evaluate_policy(untrained, cfg.track, script.back(), cfg.env, cfg.episodes, cfg.eval_seeds));
  const double s_base = base.pooled_success_rate();
  const bool c = 100.0 * (s_last - s_base) >= 20.0;

  detail += fmt("; untrained %.1f%%", 100.0 * s_base);
  detail += std::string("; (a) ") + (a ? "pass" : "fail") + fmt(" [%.1f%% vs %.1f%%]", 100 * s_last, 100 * s_first);
  detail += std::string(", (b) ") + (b ? "pass" : "fail") + " [" + std::to_string(successes) + " successful episodes]";
  detail += std::string(", (c) ") + (c ? "pass" : "fail");
  return {a && b && c, detail};
}

// 8: prompt golden strings.
Verdict prompt_golden() {
  PromptContext ctx;
  const std::string initial = render_prompt(ctx);
  const bool i1 = contains(initial,
                           "reward = 0.1*speedDriveReward + -0.1*offRoadPenalty + 0.1*lateralBiasReward + "
                           "0.1*stayOnTrackReward");
  const bool i2 = contains(initial, "MUST SET ITS VALUE TO 0");

  auto entry = [](int i, RewardWeights w) {
    SeedStats s;
    s.episodes = 50;
    s.off_road = 3;
    s.timeout = 47;
    s.avg_speed_offroad = 18.6;
    const IterationStats st = aggregate({s});
    return HistoryEntry{i, w, render_stats_block(st), st};
  };
  ctx.history = {entry(0, {1, -1, 0, 0}), entry(1, {1, -1, 0, 1})};
  const std::string fb = render_prompt(ctx);
  const bool f1 = contains(fb,
                           "reward = 1.0*speedDriveReward + -1.0*offRoadPenalty + 0.0*lateralBiasReward + "
                           "0.0*stayOnTrackReward") &&
                  contains(fb,
                           "reward = 1.0*speedDriveReward + -1.0*offRoadPenalty + 0.0*lateralBiasReward + "
                           "1.0*stayOnTrackReward");
  const bool f2 = contains(fb, "OffRoad if the cumulative off-road counter increased.") &&
                  contains(fb, "Timeout if the agent didn’t complete the episode within max time steps.") &&
                  contains(fb, "Successful if a full lap was completed.") &&
                  contains(fb, "StepCount: Represents the total number of simulation steps in that episode.") &&
                  contains(fb, "Avg_speed_kmh: The average speed measured in km/h.");
  return {i1 && i2 && f1 && f2, std::string("placeholder ") + (i1 ? "ok" : "missing") + ", zero rule " +
                                    (i2 ? "ok" : "missing") + ", reward lines " + (f1 ? "ok" : "missing") +
                                    ", notes " + (f2 ? "ok" : "missing")};
}

// 9: outcome rules on constructed traces and on the real environment.
Verdict outcome_rules() {
  bool ok = classify_outcome({0, 1, 400, 2000, false, true}) == Outcome::OffRoad &&
            classify_outcome({0, 0, 2000, 2000, false, true}) == Outcome::Timeout &&
            classify_outcome({0, 0, 870, 2000, true, true}) == Outcome::Successful &&
            classify_outcome({0, 1, 2000, 2000, false, true}) == Outcome::OffRoad;
  // The same precedence in the simulator: budget ends on the off-road step.
  const TrackSpec t = TrackSpec::default_circuit();
  const PolicyFn straight = [](const Observation&) { return Action{1.0, 0.0}; };
  const EpisodeRecord free_run = run_episode(straight, t, {}, EnvConfig{}, 3);
  EnvConfig tight;
  tight.max_steps = free_run.step_count;
  const EpisodeRecord boundary = run_episode(straight, t, {}, tight, 3);
  ok = ok && free_run.outcome == Outcome::OffRoad && boundary.outcome == Outcome::OffRoad &&
       boundary.step_count == tight.max_steps;
  return {ok, "off-road on step " + std::to_string(boundary.step_count) + " of " + std::to_string(tight.max_steps) +
                  " classified " + to_string(boundary.outcome)};
}

// 10: LM client through the CLI against a local mock server.
Verdict lm_robustness() {
  const std::string cli = shell_quote(REWARDLOOP_CLI_PATH);
  const std::string valid =
      "reward = 1.0*speedDriveReward + -10.0*offRoadPenalty + 0.0*lateralBiasReward + 1.0*stayOnTrackReward";
  EnvGuard key(kApiKeyEnv, "sk-acceptance");
  TempDir dir("accept10");

  // Malformed then valid.
  MockChatServer flaky({{200, "Increase the penalty a bit."}, {200, valid}});
  const auto run_a = dir / "a";
  const auto ra = run_command(cli + " run --out " + shell_quote(run_a.string()) + " --proposer lm --endpoint " +
                              flaky.endpoint() + " --backoff 0 --mode surrogate -T 1 -q");
  bool ok_a = ra.exit_code == 0;
  int retries = -1;
  if (ok_a) {
    const RunManifest m = load_manifest(run_a);
    retries = m.iterations.at(0).proposal.retries;
    ok_a = m.status == RunStatus::Complete && retries == 1 && m.iterations[0].proposal.attempt_log.size() == 1;
  }

  // Iteration 1 sees only 500s; the server recovers before the resume.
  MockChatServer down({{200, valid}, {500, "", "{}"}, {500, "", "{}"}, {500, "", "{}"}, {200, valid}});
  const auto run_b = dir / "b";
  const auto rb = run_command(cli + " run --out " + shell_quote(run_b.string()) + " --proposer lm --endpoint " +
                              down.endpoint() + " --backoff 0 --max-retries 2 --mode surrogate -T 3 -q");
  bool ok_b = rb.exit_code == 3;
  std::string state;
  if (ok_b) {
    const RunManifest m = load_manifest(run_b);
    state = to_string(m.status);
    ok_b = m.status == RunStatus::Failed && m.iterations.size() == 1 && contains(m.failure, "HTTP 500");
    const auto rr = run_command(cli + " resume " + shell_quote(run_b.string()) + " -q");
    const RunManifest after = load_manifest(run_b);
    ok_b = ok_b && rr.exit_code == 0 && after.status == RunStatus::Complete && after.iterations.size() == 3;
  }
  return {ok_a && ok_b, "malformed-then-valid exit " + std::to_string(ra.exit_code) + " retries " +
                            std::to_string(retries) + "; persistent 500 exit " + std::to_string(rb.exit_code) +
                            " status " + state + ", resumed " + (ok_b ? "to completion" : "unsuccessfully")};
}

}  // namespace

int main(int argc, char** argv) {
  bool skip_long = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--skip-long") == 0) skip_long = true;
  }
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, wilson_cells},  {2, weight_round_trip}, {3, gae_oracle_check}, {4, gradient_check},
      {5, determinism},   {6, surrogate_improvement}, {7, training_trend}, {8, prompt_golden},
      {9, outcome_rules}, {10, lm_robustness}};
  int failed = 0;
  for (const auto& [n, check] : criteria) {
    if (n == 7 && skip_long) {
      std::printf("criterion %d: SKIP (--skip-long)\n", n);
      std::fflush(stdout);
      continue;
    }
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("criterion %d: %s - %s\n", n, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  return std::min(failed, 100);
}
