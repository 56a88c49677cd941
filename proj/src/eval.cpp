#include "rewardloop/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "rewardloop/error.hpp"
#include "rewardloop/parallel.hpp"
#include "rewardloop/ppo.hpp"
#include "rewardloop/rng.hpp"

namespace rewardloop {

namespace {

std::optional<double> mean_if_any(double sum, int count) {
  if (count == 0) return std::nullopt;
  return sum / count;
}

std::string fixed2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

void bullet(std::string& out, const char* label, const MeanStd& m) {
  out += "- ";
  out += label;
  out += ": ";
  out += fixed2(m.mean);
  out += " ± ";
  out += fixed2(m.std);
  out += '\n';
}

std::optional<MeanStd> mean_std_defined(const std::vector<SeedStats>& per_seed,
                                        std::optional<double> SeedStats::*field) {
  std::vector<double> xs;
  for (const auto& s : per_seed) {
    if (s.*field) xs.push_back(*(s.*field));
  }
  if (xs.empty()) return std::nullopt;
  return mean_std(xs);
}

void put_optional(nlohmann::json& j, const char* key, const std::optional<double>& v) {
  j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> get_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

SeedStats SeedStats::from_results(std::uint64_t seed, std::vector<EpisodeResult> results) {
  if (results.empty()) throw ConfigError("seed stats: no episodes");
  SeedStats s;
  s.seed = seed;
  s.episodes = static_cast<int>(results.size());
  double speed_ok = 0.0, speed_off = 0.0, steps_ok = 0.0;
  for (const auto& r : results) {
    switch (r.outcome) {
      case Outcome::Successful:
        ++s.successful;
        speed_ok += r.avg_speed_kmh;
        steps_ok += r.step_count;
        break;
      case Outcome::OffRoad:
        ++s.off_road;
        speed_off += r.avg_speed_kmh;
        break;
      case Outcome::Timeout:
        ++s.timeout;
        break;
    }
  }
  s.avg_speed_success = mean_if_any(speed_ok, s.successful);
  s.avg_speed_offroad = mean_if_any(speed_off, s.off_road);
  s.avg_steps_success = mean_if_any(steps_ok, s.successful);
  s.episode_results = std::move(results);
  return s;
}

void SeedStats::check() const {
  if (episodes <= 0) throw ConfigError("seed stats: episodes must be positive");
  if (successful < 0 || off_road < 0 || timeout < 0 || successful + off_road + timeout != episodes) {
    throw ConfigError("seed stats: outcome counts do not partition the episodes");
  }
  if (avg_speed_success.has_value() != (successful > 0) ||
      avg_steps_success.has_value() != (successful > 0) ||
      avg_speed_offroad.has_value() != (off_road > 0)) {
    throw ConfigError("seed stats: averages must be present exactly when their count is positive");
  }
}

MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw ConfigError("mean_std: empty input");
  MeanStd m;
  m.n = static_cast<int>(xs.size());
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / m.n;
  if (m.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / (m.n - 1));
  }
  return m;
}

std::pair<double, double> wilson_interval(int successes, int n, double z) {
  if (n <= 0) throw ConfigError("wilson_interval: n must be positive");
  if (successes < 0 || successes > n) throw ConfigError("wilson_interval: successes outside [0, n]");
  const double p = static_cast<double>(successes) / n;
  const double z2n = z * z / n;
  const double denom = 1.0 + z2n;
  const double center = (p + z2n / 2.0) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * static_cast<double>(n))) / denom;
  // Clamped so the interval always contains p despite rounding at 0 and 1.
  return {std::clamp(center - half, 0.0, p), std::clamp(center + half, p, 1.0)};
}

IterationStats aggregate(const std::vector<SeedStats>& per_seed) {
  if (per_seed.empty()) throw ConfigError("aggregate: no seeds");
  IterationStats it;
  it.seeds = static_cast<int>(per_seed.size());
  std::vector<double> total, ok, ok_rate, off, off_rate, to, to_rate;
  for (const auto& s : per_seed) {
    s.check();
    const double n = s.episodes;
    total.push_back(n);
    ok.push_back(s.successful);
    ok_rate.push_back(100.0 * s.successful / n);
    off.push_back(s.off_road);
    off_rate.push_back(100.0 * s.off_road / n);
    to.push_back(s.timeout);
    to_rate.push_back(100.0 * s.timeout / n);
    it.pooled_n += s.episodes;
    it.pooled_successful += s.successful;
    it.pooled_off_road += s.off_road;
    it.pooled_timeout += s.timeout;
  }
  it.total_episodes = mean_std(total);
  it.successful = mean_std(ok);
  it.success_rate = mean_std(ok_rate);
  it.off_road = mean_std(off);
  it.off_road_rate = mean_std(off_rate);
  it.timeout = mean_std(to);
  it.timeout_rate = mean_std(to_rate);
  it.avg_speed_offroad = mean_std_defined(per_seed, &SeedStats::avg_speed_offroad);
  it.avg_speed_success = mean_std_defined(per_seed, &SeedStats::avg_speed_success);
  it.avg_steps_success = mean_std_defined(per_seed, &SeedStats::avg_steps_success);
  std::tie(it.wilson_lo, it.wilson_hi) = wilson_interval(it.pooled_successful, it.pooled_n);
  return it;
}

std::string render_stats_block(const IterationStats& s) {
  std::string out;
  out += "- Total Episodes: " + fixed2(s.total_episodes.mean) + "\n";
  bullet(out, "Successful Episodes", s.successful);
  bullet(out, "Success Rate (%)", s.success_rate);
  bullet(out, "Off Road Episodes", s.off_road);
  bullet(out, "Off Road Rate (%)", s.off_road_rate);
  bullet(out, "Timeout Episodes", s.timeout);
  bullet(out, "Timeout Rate (%)", s.timeout_rate);
  if (s.avg_speed_offroad) bullet(out, "Avg Speed Off Road (km/h)", *s.avg_speed_offroad);
  if (s.avg_speed_success) bullet(out, "Avg Speed Success (km/h)", *s.avg_speed_success);
  if (s.avg_steps_success) bullet(out, "Avg Steps Success", *s.avg_steps_success);
  return out;
}

std::vector<SeedStats> evaluate_policy(const PolicyFn& policy, const TrackSpec& track,
                                       const RewardWeights& weights, const EnvConfig& cfg,
                                       int n_episodes, const std::vector<std::uint64_t>& seeds,
                                       const EvalOptions& opts) {
  if (n_episodes <= 0) throw ConfigError("evaluate_policy: n_episodes must be positive");
  if (seeds.empty()) throw ConfigError("evaluate_policy: no evaluation seeds");
  const auto n = static_cast<std::size_t>(n_episodes);
  std::vector<EpisodeResult> flat(seeds.size() * n);
  parallel_for(
      flat.size(),
      [&](std::size_t k) {
        const auto seed = derive_seed(seeds[k / n], k % n);
        const EpisodeRecord rec = run_episode(policy, track, weights, cfg, seed);
        flat[k] = {rec.outcome, rec.step_count, rec.avg_speed_kmh, rec.cumulative_reward};
      },
      opts.threads);
  std::vector<SeedStats> out;
  out.reserve(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto first = flat.begin() + static_cast<std::ptrdiff_t>(i * n);
    out.push_back(SeedStats::from_results(seeds[i], {first, first + static_cast<std::ptrdiff_t>(n)}));
  }
  return out;
}

std::vector<SeedStats> evaluate_policy(const TrainedPolicy& policy, const TrackSpec& track,
                                       const RewardWeights& weights, const EnvConfig& cfg,
                                       int n_episodes, const std::vector<std::uint64_t>& seeds,
                                       const EvalOptions& opts) {
  if (policy.params.input_size() != kObservationSize) {
    throw ConfigError("evaluate_policy: policy input size does not match the observation");
  }
  return evaluate_policy(as_policy_fn(policy), track, weights, cfg, n_episodes, seeds, opts);
}

void to_json(nlohmann::json& j, const EpisodeResult& r) {
  j = {{"outcome", to_string(r.outcome)},
       {"step_count", r.step_count},
       {"avg_speed_kmh", r.avg_speed_kmh},
       {"cumulative_reward", r.cumulative_reward}};
}

void from_json(const nlohmann::json& j, EpisodeResult& r) {
  r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  r.step_count = j.at("step_count").get<int>();
  r.avg_speed_kmh = j.at("avg_speed_kmh").get<double>();
  r.cumulative_reward = j.at("cumulative_reward").get<double>();
}

void to_json(nlohmann::json& j, const SeedStats& s) {
  j = {{"seed", s.seed},
       {"replica", s.replica},
       {"episodes", s.episodes},
       {"successful", s.successful},
       {"off_road", s.off_road},
       {"timeout", s.timeout}};
  put_optional(j, "avg_speed_success", s.avg_speed_success);
  put_optional(j, "avg_speed_offroad", s.avg_speed_offroad);
  put_optional(j, "avg_steps_success", s.avg_steps_success);
  j["episode_results"] = s.episode_results;
}

void from_json(const nlohmann::json& j, SeedStats& s) {
  s.seed = j.at("seed").get<std::uint64_t>();
  s.replica = j.value("replica", 0);
  s.episodes = j.at("episodes").get<int>();
  s.successful = j.at("successful").get<int>();
  s.off_road = j.at("off_road").get<int>();
  s.timeout = j.at("timeout").get<int>();
  s.avg_speed_success = get_optional(j, "avg_speed_success");
  s.avg_speed_offroad = get_optional(j, "avg_speed_offroad");
  s.avg_steps_success = get_optional(j, "avg_steps_success");
  s.episode_results = j.value("episode_results", std::vector<EpisodeResult>{});
  s.check();
}

void to_json(nlohmann::json& j, const MeanStd& m) { j = {{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

void from_json(const nlohmann::json& j, MeanStd& m) {
  m.mean = j.at("mean").get<double>();
  m.std = j.at("std").get<double>();
  m.n = j.at("n").get<int>();
}

void to_json(nlohmann::json& j, const IterationStats& s) {
  j = {{"seeds", s.seeds},
       {"total_episodes", s.total_episodes},
       {"successful", s.successful},
       {"success_rate", s.success_rate},
       {"off_road", s.off_road},
       {"off_road_rate", s.off_road_rate},
       {"timeout", s.timeout},
       {"timeout_rate", s.timeout_rate},
       {"pooled_n", s.pooled_n},
       {"pooled_successful", s.pooled_successful},
       {"pooled_off_road", s.pooled_off_road},
       {"pooled_timeout", s.pooled_timeout},
       {"wilson_lo", s.wilson_lo},
       {"wilson_hi", s.wilson_hi}};
  auto opt = [&](const char* key, const std::optional<MeanStd>& v) {
    j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  opt("avg_speed_offroad", s.avg_speed_offroad);
  opt("avg_speed_success", s.avg_speed_success);
  opt("avg_steps_success", s.avg_steps_success);
}

void from_json(const nlohmann::json& j, IterationStats& s) {
  s.seeds = j.at("seeds").get<int>();
  s.total_episodes = j.at("total_episodes").get<MeanStd>();
  s.successful = j.at("successful").get<MeanStd>();
  s.success_rate = j.at("success_rate").get<MeanStd>();
  s.off_road = j.at("off_road").get<MeanStd>();
  s.off_road_rate = j.at("off_road_rate").get<MeanStd>();
  s.timeout = j.at("timeout").get<MeanStd>();
  s.timeout_rate = j.at("timeout_rate").get<MeanStd>();
  s.pooled_n = j.at("pooled_n").get<int>();
  s.pooled_successful = j.at("pooled_successful").get<int>();
  s.pooled_off_road = j.at("pooled_off_road").get<int>();
  s.pooled_timeout = j.at("pooled_timeout").get<int>();
  s.wilson_lo = j.at("wilson_lo").get<double>();
  s.wilson_hi = j.at("wilson_hi").get<double>();
  auto opt = [&](const char* key) -> std::optional<MeanStd> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<MeanStd>();
  };
  s.avg_speed_offroad = opt("avg_speed_offroad");
  s.avg_speed_success = opt("avg_speed_success");
  s.avg_steps_success = opt("avg_steps_success");
}

}  // namespace rewardloop
