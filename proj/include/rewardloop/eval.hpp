#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rewardloop/env.hpp"

namespace rewardloop {

struct TrainedPolicy;

// One evaluated episode, kept for per-episode reporting.
struct EpisodeResult {
  Outcome outcome = Outcome::Timeout;
  int step_count = 0;
  double avg_speed_kmh = 0.0;
  double cumulative_reward = 0.0;
};

struct SeedStats {
  std::uint64_t seed = 0;
  int replica = 0;  // training replica that produced the policy
  int episodes = 0;
  int successful = 0;
  int off_road = 0;
  int timeout = 0;
  // Present only when the matching outcome occurred at least once.
  std::optional<double> avg_speed_success;
  std::optional<double> avg_speed_offroad;
  std::optional<double> avg_steps_success;
  std::vector<EpisodeResult> episode_results;  // empty for surrogate stats

  // Tallies outcomes and averages; throws ConfigError on an empty list.
  static SeedStats from_results(std::uint64_t seed, std::vector<EpisodeResult> results);
  // Throws ConfigError unless the counts partition `episodes`.
  void check() const;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample std (n-1); 0 for a single value
  int n = 0;
};

// Mean and sample standard deviation. Throws ConfigError when empty.
MeanStd mean_std(const std::vector<double>& xs);

struct IterationStats {
  int seeds = 0;
  MeanStd total_episodes;
  MeanStd successful;
  MeanStd success_rate;  // percent
  MeanStd off_road;
  MeanStd off_road_rate;
  MeanStd timeout;
  MeanStd timeout_rate;
  // Over the seeds where the average exists; absent if none.
  std::optional<MeanStd> avg_speed_offroad;
  std::optional<MeanStd> avg_speed_success;
  std::optional<MeanStd> avg_steps_success;

  int pooled_n = 0;
  int pooled_successful = 0;
  int pooled_off_road = 0;
  int pooled_timeout = 0;
  double wilson_lo = 0.0;  // proportion
  double wilson_hi = 0.0;

  double pooled_success_rate() const {
    return pooled_n > 0 ? static_cast<double>(pooled_successful) / pooled_n : 0.0;
  }
};

inline constexpr double kWilsonZ95 = 1.959964;

// Wilson score interval as proportions. Throws ConfigError for n <= 0 or
// successes outside [0, n].
std::pair<double, double> wilson_interval(int successes, int n, double z = kWilsonZ95);

// Cross-seed summary. Throws ConfigError for an empty list.
IterationStats aggregate(const std::vector<SeedStats>& per_seed);

// Bullet list in the feedback-prompt statistics format, two decimals,
// undefined averages left out. Ends with a newline.
std::string render_stats_block(const IterationStats& stats);

struct EvalOptions {
  unsigned threads = 0;  // 0 = hardware concurrency
};

// Runs n_episodes per seed; episode e of seed s resets with
// derive_seed(s, e). Deterministic.
std::vector<SeedStats> evaluate_policy(const PolicyFn& policy, const TrackSpec& track,
                                       const RewardWeights& weights, const EnvConfig& cfg,
                                       int n_episodes, const std::vector<std::uint64_t>& seeds,
                                       const EvalOptions& opts = {});
std::vector<SeedStats> evaluate_policy(const TrainedPolicy& policy, const TrackSpec& track,
                                       const RewardWeights& weights, const EnvConfig& cfg,
                                       int n_episodes, const std::vector<std::uint64_t>& seeds,
                                       const EvalOptions& opts = {});

void to_json(nlohmann::json& j, const EpisodeResult& r);
void from_json(const nlohmann::json& j, EpisodeResult& r);
void to_json(nlohmann::json& j, const SeedStats& s);
void from_json(const nlohmann::json& j, SeedStats& s);
void to_json(nlohmann::json& j, const MeanStd& m);
void from_json(const nlohmann::json& j, MeanStd& m);
void to_json(nlohmann::json& j, const IterationStats& s);
void from_json(const nlohmann::json& j, IterationStats& s);

}  // namespace rewardloop
