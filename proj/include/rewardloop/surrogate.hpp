#pragma once

#include <cstdint>
#include <vector>

#include "rewardloop/eval.hpp"
#include "rewardloop/reward.hpp"

namespace rewardloop {

// Closed-form stand-in for train+evaluate, used to exercise the loop quickly.
namespace surrogate {

inline constexpr double kLapMetres = 1600.0;
inline constexpr double kDt = 0.05;
inline constexpr double kJitterPct = 2.0;
inline constexpr double kOffroadSpeedFactor = 0.8;

double success_rate(const RewardWeights& w);    // proportion in [0, 1]
double offroad_rate(const RewardWeights& w);    // 0.9 * (1 - success)
double avg_speed_kmh(const RewardWeights& w);
double steps_for_speed(double speed_kmh);       // lap length / speed / dt

}  // namespace surrogate

struct SurrogateOptions {
  bool jitter = true;
};

// Jitter seed of training replica r for evaluation seed s; replica 0 uses s.
std::uint64_t surrogate_replica_seed(std::uint64_t seed, int replica);

// Per seed: success and off-road rates jittered by N(0, 2 pp) from
// Rng(seed), clamped, rounded to counts of `episodes` (timeouts take the
// rest). Speeds and steps come from the formulas; off-road episodes are
// scored at 0.8x the success speed. Deterministic per seed.
std::vector<SeedStats> surrogate_eval(const RewardWeights& weights, const std::vector<std::uint64_t>& seeds,
                                      int episodes, const SurrogateOptions& opts = {});

}  // namespace rewardloop
