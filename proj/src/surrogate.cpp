#include "rewardloop/surrogate.hpp"

#include <algorithm>
#include <cmath>

#include "rewardloop/error.hpp"
#include "rewardloop/rng.hpp"

namespace rewardloop {

namespace surrogate {

double success_rate(const RewardWeights& w) {
  const double s = 0.05 + 0.5 * std::tanh(std::abs(w.offroad) / 20.0) + 0.3 * std::tanh(std::max(w.stay, 0.0)) -
                   0.2 * std::abs(w.lateral) - 0.1 * std::max(-w.speed, 0.0);
  return std::clamp(s, 0.0, 1.0);
}

double offroad_rate(const RewardWeights& w) { return 0.9 * (1.0 - success_rate(w)); }

double avg_speed_kmh(const RewardWeights& w) {
  return 110.0 + 30.0 * std::tanh(std::max(w.speed, 0.0)) - 10.0 * std::tanh(std::abs(w.offroad) / 50.0);
}

double steps_for_speed(double speed_kmh) { return kLapMetres / (speed_kmh / 3.6) / kDt; }

}  // namespace surrogate

std::uint64_t surrogate_replica_seed(std::uint64_t seed, int replica) {
  return replica == 0 ? seed : derive_seed(seed, static_cast<std::uint64_t>(replica));
}

std::vector<SeedStats> surrogate_eval(const RewardWeights& weights, const std::vector<std::uint64_t>& seeds,
                                      int episodes, const SurrogateOptions& opts) {
  if (episodes <= 0) throw ConfigError("surrogate_eval: episodes must be positive");
  if (seeds.empty()) throw ConfigError("surrogate_eval: no seeds");
  const double base_success = surrogate::success_rate(weights);
  const double base_offroad = surrogate::offroad_rate(weights);
  const double speed = surrogate::avg_speed_kmh(weights);

  std::vector<SeedStats> out;
  for (const auto seed : seeds) {
    double s = base_success;
    double o = base_offroad;
    if (opts.jitter) {
      Rng rng(seed);
      s += rng.normal() * surrogate::kJitterPct / 100.0;
      o += rng.normal() * surrogate::kJitterPct / 100.0;
    }
    s = std::clamp(s, 0.0, 1.0);
    o = std::clamp(o, 0.0, 1.0 - s);

    SeedStats st;
    st.seed = seed;
    st.episodes = episodes;
    st.successful = static_cast<int>(std::lround(s * episodes));
    st.off_road = std::min(static_cast<int>(std::lround(o * episodes)), episodes - st.successful);
    st.timeout = episodes - st.successful - st.off_road;
    if (st.successful > 0) {
      st.avg_speed_success = speed;
      st.avg_steps_success = surrogate::steps_for_speed(speed);
    }
    if (st.off_road > 0) st.avg_speed_offroad = surrogate::kOffroadSpeedFactor * speed;
    st.check();
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace rewardloop
