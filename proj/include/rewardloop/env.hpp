#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "rewardloop/reward.hpp"
#include "rewardloop/track.hpp"

namespace rewardloop {

struct EnvConfig {
  double dt = 0.05;               // s
  int max_steps = 2000;
  double a_max = 8.0;             // m/s^2
  double v_max = 40.0;            // m/s
  double v_rev_max = 5.0;         // m/s
  double wheelbase = 2.5;         // m
  double max_steer_deg = 30.0;
  double start_offset = 10.0;     // m after the goal line
  double start_lateral_jitter = 0.1;  // normalized units
  double start_heading_jitter_deg = 3.0;
  double speed_threshold = 6.7;   // m/s, speed reward threshold
  double offroad_amplifier = 10.0;
  double stay_lookahead = 5.0;    // m

  RewardConfig reward_config() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const EnvConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, EnvConfig& c);

struct Action {
  double throttle = 0.0;  // [-1, 1]
  double steer = 0.0;     // [-1, 1], positive turns left
};

inline constexpr std::size_t kObservationSize = 11;
using Observation = std::array<double, kObservationSize>;

struct CarState {
  Vec2 position;
  double heading = 0.0;     // rad
  double speed = 0.0;       // m/s, negative = reverse
  double prev_speed = 0.0;  // speed before the last step
  int step_count = 0;
  int off_road_count = 0;
  bool lap_done = false;
  double progress = 0.0;    // signed arc travelled since reset
  TrackProjection proj;     // projection of `position`
};

struct StepEvents {
  bool off_road = false;
  bool lap_done = false;
  bool timed_out = false;

  bool terminal() const { return off_road || lap_done || timed_out; }
};

struct StepResult {
  CarState state;
  double reward = 0.0;
  StepEvents events;
  FeatureSnapshot features;
};

bool is_terminal(const CarState& s, const EnvConfig& cfg);

CarState reset(const TrackSpec& track, std::uint64_t seed, const EnvConfig& cfg = {});

// Kinematic bicycle update followed by the reward and termination checks.
// Throws ConfigError when called on a terminal state.
StepResult step(const CarState& state, Action action, const TrackSpec& track,
                const RewardWeights& weights, const EnvConfig& cfg);

Observation observe(const CarState& state, const TrackSpec& track, const EnvConfig& cfg);

enum class Outcome { Successful, OffRoad, Timeout };

const char* to_string(Outcome o);
Outcome outcome_from_string(std::string_view s);

// Terminal summary of an episode, the input to outcome classification.
struct EpisodeTrace {
  int off_road_count_start = 0;
  int off_road_count_end = 0;
  int step_count = 0;
  int max_steps = 0;
  bool lap_done = false;
  bool terminated = false;
};

// OffRoad if the off-road counter increased, else Timeout if the step budget
// ran out, else Successful. Throws ConfigError for unterminated traces.
Outcome classify_outcome(const EpisodeTrace& trace);

struct Telemetry {
  std::vector<int> step;
  std::vector<Vec2> position;
  std::vector<double> speed_kmh;
  std::vector<double> lateral_norm;
  std::vector<double> reward;
};

struct EpisodeRecord {
  Outcome outcome = Outcome::Timeout;
  int step_count = 0;
  double avg_speed_kmh = 0.0;
  double cumulative_reward = 0.0;
  std::uint64_t seed = 0;
  // Per-component sums: sum f_speed, sum f_offroad, sum of the weighted
  // lateral contribution, sum f_stay. Cumulative reward is their weighted sum.
  FeatureSnapshot feature_sums;
  std::optional<Telemetry> telemetry;
};

using PolicyFn = std::function<Action(const Observation&)>;

// Runs one episode to termination with a deterministic policy.
EpisodeRecord run_episode(const PolicyFn& policy, const TrackSpec& track,
                          const RewardWeights& weights, const EnvConfig& cfg,
                          std::uint64_t seed, bool record_telemetry = false);

}  // namespace rewardloop
