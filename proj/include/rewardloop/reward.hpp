#pragma once

#include <string>
#include <string_view>

#include "rewardloop/track.hpp"

namespace rewardloop {

// Signed coefficients of the four reward components. Any finite value is
// legal, including "wrong" signs (e.g. a positive off-road coefficient).
struct RewardWeights {
  double speed = 0.0;
  double offroad = 0.0;
  double lateral = 0.0;
  double stay = 0.0;

  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

// Component names as they appear in the weight file.
inline constexpr std::string_view kSpeedName = "speedDriveReward";
inline constexpr std::string_view kOffroadName = "offRoadPenalty";
inline constexpr std::string_view kLateralName = "lateralBiasReward";
inline constexpr std::string_view kStayName = "stayOnTrackReward";

// Parses `reward = <num>*<name> + <num>*<name> + ...`. All four components are
// required exactly once, in any order. Throws ConfigError on malformed input.
RewardWeights parse_weight_file(std::string_view text);

// Canonical single line, fixed component order, shortest round-trip decimals
// with at least one fractional digit. parse_weight_file inverts it exactly.
std::string serialize_weight_file(const RewardWeights& w);

// Shortest fixed-notation decimal that round-trips, always with a '.'.
std::string format_weight(double v);

struct RewardConfig {
  double speed_threshold = 6.7;      // m/s, about 22 ft/s
  double v_max = 40.0;               // m/s
  double a_max = 8.0;                // m/s^2
  double dt = 0.05;                  // s
  double offroad_amplifier = 10.0;   // applied on the terminal off-road step
  double stay_lookahead = 5.0;       // m along the centerline
};

// Per-step component values before weighting. `lateral` is the lane-keeping
// shape 1 - |l - b|; its gain |w_lateral| is applied in compose.
struct FeatureSnapshot {
  double speed = 0.0;
  double offroad = 0.0;
  double lateral = 0.0;
  double stay = 0.0;
};

double feature_speed(double speed, double prev_speed, const RewardConfig& cfg);
double feature_offroad(bool off_road_event, const RewardConfig& cfg);

// Lateral target encoded by the coefficient itself: -0.5 is the centre of the
// left lane, +0.5 the right lane.
double lateral_target(double w_lateral);
double lateral_shape(double lateral_norm, double w_lateral);
// Full weighted contribution |w| * (1 - |l - b|).
double feature_lateral(double lateral_norm, double w_lateral);

// Unsigned angle (radians) between the heading and the direction to the
// lookahead point on the target line.
double stay_angle(double heading, Vec2 position, double arc_s, const TrackSpec& track,
                  double target_lateral, const RewardConfig& cfg);
// Graded schedule on that angle: 1.0 / 0.5 / 0.0 / -0.25.
double stay_schedule(double angle_rad);
double feature_stay(double heading, Vec2 position, double arc_s, const TrackSpec& track,
                    double target_lateral, const RewardConfig& cfg);

// Everything needed to evaluate the features of one transition.
struct StepSample {
  double speed = 0.0;
  double prev_speed = 0.0;
  bool off_road = false;
  double lateral_norm = 0.0;
  double arc_s = 0.0;
  double heading = 0.0;
  Vec2 position;
};

FeatureSnapshot compute_features(const RewardWeights& w, const StepSample& s,
                                 const TrackSpec& track, const RewardConfig& cfg);

// r = w_speed*f_speed + w_offroad*f_offroad + |w_lateral|*f_lateral + w_stay*f_stay.
// Throws TrainingError if the result is not finite.
double compose(const RewardWeights& w, const FeatureSnapshot& f);

}  // namespace rewardloop
