#include "rewardloop/reward.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <optional>

#include "rewardloop/error.hpp"

namespace rewardloop {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view token, std::string_view term) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size() || !std::isfinite(v)) {
    throw ConfigError("malformed number in reward term '" + std::string(term) + "'");
  }
  return v;
}

}  // namespace

RewardWeights parse_weight_file(std::string_view text) {
  std::string_view line = trim(text);
  if (!line.starts_with("reward")) throw ConfigError("weight line must start with 'reward ='");
  line.remove_prefix(6);
  line = trim(line);
  if (line.empty() || line.front() != '=') throw ConfigError("weight line must start with 'reward ='");
  line.remove_prefix(1);
  line = trim(line);

  // Split into terms on '+' or '-' separators that follow a component name.
  std::array<std::optional<double>, 4> slots;
  const std::array<std::string_view, 4> names{kSpeedName, kOffroadName, kLateralName, kStayName};
  std::size_t pos = 0;
  double sign = 1.0;
  while (true) {
    const std::size_t star = line.find('*', pos);
    std::size_t name_end = line.size();
    // The term ends at the next separator after its name.
    const std::size_t search_from = star == std::string_view::npos ? pos : star + 1;
    const std::size_t plus = line.find_first_of("+-", search_from);
    if (plus != std::string_view::npos) name_end = plus;
    const std::string_view term = trim(line.substr(pos, name_end - pos));
    if (term.empty()) throw ConfigError("empty reward term");
    if (star == std::string_view::npos || star >= name_end) {
      throw ConfigError("missing '*' between factor and name in '" + std::string(term) + "'");
    }
    const double value = sign * parse_number(line.substr(pos, star - pos), term);
    const std::string_view name = trim(line.substr(star + 1, name_end - star - 1));
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("unknown reward component '" + std::string(name) + "'");
    auto& slot = slots[static_cast<std::size_t>(it - names.begin())];
    if (slot) throw ConfigError("duplicate reward component '" + std::string(name) + "'");
    slot = value;

    if (plus == std::string_view::npos) break;
    sign = line[plus] == '-' ? -1.0 : 1.0;
    pos = plus + 1;
  }

  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) throw ConfigError("missing reward component '" + std::string(names[i]) + "'");
  }
  return {*slots[0], *slots[1], *slots[2], *slots[3]};
}

std::string format_weight(double v) {
  if (!std::isfinite(v)) throw ConfigError("reward weight must be finite");
  std::array<char, 400> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed);
  if (ec != std::errc{}) throw ConfigError("cannot format reward weight");
  std::string s(buf.data(), ptr);
  if (s.find('.') == std::string::npos) s += ".0";
  return s;
}

std::string serialize_weight_file(const RewardWeights& w) {
  std::string out = "reward = ";
  out += format_weight(w.speed) + "*" + std::string(kSpeedName) + " + ";
  out += format_weight(w.offroad) + "*" + std::string(kOffroadName) + " + ";
  out += format_weight(w.lateral) + "*" + std::string(kLateralName) + " + ";
  out += format_weight(w.stay) + "*" + std::string(kStayName);
  return out;
}

double feature_speed(double speed, double prev_speed, const RewardConfig& cfg) {
  const double level = std::clamp((speed - cfg.speed_threshold) / (cfg.v_max - cfg.speed_threshold), -1.0, 1.0);
  const double accel = std::clamp((speed - prev_speed) / (cfg.a_max * cfg.dt), -1.0, 1.0);
  return level + 0.25 * accel;
}

double feature_offroad(bool off_road_event, const RewardConfig& cfg) {
  return off_road_event ? cfg.offroad_amplifier : 0.0;
}

double lateral_target(double w_lateral) { return std::clamp(w_lateral, -1.0, 1.0); }

double lateral_shape(double lateral_norm, double w_lateral) {
  return 1.0 - std::abs(lateral_norm - lateral_target(w_lateral));
}

double feature_lateral(double lateral_norm, double w_lateral) {
  return std::abs(w_lateral) * lateral_shape(lateral_norm, w_lateral);
}

double stay_angle(double heading, Vec2 position, double arc_s, const TrackSpec& track,
                  double target_lateral, const RewardConfig& cfg) {
  const double ahead = arc_s + cfg.stay_lookahead;
  const Vec2 target = track.point_at(ahead) +
                      (target_lateral * track.half_width()) * right_normal(track.tangent_at(ahead));
  const Vec2 to_target = target - position;
  const Vec2 forward{std::cos(heading), std::sin(heading)};
  return std::abs(std::atan2(cross(forward, to_target), dot(forward, to_target)));
}

double stay_schedule(double angle_rad) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  if (angle_rad < 10.0 * kDeg) return 1.0;
  if (angle_rad < 30.0 * kDeg) return 0.5;
  if (angle_rad < 60.0 * kDeg) return 0.0;
  return -0.25;
}

double feature_stay(double heading, Vec2 position, double arc_s, const TrackSpec& track,
                    double target_lateral, const RewardConfig& cfg) {
  return stay_schedule(stay_angle(heading, position, arc_s, track, target_lateral, cfg));
}

FeatureSnapshot compute_features(const RewardWeights& w, const StepSample& s,
                                 const TrackSpec& track, const RewardConfig& cfg) {
  const double target = lateral_target(w.lateral);
  return {
      .speed = feature_speed(s.speed, s.prev_speed, cfg),
      .offroad = feature_offroad(s.off_road, cfg),
      .lateral = lateral_shape(s.lateral_norm, w.lateral),
      .stay = feature_stay(s.heading, s.position, s.arc_s, track, target, cfg),
  };
}

double compose(const RewardWeights& w, const FeatureSnapshot& f) {
  const double r = w.speed * f.speed + w.offroad * f.offroad + std::abs(w.lateral) * f.lateral +
                   w.stay * f.stay;
  if (!std::isfinite(r)) throw TrainingError("reward is not finite");
  return r;
}

}  // namespace rewardloop
