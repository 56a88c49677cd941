#include "rewardloop/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rewardloop/error.hpp"
#include "rewardloop/rng.hpp"

namespace rewardloop {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr std::array<double, 4> kCurvatureLookahead{5.0, 15.0, 30.0, 60.0};
constexpr double kCurvatureScale = 25.0;

}  // namespace

RewardConfig EnvConfig::reward_config() const {
  return {.speed_threshold = speed_threshold,
          .v_max = v_max,
          .a_max = a_max,
          .dt = dt,
          .offroad_amplifier = offroad_amplifier,
          .stay_lookahead = stay_lookahead};
}

void EnvConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("env config: ") + name + " must be positive");
  };
  positive(dt, "dt");
  positive(a_max, "a_max");
  positive(v_max, "v_max");
  positive(wheelbase, "wheelbase");
  positive(max_steer_deg, "max_steer_deg");
  positive(stay_lookahead, "stay_lookahead");
  if (max_steps < 1) throw ConfigError("env config: max_steps must be >= 1");
  if (!(v_rev_max >= 0.0)) throw ConfigError("env config: v_rev_max must be >= 0");
  if (!(speed_threshold < v_max)) throw ConfigError("env config: speed_threshold must be below v_max");
  if (!(start_lateral_jitter >= 0.0) || !(start_heading_jitter_deg >= 0.0)) {
    throw ConfigError("env config: start jitter must be >= 0");
  }
}

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = {{"dt", c.dt},
       {"max_steps", c.max_steps},
       {"a_max", c.a_max},
       {"v_max", c.v_max},
       {"v_rev_max", c.v_rev_max},
       {"wheelbase", c.wheelbase},
       {"max_steer_deg", c.max_steer_deg},
       {"start_offset", c.start_offset},
       {"start_lateral_jitter", c.start_lateral_jitter},
       {"start_heading_jitter_deg", c.start_heading_jitter_deg},
       {"speed_threshold", c.speed_threshold},
       {"offroad_amplifier", c.offroad_amplifier},
       {"stay_lookahead", c.stay_lookahead}};
}

void from_json(const nlohmann::json& j, EnvConfig& c) {
  nlohmann::json defaults;
  to_json(defaults, c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("env config: unknown key '" + key + "'");
    if (!value.is_number()) throw ConfigError("env config: '" + key + "' must be a number");
  }
  c.dt = j.value("dt", c.dt);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.a_max = j.value("a_max", c.a_max);
  c.v_max = j.value("v_max", c.v_max);
  c.v_rev_max = j.value("v_rev_max", c.v_rev_max);
  c.wheelbase = j.value("wheelbase", c.wheelbase);
  c.max_steer_deg = j.value("max_steer_deg", c.max_steer_deg);
  c.start_offset = j.value("start_offset", c.start_offset);
  c.start_lateral_jitter = j.value("start_lateral_jitter", c.start_lateral_jitter);
  c.start_heading_jitter_deg = j.value("start_heading_jitter_deg", c.start_heading_jitter_deg);
  c.speed_threshold = j.value("speed_threshold", c.speed_threshold);
  c.offroad_amplifier = j.value("offroad_amplifier", c.offroad_amplifier);
  c.stay_lookahead = j.value("stay_lookahead", c.stay_lookahead);
}

bool is_terminal(const CarState& s, const EnvConfig& cfg) {
  return s.off_road_count > 0 || s.lap_done || s.step_count >= cfg.max_steps;
}

CarState reset(const TrackSpec& track, std::uint64_t seed, const EnvConfig& cfg) {
  Rng rng(seed);
  const double lateral = rng.uniform(-cfg.start_lateral_jitter, cfg.start_lateral_jitter);
  const double jitter = rng.uniform(-cfg.start_heading_jitter_deg, cfg.start_heading_jitter_deg) * kDegToRad;

  const double s0 = track.wrap(track.goal_s() + cfg.start_offset);
  const Vec2 tangent = track.tangent_at(s0);

  CarState st;
  st.position = track.point_at(s0) + (lateral * track.half_width()) * right_normal(tangent);
  st.heading = std::atan2(tangent.y, tangent.x) + jitter;
  st.proj = track.project(st.position);
  return st;
}

StepResult step(const CarState& state, Action action, const TrackSpec& track,
                const RewardWeights& weights, const EnvConfig& cfg) {
  if (is_terminal(state, cfg)) throw ConfigError("step called on a terminal state");
  const double throttle = std::clamp(action.throttle, -1.0, 1.0);
  const double steer = std::clamp(action.steer, -1.0, 1.0);

  StepResult out;
  CarState& s = out.state;
  s = state;
  s.prev_speed = state.speed;
  s.speed = std::clamp(state.speed + cfg.a_max * throttle * cfg.dt, -cfg.v_rev_max, cfg.v_max);
  s.heading = state.heading +
              (s.speed / cfg.wheelbase) * std::tan(steer * cfg.max_steer_deg * kDegToRad) * cfg.dt;
  s.position = state.position + (s.speed * cfg.dt) * Vec2{std::cos(s.heading), std::sin(s.heading)};
  s.step_count = state.step_count + 1;
  s.proj = track.project(s.position);

  const double delta = track.signed_delta(state.proj.arc_s, s.proj.arc_s);
  s.progress = state.progress + delta;

  StepEvents& ev = out.events;
  ev.off_road = std::abs(s.proj.lateral_norm) > 1.0;
  if (ev.off_road) s.off_road_count += 1;
  // A lap needs the goal crossed forwards after most of the circuit has been
  // covered, so backing over the line and driving through it does not count.
  ev.lap_done = delta > 0.0 && s.progress > 0.5 * track.total_length() &&
                track.crossed_goal(state.proj.arc_s, s.proj.arc_s, true);
  s.lap_done = ev.lap_done;
  ev.timed_out = s.step_count >= cfg.max_steps;

  const StepSample sample{.speed = s.speed,
                          .prev_speed = s.prev_speed,
                          .off_road = ev.off_road,
                          .lateral_norm = s.proj.lateral_norm,
                          .arc_s = s.proj.arc_s,
                          .heading = s.heading,
                          .position = s.position};
  out.features = compute_features(weights, sample, track, cfg.reward_config());
  out.reward = compose(weights, out.features);
  return out;
}

Observation observe(const CarState& s, const TrackSpec& track, const EnvConfig& cfg) {
  Observation o{};
  const Vec2 fwd{std::cos(s.heading), std::sin(s.heading)};
  const Vec2 t = s.proj.tangent;
  o[0] = s.speed / cfg.v_max;
  o[1] = std::clamp((s.speed - s.prev_speed) / (cfg.a_max * cfg.dt), -1.0, 1.0);
  o[2] = s.proj.lateral_norm;
  // Heading error relative to the track tangent; sin positive = pointing left.
  const double err = std::atan2(cross(t, fwd), dot(t, fwd));
  o[3] = std::sin(err);
  o[4] = std::cos(err);
  for (std::size_t k = 0; k < kCurvatureLookahead.size(); ++k) {
    o[5 + k] = std::clamp(track.curvature_at(s.proj.arc_s + kCurvatureLookahead[k]) * kCurvatureScale, -1.0, 1.0);
  }
  o[9] = 1.0 + s.proj.lateral_norm;   // distance to left edge / half_width
  o[10] = 1.0 - s.proj.lateral_norm;  // distance to right edge / half_width
  return o;
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Successful: return "Successful";
    case Outcome::OffRoad: return "OffRoad";
    case Outcome::Timeout: return "Timeout";
  }
  return "?";
}

Outcome outcome_from_string(std::string_view s) {
  if (s == "Successful") return Outcome::Successful;
  if (s == "OffRoad") return Outcome::OffRoad;
  if (s == "Timeout") return Outcome::Timeout;
  throw ConfigError("unknown outcome '" + std::string(s) + "'");
}

Outcome classify_outcome(const EpisodeTrace& trace) {
  if (!trace.terminated) throw ConfigError("cannot classify an episode that has not terminated");
  if (trace.off_road_count_end > trace.off_road_count_start) return Outcome::OffRoad;
  if (trace.step_count >= trace.max_steps) return Outcome::Timeout;
  if (trace.lap_done) return Outcome::Successful;
  throw ConfigError("terminated episode has no terminal event");
}

EpisodeRecord run_episode(const PolicyFn& policy, const TrackSpec& track,
                          const RewardWeights& weights, const EnvConfig& cfg,
                          std::uint64_t seed, bool record_telemetry) {
  EpisodeRecord rec;
  rec.seed = seed;
  if (record_telemetry) rec.telemetry.emplace();

  CarState s = reset(track, seed, cfg);
  double speed_sum = 0.0;
  while (!is_terminal(s, cfg)) {
    const Action a = policy(observe(s, track, cfg));
    StepResult r = step(s, a, track, weights, cfg);
    s = r.state;
    speed_sum += std::abs(s.speed) * 3.6;
    rec.cumulative_reward += r.reward;
    rec.feature_sums.speed += r.features.speed;
    rec.feature_sums.offroad += r.features.offroad;
    rec.feature_sums.lateral += std::abs(weights.lateral) * r.features.lateral;
    rec.feature_sums.stay += r.features.stay;
    if (rec.telemetry) {
      rec.telemetry->step.push_back(s.step_count);
      rec.telemetry->position.push_back(s.position);
      rec.telemetry->speed_kmh.push_back(s.speed * 3.6);
      rec.telemetry->lateral_norm.push_back(s.proj.lateral_norm);
      rec.telemetry->reward.push_back(r.reward);
    }
  }
  rec.step_count = s.step_count;
  rec.avg_speed_kmh = s.step_count > 0 ? speed_sum / s.step_count : 0.0;
  rec.outcome = classify_outcome({.off_road_count_start = 0,
                                  .off_road_count_end = s.off_road_count,
                                  .step_count = s.step_count,
                                  .max_steps = cfg.max_steps,
                                  .lap_done = s.lap_done,
                                  .terminated = true});
  return rec;
}

}  // namespace rewardloop
