#include "rewardloop/track.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "rewardloop/error.hpp"

namespace rewardloop {

TrackSpec TrackSpec::build(std::vector<Vec2> waypoints, double half_width, double goal_s) {
  if (waypoints.size() < 8) {
    throw ConfigError("track needs at least 8 waypoints, got " + std::to_string(waypoints.size()));
  }
  if (!(half_width > 0.0) || !std::isfinite(half_width)) {
    throw ConfigError("track half_width must be positive");
  }
  TrackSpec t;
  const std::size_t n = waypoints.size();
  t.cumulative_.assign(n + 1, 0.0);
  t.directions_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = waypoints[i];
    const Vec2 b = waypoints[(i + 1) % n];
    if (!std::isfinite(a.x) || !std::isfinite(a.y)) {
      throw ConfigError("track waypoint " + std::to_string(i) + " is not finite");
    }
    const double len = norm(b - a);
    if (!(len > 0.0)) {
      throw ConfigError("track segment " + std::to_string(i) + " has zero length");
    }
    t.directions_[i] = (1.0 / len) * (b - a);
    t.cumulative_[i + 1] = t.cumulative_[i] + len;
  }
  t.total_length_ = t.cumulative_[n];
  if (!(goal_s >= 0.0 && goal_s < t.total_length_)) {
    throw ConfigError("track goal_s must lie in [0, total_length)");
  }
  t.waypoints_ = std::move(waypoints);
  t.half_width_ = half_width;
  t.goal_s_ = goal_s;
  return t;
}

TrackSpec TrackSpec::default_circuit() {
  // Straights of 450 m and 160 m joined by 60 m radius corners, each corner
  // sampled at 18 degree steps; two interior points per straight.
  constexpr double kLong = 450.0;
  constexpr double kShort = 160.0;
  constexpr double kRadius = 60.0;
  constexpr double hx = kLong / 2.0;
  constexpr double hy = kShort / 2.0;
  const double y_bottom = -(hy + kRadius);
  const double y_top = hy + kRadius;
  const double x_right = hx + kRadius;
  const double x_left = -(hx + kRadius);

  std::vector<Vec2> pts;
  pts.reserve(32);
  auto corner = [&](Vec2 center, double start_deg) {
    for (int k = 0; k <= 5; ++k) {
      const double a = (start_deg + 18.0 * k) * std::numbers::pi / 180.0;
      pts.push_back({center.x + kRadius * std::cos(a), center.y + kRadius * std::sin(a)});
    }
  };
  pts.push_back({-kLong / 6.0, y_bottom});
  pts.push_back({kLong / 6.0, y_bottom});
  corner({hx, -hy}, -90.0);
  pts.push_back({x_right, -kShort / 6.0});
  pts.push_back({x_right, kShort / 6.0});
  corner({hx, hy}, 0.0);
  pts.push_back({kLong / 6.0, y_top});
  pts.push_back({-kLong / 6.0, y_top});
  corner({-hx, hy}, 90.0);
  pts.push_back({x_left, kShort / 6.0});
  pts.push_back({x_left, -kShort / 6.0});
  corner({-hx, -hy}, 180.0);

  // Goal line at the middle of the bottom straight (x = 0).
  return build(std::move(pts), 6.0, kLong / 6.0);
}

TrackSpec TrackSpec::from_json(const nlohmann::json& j) {
  try {
    std::vector<Vec2> pts;
    for (const auto& w : j.at("waypoints")) {
      if (!w.is_array() || w.size() != 2) throw ConfigError("waypoint must be [x, y]");
      pts.push_back({w[0].get<double>(), w[1].get<double>()});
    }
    return build(std::move(pts), j.at("half_width").get<double>(), j.value("goal_s", 0.0));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed track JSON: ") + e.what());
  }
}

TrackSpec TrackSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open track file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse track file " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json TrackSpec::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const Vec2& p : waypoints_) pts.push_back({p.x, p.y});
  return {{"waypoints", pts}, {"half_width", half_width_}, {"goal_s", goal_s_}};
}

double TrackSpec::wrap(double s) const {
  double w = std::fmod(s, total_length_);
  if (w < 0.0) w += total_length_;
  if (w >= total_length_) w = 0.0;
  return w;
}

double TrackSpec::signed_delta(double from_s, double to_s) const {
  double d = wrap(to_s - from_s);
  if (d > 0.5 * total_length_) d -= total_length_;
  return d;
}

std::size_t TrackSpec::segment_at(double s) const {
  const double w = wrap(s);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), w);
  const auto idx = static_cast<std::size_t>(std::distance(cumulative_.begin(), it)) - 1;
  return std::min(idx, waypoints_.size() - 1);
}

Vec2 TrackSpec::point_at(double s) const {
  const double w = wrap(s);
  const std::size_t i = segment_at(w);
  return waypoints_[i] + (w - cumulative_[i]) * directions_[i];
}

Vec2 TrackSpec::tangent_at(double s) const { return directions_[segment_at(s)]; }

TrackProjection TrackSpec::project(Vec2 p) const {
  const std::size_t n = waypoints_.size();
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  double best_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double len = segment_length(i);
    const Vec2 rel = p - waypoints_[i];
    const double t = std::clamp(dot(rel, directions_[i]), 0.0, len);
    const Vec2 off = rel - t * directions_[i];
    const double d2 = dot(off, off);
    if (d2 < best_d2) {
      best_d2 = d2;
      best_i = i;
      best_t = t;
    }
  }

  const Vec2 dir = directions_[best_i];
  const Vec2 foot = waypoints_[best_i] + best_t * dir;
  const Vec2 off = p - foot;
  const double dist = std::sqrt(best_d2);

  TrackProjection proj;
  proj.segment_index = best_i;
  proj.arc_s = wrap(cumulative_[best_i] + best_t);
  proj.tangent = dir;

  // Outside a junction the nearest point is the vertex itself; there the
  // local tangent is taken perpendicular to the offset so the offset stays
  // along the normal and reconstruction is exact.
  const bool at_vertex = best_t <= 0.0 || best_t >= segment_length(best_i);
  if (at_vertex && dist > 1e-12) {
    const Vec2 u = (1.0 / dist) * off;
    Vec2 t{-u.y, u.x};  // u is the right normal of t
    if (dot(t, dir) < 0.0) t = {u.y, -u.x};
    proj.tangent = t;
  }
  const double side = dot(off, right_normal(proj.tangent));
  proj.lateral_norm = (side >= 0.0 ? dist : -dist) / half_width_;
  return proj;
}

bool TrackSpec::crossed_goal(double prev_s, double new_s, bool direction_forward) const {
  if (!direction_forward) return false;
  const double travelled = wrap(new_s - prev_s);
  const double to_goal = wrap(goal_s_ - prev_s);
  return to_goal > 0.0 && to_goal <= travelled;
}

double TrackSpec::curvature_at(double s) const {
  const double w = wrap(s);
  const std::size_t n = waypoints_.size();
  const std::size_t seg = segment_at(w);
  // Nearest junction: start or end vertex of the containing segment.
  const bool use_end = (w - cumulative_[seg]) > 0.5 * segment_length(seg);
  const std::size_t j = use_end ? (seg + 1) % n : seg;
  const std::size_t prev = (j + n - 1) % n;
  const Vec2 a = directions_[prev];
  const Vec2 b = directions_[j];
  const double turn = std::atan2(cross(a, b), dot(a, b));
  const double span = 0.5 * (segment_length(prev) + segment_length(j));
  return turn / span;
}

}  // namespace rewardloop
