#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

namespace rewardloop {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
// Right-hand normal of a travel direction. Positive lateral offsets point
// this way; negative offsets are left of travel.
inline Vec2 right_normal(Vec2 t) { return {t.y, -t.x}; }

// Decomposition of a point against the centerline.
struct TrackProjection {
  double arc_s = 0.0;         // [0, total_length)
  double lateral_norm = 0.0;  // signed offset / half_width, negative = left
  Vec2 tangent{1.0, 0.0};     // unit
  std::size_t segment_index = 0;
};

// Closed-polyline circuit. Immutable after construction.
//
// Self-intersection is not checked; callers supplying waypoints own that.
class TrackSpec {
 public:
  static TrackSpec build(std::vector<Vec2> waypoints, double half_width, double goal_s);

  // 32-waypoint rounded rectangle, about 1600 m around and 12 m wide.
  static TrackSpec default_circuit();

  static TrackSpec from_json(const nlohmann::json& j);
  static TrackSpec load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::span<const Vec2> waypoints() const { return waypoints_; }
  std::size_t segment_count() const { return waypoints_.size(); }
  double half_width() const { return half_width_; }
  double total_length() const { return total_length_; }
  double goal_s() const { return goal_s_; }
  // Arc length at the start of segment i (waypoint i).
  double segment_start(std::size_t i) const { return cumulative_[i]; }
  double segment_length(std::size_t i) const { return cumulative_[i + 1] - cumulative_[i]; }

  // Maps any arc position into [0, total_length).
  double wrap(double s) const;
  // Shortest signed arc distance from a to b, in (-L/2, L/2].
  double signed_delta(double from_s, double to_s) const;

  Vec2 point_at(double s) const;
  Vec2 tangent_at(double s) const;
  std::size_t segment_at(double s) const;

  TrackProjection project(Vec2 p) const;
  bool crossed_goal(double prev_s, double new_s, bool direction_forward) const;
  double curvature_at(double s) const;

 private:
  TrackSpec() = default;

  std::vector<Vec2> waypoints_;
  std::vector<Vec2> directions_;    // unit direction of each segment
  std::vector<double> cumulative_;  // size n + 1, cumulative_[n] = total
  double half_width_ = 0.0;
  double total_length_ = 0.0;
  double goal_s_ = 0.0;
};

}  // namespace rewardloop
