#include <doctest.h>

#include <cmath>

#include "rewardloop/env.hpp"
#include "rewardloop/error.hpp"
#include "rewardloop/rng.hpp"

using namespace rewardloop;

namespace {

EnvConfig no_jitter() {
  EnvConfig c;
  c.start_lateral_jitter = 0.0;
  c.start_heading_jitter_deg = 0.0;
  return c;
}

Action full_throttle(const Observation&) { return {1.0, 0.0}; }

// Deterministic pseudo-random driver: the action depends only on the
// observation, so the trajectory does not depend on the reward weights.
Action wobbly(const Observation& o) {
  return {0.6 + 0.4 * std::sin(7.0 * o[2] + 3.0 * o[0]), -1.5 * o[2] - 2.0 * o[3] + 0.3 * std::sin(11.0 * o[0])};
}

}  // namespace

TEST_SUITE("env") {
  TEST_CASE("reset is deterministic and jitter is bounded") {
    const TrackSpec t = TrackSpec::default_circuit();
    const CarState a = reset(t, 0);
    const CarState b = reset(t, 0);
    CHECK(a.position == b.position);
    CHECK(a.heading == b.heading);
    CHECK(a.speed == 0.0);
    CHECK(a.step_count == 0);
    double mean = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const CarState c = reset(t, s);
      CHECK(std::abs(c.proj.lateral_norm) <= 0.1 + 1e-12);
      CHECK(t.signed_delta(t.goal_s(), c.proj.arc_s) == doctest::Approx(10.0).epsilon(1e-3));
      mean += c.proj.lateral_norm / 100.0;
    }
    CHECK(std::abs(mean) < 0.02);
    CHECK(reset(t, 1).position != reset(t, 2).position);
  }

  TEST_CASE("rest stays at rest") {
    const TrackSpec t = TrackSpec::default_circuit();
    const CarState s = reset(t, 3);
    const StepResult r = step(s, {0.0, 0.0}, t, {}, EnvConfig{});
    CHECK(r.state.position == s.position);
    CHECK(r.state.speed == 0.0);
    CHECK_FALSE(r.events.terminal());
    CHECK(r.state.step_count == 1);
  }

  TEST_CASE("one full-throttle step from rest") {
    const TrackSpec t = TrackSpec::default_circuit();
    const StepResult r = step(reset(t, 0, no_jitter()), {1.0, 0.0}, t, {}, no_jitter());
    CHECK(r.state.speed == doctest::Approx(0.4).epsilon(1e-15));
  }

  TEST_CASE("straight-line motion matches an independent integrator") {
    const TrackSpec t = TrackSpec::default_circuit();
    const EnvConfig cfg = no_jitter();
    CarState s = reset(t, 0, cfg);
    const double s0 = s.proj.arc_s;
    double v = 0.0, x = 0.0;
    for (int k = 0; k < 100; ++k) {
      s = step(s, {1.0, 0.0}, t, {}, cfg).state;
      v = std::min(v + 8.0 * 0.05, 40.0);
      x += v * 0.05;
    }
    CHECK(x == doctest::Approx(101.0).epsilon(1e-9));
    CHECK(s.progress == doctest::Approx(x).epsilon(1e-9));
    CHECK(t.signed_delta(s0, s.proj.arc_s) == doctest::Approx(x).epsilon(1e-9));
    CHECK(s.speed == doctest::Approx(40.0));
  }

  TEST_CASE("throttle and steer are clamped, speed stays in range") {
    const TrackSpec t = TrackSpec::default_circuit();
    EnvConfig cfg;
    cfg.max_steps = 400;
    Rng rng(8);
    for (std::uint64_t ep = 0; ep < 20; ++ep) {
      CarState s = reset(t, ep, cfg);
      while (!is_terminal(s, cfg)) {
        const Action a{rng.uniform(-3, 3), rng.uniform(-3, 3)};
        s = step(s, a, t, {}, cfg).state;
        CHECK(s.speed >= -5.0);
        CHECK(s.speed <= 40.0);
      }
    }
    const StepResult big = step(reset(t, 0, no_jitter()), {7.0, 0.0}, t, {}, no_jitter());
    CHECK(big.state.speed == doctest::Approx(0.4));
  }

  TEST_CASE("stepping a terminal state throws") {
    const TrackSpec t = TrackSpec::default_circuit();
    EnvConfig cfg;
    cfg.max_steps = 1;
    const CarState s = step(reset(t, 0, cfg), {}, t, {}, cfg).state;
    CHECK(is_terminal(s, cfg));
    CHECK_THROWS_AS(step(s, {}, t, {}, cfg), ConfigError);
  }

  TEST_CASE("observation invariants") {
    const TrackSpec t = TrackSpec::default_circuit();
    const EnvConfig cfg;
    CarState s = reset(t, 4, cfg);
    int n = 0;
    while (!is_terminal(s, cfg) && n < 1500) {
      const Observation o = observe(s, t, cfg);
      CHECK(o.size() == 11);
      for (double v : o) CHECK(std::isfinite(v));
      CHECK(o[3] * o[3] + o[4] * o[4] == doctest::Approx(1.0).epsilon(1e-6));
      for (int k = 5; k < 9; ++k) {
        CHECK(o[k] >= -1.0);
        CHECK(o[k] <= 1.0);
      }
      s = step(s, wobbly(o), t, {}, cfg).state;
      ++n;
    }
  }

  TEST_CASE("outcome classification rules") {
    // Off-road at step 500.
    CHECK(classify_outcome({0, 1, 500, 2000, false, true}) == Outcome::OffRoad);
    // Budget exhausted without a lap or an off-road event.
    CHECK(classify_outcome({0, 0, 2000, 2000, false, true}) == Outcome::Timeout);
    // Lap finished at step 850.
    CHECK(classify_outcome({0, 0, 850, 2000, true, true}) == Outcome::Successful);
    // Off-road on the final allowed step wins over the timeout.
    CHECK(classify_outcome({0, 1, 2000, 2000, false, true}) == Outcome::OffRoad);
    // A lap on the final step is still a timeout.
    CHECK(classify_outcome({0, 0, 2000, 2000, true, true}) == Outcome::Timeout);
    CHECK_THROWS_AS(classify_outcome({0, 0, 10, 2000, false, false}), ConfigError);
  }

  TEST_CASE("full throttle straight ahead leaves the road at the first corner") {
    const TrackSpec t = TrackSpec::default_circuit();
    const EpisodeRecord r = run_episode(full_throttle, t, {}, EnvConfig{}, 0);
    CHECK(r.outcome == Outcome::OffRoad);
    CHECK(r.step_count < 2000);

    // Precedence in the real environment: same episode with the budget ending
    // on the off-road step.
    EnvConfig tight;
    tight.max_steps = r.step_count;
    const EpisodeRecord p = run_episode(full_throttle, t, {}, tight, 0);
    CHECK(p.step_count == tight.max_steps);
    CHECK(p.outcome == Outcome::OffRoad);
  }

  TEST_CASE("zero action times out at rest") {
    const TrackSpec t = TrackSpec::default_circuit();
    const EpisodeRecord r = run_episode([](const Observation&) { return Action{}; }, t, {1, -1, 0, 1}, EnvConfig{}, 5);
    CHECK(r.outcome == Outcome::Timeout);
    CHECK(r.step_count == 2000);
    CHECK(r.avg_speed_kmh == doctest::Approx(0.0));
  }

  TEST_CASE("episodes are deterministic and end on exactly one terminal step") {
    const TrackSpec t = TrackSpec::default_circuit();
    const EnvConfig cfg;
    const RewardWeights w{1, -10, -0.5, 1};
    const EpisodeRecord a = run_episode(wobbly, t, w, cfg, 17, true);
    const EpisodeRecord b = run_episode(wobbly, t, w, cfg, 17, true);
    CHECK(a.outcome == b.outcome);
    CHECK(a.step_count == b.step_count);
    CHECK(a.cumulative_reward == b.cumulative_reward);
    CHECK(a.avg_speed_kmh == b.avg_speed_kmh);
    CHECK(a.telemetry->position == b.telemetry->position);

    CarState s = reset(t, 17, cfg);
    int terminal_steps = 0;
    while (!is_terminal(s, cfg)) {
      const StepResult r = step(s, wobbly(observe(s, t, cfg)), t, w, cfg);
      terminal_steps += r.events.terminal() ? 1 : 0;
      s = r.state;
    }
    CHECK(terminal_steps == 1);
    CHECK(s.step_count == a.step_count);
  }

  TEST_CASE("cumulative reward decomposes into weighted feature sums") {
    const TrackSpec t = TrackSpec::default_circuit();
    const EnvConfig cfg;
    for (const RewardWeights w : {RewardWeights{1, -50, 0, 1}, RewardWeights{0.3, 2, -0.5, -1.5},
                                  RewardWeights{-1, -1, 0.7, 0.2}}) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        const EpisodeRecord r = run_episode(wobbly, t, w, cfg, seed);
        const auto& f = r.feature_sums;
        const double dot = w.speed * f.speed + w.offroad * f.offroad + f.lateral + w.stay * f.stay;
        CHECK(r.cumulative_reward == doctest::Approx(dot).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("cumulative reward is affine in the speed, off-road and stay coefficients") {
    const TrackSpec t = TrackSpec::default_circuit();
    const EnvConfig cfg;
    const RewardWeights w{1, -10, -0.4, 1};
    for (std::uint64_t seed : {4u, 9u}) {
      const EpisodeRecord base = run_episode(wobbly, t, w, cfg, seed);
      for (int k = 0; k < 3; ++k) {
        RewardWeights scaled = w;
        double* coef = k == 0 ? &scaled.speed : k == 1 ? &scaled.offroad : &scaled.stay;
        const double component = k == 0 ? base.feature_sums.speed
                                 : k == 1 ? base.feature_sums.offroad
                                          : base.feature_sums.stay;
        const double old = *coef;
        *coef = 3.5 * old;
        const EpisodeRecord r = run_episode(wobbly, t, scaled, cfg, seed);
        CHECK(r.step_count == base.step_count);
        CHECK(r.cumulative_reward - base.cumulative_reward ==
              doctest::Approx(2.5 * old * component).epsilon(1e-9).scale(1.0));
      }
    }
  }

  TEST_CASE("config json rejects unknown keys") {
    EnvConfig c;
    CHECK_THROWS_AS(from_json(nlohmann::json{{"dtt", 0.1}}, c), ConfigError);
    from_json(nlohmann::json{{"max_steps", 500}}, c);
    CHECK(c.max_steps == 500);
    CHECK(c.dt == 0.05);
  }
}
