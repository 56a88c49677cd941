#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rewardloop/error.hpp"
#include "rewardloop/eval.hpp"
#include "rewardloop/rng.hpp"

using namespace rewardloop;

namespace {

// Wilson score interval written out directly.
std::pair<double, double> wilson_oracle(double k, double n) {
  const double z = 1.959964, p = k / n;
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2 * n)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
  return {centre - half, centre + half};
}

// Offsets in percentage points, rounded to one decimal as printed.
double round1(double pp) { return std::round(pp * 10.0) / 10.0; }

SeedStats counts(std::uint64_t seed, int episodes, int successful, int off_road) {
  SeedStats s;
  s.seed = seed;
  s.episodes = episodes;
  s.successful = successful;
  s.off_road = off_road;
  s.timeout = episodes - successful - off_road;
  if (successful > 0) {
    s.avg_speed_success = 120.0;
    s.avg_steps_success = 850.0;
  }
  if (off_road > 0) s.avg_speed_offroad = 90.0;
  return s;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("wilson interval reproduces the published table cells") {
    struct Case {
      int k, n;
      double plus, minus;
    };
    for (const Case c : {Case{201, 250, 4.4, 5.4}, Case{0, 250, 1.5, 0.0}, Case{234, 250, 2.4, 3.7}}) {
      CAPTURE(c.k);
      const auto [lo, hi] = wilson_interval(c.k, c.n);
      const double p = static_cast<double>(c.k) / c.n;
      CHECK(std::abs((hi - p) * 100.0 - c.plus) <= 0.05);
      CHECK(std::abs((p - lo) * 100.0 - c.minus) <= 0.05);
      CHECK(round1((hi - p) * 100.0) == doctest::Approx(c.plus));
      CHECK(round1((p - lo) * 100.0) == doctest::Approx(c.minus));
    }
    CHECK(201.0 / 250.0 * 100.0 == doctest::Approx(80.4));
  }

  TEST_CASE("wilson interval matches the closed form and stays in [0, 1]") {
    Rng rng(5);
    for (int t = 0; t < 2000; ++t) {
      const int n = 1 + static_cast<int>(rng.uniform(0, 500));
      const int k = std::min(n, static_cast<int>(rng.uniform(0, n + 1)));
      const auto [lo, hi] = wilson_interval(k, n);
      const auto [olo, ohi] = wilson_oracle(k, n);
      CHECK(lo == doctest::Approx(olo).epsilon(1e-12));
      CHECK(hi == doctest::Approx(ohi).epsilon(1e-12));
      CHECK(lo >= 0.0);
      CHECK(hi <= 1.0);
      CHECK(lo <= static_cast<double>(k) / n + 1e-15);
      CHECK(hi >= static_cast<double>(k) / n - 1e-15);
    }
  }

  TEST_CASE("wilson interval narrows as n grows at a fixed rate") {
    double prev = 1.0;
    for (int n = 10; n <= 10000; n *= 2) {
      const auto [lo, hi] = wilson_interval(3 * n / 10, n);
      CHECK(hi - lo < prev);
      prev = hi - lo;
    }
    CHECK_THROWS_AS(wilson_interval(0, 0), ConfigError);
    CHECK_THROWS_AS(wilson_interval(5, 4), ConfigError);
    CHECK_THROWS_AS(wilson_interval(-1, 4), ConfigError);
  }

  TEST_CASE("mean and sample standard deviation") {
    const MeanStd m = mean_std({46, 48, 50, 44, 46});
    CHECK(m.mean == doctest::Approx(46.8));
    CHECK(m.std == doctest::Approx(std::sqrt(20.8 / 4.0)));
    CHECK(m.n == 5);
    CHECK(mean_std({3.5}).std == 0.0);
    CHECK(mean_std({0.1, 0.1, 0.1, 0.1}).std == 0.0);
    CHECK_THROWS_AS(mean_std({}), ConfigError);
  }

  TEST_CASE("aggregate pools counts and is order independent") {
    std::vector<SeedStats> seeds = {counts(1, 50, 50, 0), counts(2, 50, 50, 0), counts(3, 50, 49, 1),
                                    counts(4, 50, 49, 1), counts(5, 50, 36, 14)};
    const IterationStats a = aggregate(seeds);
    CHECK(a.seeds == 5);
    CHECK(a.pooled_n == 250);
    CHECK(a.pooled_successful == 234);
    CHECK(a.pooled_off_road == 16);
    CHECK(a.pooled_timeout == 0);
    CHECK(a.successful.mean == doctest::Approx(46.8));
    const auto [lo, hi] = wilson_interval(234, 250);
    CHECK(a.wilson_lo == lo);
    CHECK(a.wilson_hi == hi);

    std::reverse(seeds.begin(), seeds.end());
    const IterationStats b = aggregate(seeds);
    CHECK(b.pooled_successful == a.pooled_successful);
    CHECK(b.successful.mean == doctest::Approx(a.successful.mean).epsilon(1e-14));
    CHECK(b.success_rate.std == doctest::Approx(a.success_rate.std).epsilon(1e-14));
    CHECK(render_stats_block(b) == render_stats_block(a));
    CHECK_THROWS_AS(aggregate({}), ConfigError);
  }

  TEST_CASE("stats block for the final published iteration") {
    std::vector<SeedStats> seeds = {counts(1, 50, 50, 0), counts(2, 50, 50, 0), counts(3, 50, 49, 1),
                                    counts(4, 50, 49, 1), counts(5, 50, 36, 14)};
    const std::string block = render_stats_block(aggregate(seeds));
    CHECK(contains(block, "- Total Episodes: 50.00\n"));
    CHECK(contains(block, "- Successful Episodes: 46.80 ± 6.06\n"));
    CHECK(contains(block, "- Success Rate (%): 93.60 ± 12.12\n"));
    CHECK(contains(block, "- Off Road Episodes: 3.20 ± 6.06\n"));
    CHECK(contains(block, "- Off Road Rate (%): 6.40 ± 12.12\n"));
    CHECK(contains(block, "- Timeout Episodes: 0.00 ± 0.00\n"));
    CHECK(contains(block, "- Timeout Rate (%): 0.00 ± 0.00\n"));
    CHECK(block.back() == '\n');
  }

  TEST_CASE("stats block for the first published iteration") {
    // Off-road counts 0, 1, 3, 4, 7 out of 50 per seed, no successes.
    std::vector<SeedStats> seeds = {counts(1, 50, 0, 0), counts(2, 50, 0, 1), counts(3, 50, 0, 3),
                                    counts(4, 50, 0, 4), counts(5, 50, 0, 7)};
    const IterationStats st = aggregate(seeds);
    const std::string block = render_stats_block(st);
    CHECK(contains(block, "- Successful Episodes: 0.00 ± 0.00\n"));
    CHECK(contains(block, "- Success Rate (%): 0.00 ± 0.00\n"));
    CHECK(contains(block, "- Off Road Episodes: 3.00 ± 2.74\n"));
    CHECK(contains(block, "- Off Road Rate (%): 6.00 ± 5.48\n"));
    CHECK(contains(block, "- Timeout Episodes: 47.00 ± 2.74\n"));
    CHECK(contains(block, "- Timeout Rate (%): 94.00 ± 5.48\n"));
    CHECK(contains(block, "- Avg Speed Off Road (km/h): 90.00 ± 0.00\n"));
    CHECK_FALSE(contains(block, "Avg Speed Success"));
    CHECK_FALSE(contains(block, "Avg Steps Success"));
    // Averaged over the four seeds that had an off-road episode.
    REQUIRE(st.avg_speed_offroad.has_value());
    CHECK(st.avg_speed_offroad->n == 4);
  }

  TEST_CASE("all-timeout block and rounding") {
    const std::string block = render_stats_block(aggregate({counts(1, 10, 0, 0), counts(2, 10, 0, 0)}));
    CHECK(contains(block, "- Timeout Rate (%): 100.00 ± 0.00\n"));
    CHECK_FALSE(contains(block, "Avg Steps"));
    CHECK_FALSE(contains(block, "-0.00"));

    const std::string third = render_stats_block(aggregate({counts(1, 3, 1, 1)}));
    CHECK(contains(third, "- Success Rate (%): 33.33 ± 0.00\n"));
  }

  TEST_CASE("seed stats tally outcomes") {
    const SeedStats s = SeedStats::from_results(
        9, {{Outcome::Successful, 800, 120.0, 1.0}, {Outcome::Successful, 900, 100.0, 1.0},
            {Outcome::OffRoad, 100, 50.0, -5.0}, {Outcome::Timeout, 2000, 1.0, 0.0}});
    CHECK(s.episodes == 4);
    CHECK(s.successful == 2);
    CHECK(s.off_road == 1);
    CHECK(s.timeout == 1);
    CHECK(*s.avg_speed_success == doctest::Approx(110.0));
    CHECK(*s.avg_steps_success == doctest::Approx(850.0));
    CHECK(*s.avg_speed_offroad == doctest::Approx(50.0));
    CHECK_THROWS_AS(SeedStats::from_results(1, {}), ConfigError);
    SeedStats bad = counts(1, 10, 5, 5);
    bad.timeout = 1;
    CHECK_THROWS_AS(bad.check(), ConfigError);
  }

  TEST_CASE("json round trip") {
    SeedStats s = counts(3, 20, 10, 4);
    s.avg_speed_success = 130.5;
    s.avg_steps_success = 900.25;
    const IterationStats st = aggregate({s, counts(4, 20, 2, 18)});
    nlohmann::json j = st;
    const IterationStats back = j.get<IterationStats>();
    CHECK(nlohmann::json(back) == j);
    nlohmann::json js = s;
    CHECK(nlohmann::json(js.get<SeedStats>()) == js);
  }

  TEST_CASE("evaluate_policy") {
    const TrackSpec t = TrackSpec::default_circuit();
    EnvConfig cfg;
    cfg.max_steps = 150;
    const RewardWeights w{1, -10, 0, 1};
    const PolicyFn idle = [](const Observation&) { return Action{}; };
    const auto idle_stats = evaluate_policy(idle, t, w, cfg, 3, {1, 2});
    REQUIRE(idle_stats.size() == 2);
    for (const auto& s : idle_stats) {
      CHECK(s.timeout == 3);
      CHECK(s.episode_results.size() == 3);
    }

    const PolicyFn steer = [](const Observation& o) { return Action{0.8, -1.5 * o[2] - 2.0 * o[3]}; };
    const auto a = evaluate_policy(steer, t, w, cfg, 5, {7, 8}, {.threads = 1});
    const auto b = evaluate_policy(steer, t, w, cfg, 5, {7, 8}, {.threads = 3});
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(nlohmann::json(a[i]) == nlohmann::json(b[i]));

    // Episode 3 of seed 7 reruns alone from its derived reset seed.
    const EpisodeRecord r = run_episode(steer, t, w, cfg, derive_seed(7, 3));
    const EpisodeResult& e = a[0].episode_results[3];
    CHECK(e.outcome == r.outcome);
    CHECK(e.step_count == r.step_count);
    CHECK(e.cumulative_reward == r.cumulative_reward);
  }
}
