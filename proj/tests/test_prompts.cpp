#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include "rewardloop/error.hpp"
#include "rewardloop/eval.hpp"
#include "rewardloop/prompts.hpp"
#include "support.hpp"

using namespace rewardloop;
using rewardloop::testing::TempDir;

namespace {

const std::string kPlaceholderLine =
    "reward = 0.1*speedDriveReward + -0.1*offRoadPenalty + 0.1*lateralBiasReward + 0.1*stayOnTrackReward";

HistoryEntry entry(int iteration, RewardWeights w, int successful) {
  SeedStats s;
  s.seed = 1;
  s.episodes = 10;
  s.successful = successful;
  s.off_road = 10 - successful;
  if (successful > 0) {
    s.avg_speed_success = 110.0;
    s.avg_steps_success = 900.0;
  }
  if (s.off_road > 0) s.avg_speed_offroad = 80.0;
  const IterationStats st = aggregate({s});
  return {iteration, w, render_stats_block(st), st};
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

void write(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_SUITE("prompts") {
  TEST_CASE("initial prompt carries the placeholder file and the zero rule") {
    PromptContext ctx;
    const std::string p = render_initial(ctx);
    CHECK(contains(p, kPlaceholderLine));
    CHECK(contains(p, "MUST SET ITS VALUE TO 0"));
    CHECK(contains(p, std::string(kDefaultGoal)));
    CHECK(contains(p, std::string(kDefaultEnvironment)));
    CHECK_FALSE(contains(p, "{{"));
    CHECK_FALSE(contains(p, "%% template-version"));
    CHECK(render_prompt(ctx) == p);
    CHECK(render_initial(ctx) == p);
  }

  TEST_CASE("user goal is injected verbatim") {
    PromptContext ctx;
    ctx.user_goal = "Drive on the left lane at moderate speed.";
    const std::string p = render_initial(ctx);
    CHECK(contains(p, ctx.user_goal));
    CHECK_FALSE(contains(p, std::string(kDefaultGoal)));
  }

  TEST_CASE("feedback prompt with one and two entries") {
    PromptContext ctx;
    ctx.history.push_back(entry(0, {1, -1, 0, 0}, 0));
    const std::string one = render_feedback(ctx);
    CHECK(contains(one, "## Iteration 1\n"));
    CHECK(contains(one, "reward = 1.0*speedDriveReward + -1.0*offRoadPenalty + 0.0*lateralBiasReward + "
                        "0.0*stayOnTrackReward"));
    CHECK(contains(one, ctx.history[0].stats_block));

    ctx.history.push_back(entry(1, {1, -1, 0, 1}, 3));
    const std::string two = render_feedback(ctx);
    CHECK(contains(two, "## Iteration 2\n"));
    CHECK(contains(two, "reward = 1.0*speedDriveReward + -1.0*offRoadPenalty + 0.0*lateralBiasReward + "
                        "1.0*stayOnTrackReward"));
    CHECK(count(two, "reward = ") == 2);
    CHECK(contains(two, "OffRoad if the cumulative off-road counter increased."));
    CHECK(contains(two, "Timeout if the agent didn’t complete the episode within max time steps."));
    CHECK(contains(two, "Successful if a full lap was completed."));
    CHECK(contains(two, "StepCount: Represents the total number of simulation steps in that episode."));
    CHECK(contains(two, "Avg_speed_kmh: The average speed measured in km/h."));
    CHECK(contains(two, "summary across 5 seeds"));
    CHECK_FALSE(contains(two, "{{"));
    CHECK(two.size() > one.size());
    CHECK(render_prompt(ctx) == two);
  }

  TEST_CASE("prompt length grows with history") {
    PromptContext ctx;
    std::size_t prev = render_feedback([&] {
                         PromptContext c;
                         c.history.push_back(entry(0, {1, 0, 0, 0}, 1));
                         return c;
                       }())
                           .size();
    ctx.history.push_back(entry(0, {1, 0, 0, 0}, 1));
    for (int i = 1; i < 6; ++i) {
      ctx.history.push_back(entry(i, {1, -10.0 * i, 0, 1}, i));
      const std::size_t now = render_feedback(ctx).size();
      CHECK(now > prev);
      prev = now;
    }
  }

  TEST_CASE("context validation") {
    PromptContext ctx;
    ctx.user_goal = "use {{placeholder_file}}";
    CHECK_THROWS_AS(render_initial(ctx), ConfigError);
    PromptContext unordered;
    unordered.history = {entry(2, {}, 1), entry(1, {}, 1)};
    CHECK_THROWS_AS(render_feedback(unordered), ConfigError);
    PromptContext empty;
    CHECK_THROWS_AS(render_feedback(empty), ConfigError);
    PromptContext with_history;
    with_history.history = {entry(0, {}, 1)};
    CHECK_THROWS_AS(render_initial(with_history), ConfigError);
  }

  TEST_CASE("weight extraction") {
    const auto a = extract_weights(
        "Sure.\nreward = 1.0*speedDriveReward + -1.0*offRoadPenalty + 0.0*lateralBiasReward + 0.0*stayOnTrackReward\n"
        "On reflection:\n"
        "reward = 1.0*speedDriveReward + -10.0*offRoadPenalty + 0.0*lateralBiasReward + 1.0*stayOnTrackReward\n");
    CHECK(a.weights == RewardWeights{1, -10, 0, 1});

    const auto fenced = extract_weights(
        "```\nreward = 0.5*speedDriveReward + -2.0*offRoadPenalty + 0.0*lateralBiasReward + 0.3*stayOnTrackReward\n```");
    CHECK(fenced.weights == RewardWeights{0.5, -2, 0, 0.3});
    CHECK(fenced.line ==
          "reward = 0.5*speedDriveReward + -2.0*offRoadPenalty + 0.0*lateralBiasReward + 0.3*stayOnTrackReward");

    const auto inline_ticks = extract_weights(
        "`reward = 1.0*speedDriveReward + -1.0*offRoadPenalty + 0.0*lateralBiasReward + 1.0*stayOnTrackReward`");
    CHECK(inline_ticks.weights == RewardWeights{1, -1, 0, 1});

    CHECK_THROWS_AS(extract_weights("I think the weights are fine."), ExtractionError);
    try {
      extract_weights("reward = nonsense");
      FAIL("expected an extraction error");
    } catch (const ExtractionError& e) {
      CHECK(e.reply() == "reward = nonsense");
    }

    const RewardWeights w{0.25, -37.5, 0.125, 1.75};
    CHECK(extract_weights("x\n" + serialize_weight_file(w) + "\n").weights == w);
  }

  TEST_CASE("templates on disk match the built-in ones") {
    const PromptTemplates disk = PromptTemplates::load(REWARDLOOP_TEMPLATES_DIR);
    const PromptTemplates builtin = PromptTemplates::builtin();
    CHECK(disk.version == builtin.version);
    CHECK(disk.initial == builtin.initial);
    CHECK(disk.feedback == builtin.feedback);
  }

  TEST_CASE("template loading errors") {
    TempDir dir("tpl");
    CHECK_THROWS_AS(PromptTemplates::load(dir.path()), ManifestError);
    write(dir / "initial.txt", "%% template-version: a\n{{user_goal}}\n");
    write(dir / "feedback.txt", "%% template-version: b\n{{#history}}{{reward_line}}{{/history}}\n");
    CHECK_THROWS_AS(PromptTemplates::load(dir.path()), ConfigError);
    write(dir / "feedback.txt", "no header\n");
    CHECK_THROWS_AS(PromptTemplates::load(dir.path()), ConfigError);
    write(dir / "feedback.txt", "%% template-version: a\n{{#history}}{{reward_line}}{{/history}}\n");
    const PromptTemplates t = PromptTemplates::load(dir.path());
    CHECK(t.version == "a");
    PromptContext ctx;
    CHECK(render_initial(ctx, t) == std::string(kDefaultGoal) + "\n");

    write(dir / "initial.txt", "%% template-version: a\n{{mystery}}\n");
    CHECK_THROWS_AS(render_initial(ctx, PromptTemplates::load(dir.path())), ConfigError);
  }
}
