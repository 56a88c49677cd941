#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rewardloop/error.hpp"
#include "rewardloop/eval.hpp"
#include "rewardloop/reward.hpp"

namespace rewardloop {

inline constexpr std::string_view kDefaultGoal =
    "I have a racetrack and a car that is learning to drive on it. I want the car to drive as fast as "
    "possible, without falling off the racetrack, so that it consistently completes laps in as little "
    "time as it can.";

inline constexpr std::string_view kDefaultEnvironment =
    "The agent is a car in a 2D kinematic driving simulation on a closed racetrack. It can accelerate "
    "forwards, brake or reverse, and steer left or right.";

// A past iteration as shown to the proposer. `iteration` is 0-based and
// rendered 1-based; repeats are allowed (branched retries of one iteration).
struct HistoryEntry {
  int iteration = 0;
  RewardWeights weights;
  std::string stats_block;  // output of render_stats_block
  IterationStats stats;     // for programmatic proposers; not rendered
};

struct PromptContext {
  std::string user_goal{kDefaultGoal};
  std::string environment{kDefaultEnvironment};
  std::vector<HistoryEntry> history;
  int seed_count = 5;

  // Throws ConfigError on unordered history or text containing "{{".
  void validate() const;
};

// Template text plus the version tag read from its first line
// ("%% template-version: <tag>").
struct PromptTemplates {
  std::string initial;
  std::string feedback;
  std::string version;

  static PromptTemplates builtin();
  // Reads <dir>/initial.txt and <dir>/feedback.txt. Throws ManifestError if a
  // file is missing, ConfigError if the two versions differ.
  static PromptTemplates load(const std::filesystem::path& dir);
};

// Placeholder weights shown in the initial prompt.
inline constexpr RewardWeights kPlaceholderWeights{0.1, -0.1, 0.1, 0.1};

// Minimal mustache subset: {{name}} slots and one level of {{#list}}...{{/list}}
// sections. Unknown names and leftover "{{" are ConfigErrors.
std::string render_initial(const PromptContext& ctx, const PromptTemplates& tpl = PromptTemplates::builtin());
std::string render_feedback(const PromptContext& ctx, const PromptTemplates& tpl = PromptTemplates::builtin());
// Initial prompt for an empty history, feedback prompt otherwise.
std::string render_prompt(const PromptContext& ctx, const PromptTemplates& tpl = PromptTemplates::builtin());

// Reply text that held no usable weight line. Carries the raw reply.
class ExtractionError : public ProposerError {
 public:
  ExtractionError(const std::string& what, std::string reply)
      : ProposerError(what), reply_(std::move(reply)) {}
  const std::string& reply() const { return reply_; }

 private:
  std::string reply_;
};

struct ExtractedWeights {
  RewardWeights weights;
  std::string line;  // the matched line, trimmed
};

// Last line starting with "reward =" (code fences and inline backticks are
// ignored) parsed as a weight file.
ExtractedWeights extract_weights(std::string_view reply);

}  // namespace rewardloop
