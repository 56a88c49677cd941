#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "rewardloop/prompts.hpp"
#include "rewardloop/reward.hpp"

namespace rewardloop {

struct Proposal {
  RewardWeights weights;
  std::string raw_reply;  // verbatim final reply (or script/console line)
  std::string kind;
  double latency_ms = 0.0;
  int retries = 0;
  std::vector<std::string> attempt_log;  // one entry per failed attempt
};

void to_json(nlohmann::json& j, const Proposal& p);
void from_json(const nlohmann::json& j, Proposal& p);

// Produces the weight vector for the next iteration. `prompt` is the rendered
// text for `ctx`; every backend receives the same bytes. Implementations must
// not keep state that would change the result after a resume, except where
// noted (console input is a stream).
class Proposer {
 public:
  virtual ~Proposer() = default;
  virtual std::string kind() const = 0;
  virtual Proposal propose(const PromptContext& ctx, const std::string& prompt) = 0;
};

// Returns the weight line at index history.size(). Throws ProposerError when
// the script is exhausted.
class ScriptedProposer final : public Proposer {
 public:
  explicit ScriptedProposer(std::vector<RewardWeights> script);
  // One weight line per non-blank line; ConfigError on a malformed line.
  static ScriptedProposer from_file(const std::filesystem::path& path);

  std::string kind() const override { return "scripted"; }
  Proposal propose(const PromptContext& ctx, const std::string& prompt) override;

 private:
  std::vector<RewardWeights> script_;
};

// Human-expert mode: shows the prompt, reads weight lines until one parses.
class ConsoleProposer final : public Proposer {
 public:
  ConsoleProposer(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

  std::string kind() const override { return "console"; }
  Proposal propose(const PromptContext& ctx, const std::string& prompt) override;

 private:
  std::istream& in_;
  std::ostream& out_;
};

struct WeightBounds {
  RewardWeights lo{0.0, -100.0, -1.0, 0.0};
  RewardWeights hi{2.0, 0.0, 1.0, 2.0};

  // Throws ConfigError on non-finite or inverted bounds.
  void validate() const;
};

// Uniform sample in the bounds, seeded per iteration with
// derive_seed(seed, history.size()).
class RandomProposer final : public Proposer {
 public:
  RandomProposer(std::uint64_t seed, WeightBounds bounds = {});

  std::string kind() const override { return "random"; }
  Proposal propose(const PromptContext& ctx, const std::string& prompt) override;

 private:
  std::uint64_t seed_;
  WeightBounds bounds_;
};

// Test double: starts at `initial`, then makes the off-road weight `step`
// more negative whenever the last pooled off-road rate exceeds
// `offroad_threshold_pct`; otherwise repeats the last vector.
class HillClimbProposer final : public Proposer {
 public:
  explicit HillClimbProposer(RewardWeights initial = {1.0, -1.0, 0.0, 0.0}, double step = 10.0,
                             double offroad_threshold_pct = 20.0)
      : initial_(initial), step_(step), threshold_(offroad_threshold_pct) {}

  std::string kind() const override { return "hillclimb"; }
  Proposal propose(const PromptContext& ctx, const std::string& prompt) override;

 private:
  RewardWeights initial_;
  double step_;
  double threshold_;
};

inline constexpr const char* kApiKeyEnv = "REWARD_LOOP_API_KEY";
inline constexpr const char* kCorrectiveSentence = "Output only the reward function line.";

struct LmConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "o3";
  std::string api_key_env = kApiKeyEnv;
  double temperature = 1.0;
  int max_retries = 3;
  double timeout_s = 120.0;
  double backoff_base_s = 1.0;  // sleep base * 2^(attempt-1) before a retry

  void validate() const;
};

// Single-turn chat-completions client. Retries transport errors, 5xx, 429 and
// unusable replies (the latter with the corrective sentence appended);
// 401/403 and other 4xx fail immediately.
class LmProposer final : public Proposer {
 public:
  // Reads the API key now; throws ConfigError if it is unset or empty.
  explicit LmProposer(LmConfig cfg, const std::atomic<bool>* cancel = nullptr);

  std::string kind() const override { return "lm"; }
  Proposal propose(const PromptContext& ctx, const std::string& prompt) override;

 private:
  LmConfig cfg_;
  std::string api_key_;
  const std::atomic<bool>* cancel_;
};

}  // namespace rewardloop
