#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rewardloop/env.hpp"
#include "rewardloop/nn.hpp"
#include "rewardloop/rng.hpp"

namespace rewardloop {

struct TrainConfig {
  int batch_size = 1024;
  int buffer_size = 20480;
  double lr = 3e-4;
  double entropy_coef = 5e-3;
  double clip_epsilon = 0.2;
  double gae_lambda = 0.95;
  double gamma = 0.99;
  int time_horizon = 64;
  int epochs = 5;
  std::int64_t total_env_steps = 400000;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  NetConfig net;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

using ActionVec = std::array<double, kActionSize>;

// One buffer of on-policy experience. `actions` are the pre-squash Gaussian
// samples; the environment saw tanh of them.
struct RolloutBuffer {
  std::vector<Observation> obs;
  std::vector<ActionVec> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;      // any terminal event
  std::vector<std::uint8_t> truncated;  // terminal by step budget only

  // Contiguous runs that advantages are computed over. A segment ends at the
  // time horizon or at an episode end; `bootstrap` is V of the state after
  // its last step (0 after off-road or a finished lap, V(final state) after a
  // timeout, since the budget is not part of the observation).
  struct Segment {
    std::size_t start = 0;
    std::size_t length = 0;
    double bootstrap = 0.0;
  };
  std::vector<Segment> segments;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return rewards.size(); }
};

struct EpisodeSummary {
  Outcome outcome = Outcome::Timeout;
  int steps = 0;
  double total_reward = 0.0;
};

// Keeps the environment running across consecutive buffers; episodes reset
// automatically with seeds derived from the collector seed.
class RolloutCollector {
 public:
  RolloutCollector(const TrackSpec& track, const RewardWeights& weights, const EnvConfig& env,
                   std::uint64_t seed);

  RolloutBuffer collect(const MlpParams& params, const TrainConfig& cfg, Rng& rng);

  // Episodes that finished during the most recent collect() call.
  const std::vector<EpisodeSummary>& finished() const { return finished_; }
  // Return accumulated so far by the episode in progress.
  double running_return() const { return running_return_; }

 private:
  void start_episode();

  const TrackSpec& track_;
  RewardWeights weights_;
  EnvConfig env_;
  std::uint64_t seed_;
  std::uint64_t episode_index_ = 0;
  CarState state_;
  double running_return_ = 0.0;
  std::vector<EpisodeSummary> finished_;
};

// Generalised advantage estimation over one contiguous segment. Resets at
// done flags; `bootstrap_value` is V of the state after the last step.
// Returns (advantages, returns = advantages + values).
std::pair<std::vector<double>, std::vector<double>> compute_gae(std::span<const double> rewards,
                                                                std::span<const double> values,
                                                                std::span<const std::uint8_t> dones,
                                                                double bootstrap_value, double gamma,
                                                                double lambda);

// Fills buffer.advantages/returns over buffer.segments.
void compute_buffer_advantages(RolloutBuffer& buffer, const TrainConfig& cfg);
// Shifts and scales advantages to mean 0, std 1.
void normalize_advantages(RolloutBuffer& buffer);

struct LossTerms {
  double policy_loss = 0.0;  // -mean clipped surrogate
  double value_loss = 0.0;   // mean squared error
  double entropy = 0.0;      // mean entropy
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double total = 0.0;
};

// Loss over the given sample indices and its gradient, accumulated into
// `grads` (zeroed first).
LossTerms ppo_loss_and_grad(const MlpParams& params, const RolloutBuffer& buffer,
                            std::span<const std::size_t> indices, const TrainConfig& cfg,
                            MlpParams& grads);

struct UpdateDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  int minibatches = 0;
};

// `epochs` passes of shuffled minibatches with gradient-norm clipping.
// Throws TrainingError when the loss becomes non-finite.
UpdateDiagnostics ppo_update(MlpParams& params, AdamState& adam, const RolloutBuffer& buffer,
                             const TrainConfig& cfg, Rng& rng);

struct TrainedPolicy {
  MlpParams params;
  std::uint64_t train_seed = 0;
  std::int64_t env_steps = 0;
  double final_mean_reward = 0.0;

  // Deterministic action: tanh of the Gaussian mean.
  Action act(const Observation& obs) const;
};

struct CurvePoint {
  std::int64_t env_steps = 0;
  double mean_episode_reward = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

using TrainingCurve = std::vector<CurvePoint>;

struct TrainOptions {
  const std::atomic<bool>* cancel = nullptr;
  std::function<void(const CurvePoint&)> on_update;
};

// Collect -> advantages -> update until total_env_steps have been gathered
// (rounded up to whole buffers). Deterministic per seed.
std::pair<TrainedPolicy, TrainingCurve> train(const RewardWeights& weights, const TrackSpec& track,
                                              const EnvConfig& env, const TrainConfig& cfg,
                                              std::uint64_t seed, const TrainOptions& opts = {});

// Untrained policy with the same initialisation train() starts from.
TrainedPolicy untrained_policy(std::uint64_t seed, const NetConfig& net = {});

PolicyFn as_policy_fn(const TrainedPolicy& policy);

// Throws ConfigError if the policy input size differs from the observation.
EpisodeRecord run_episode(const TrainedPolicy& policy, const TrackSpec& track,
                          const RewardWeights& weights, const EnvConfig& cfg, std::uint64_t seed,
                          bool record_telemetry = false);

void write_curve_csv(const TrainingCurve& curve, const std::filesystem::path& path);

// Versioned JSON checkpoint with a layer-shape header.
void save_checkpoint(const TrainedPolicy& policy, const std::filesystem::path& path);
TrainedPolicy load_checkpoint(const std::filesystem::path& path);

}  // namespace rewardloop
