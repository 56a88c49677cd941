#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "rewardloop/manifest.hpp"
#include "rewardloop/prompts.hpp"
#include "rewardloop/proposer.hpp"

namespace rewardloop {

struct BackendResult {
  std::vector<SeedStats> per_seed;
  std::vector<std::string> checkpoints;  // file names written into the staging dir
  double train_ms = 0.0;
  double eval_ms = 0.0;
};

// The train + evaluate step of one iteration. Files go into `staging_dir`,
// which becomes iter_<index>/ once the iteration is committed.
class IterationBackend {
 public:
  virtual ~IterationBackend() = default;
  virtual BackendResult run(int index, const RewardWeights& weights, const RunConfig& cfg,
                            const std::filesystem::path& staging_dir, const std::atomic<bool>* cancel) = 0;
};

// Trains cfg.train_seeds policies, writes policy_seed<s>.ckpt and the
// training curve, and evaluates each policy on every evaluation seed.
class FullBackend final : public IterationBackend {
 public:
  BackendResult run(int index, const RewardWeights& weights, const RunConfig& cfg,
                    const std::filesystem::path& staging_dir, const std::atomic<bool>* cancel) override;
};

class SurrogateBackend final : public IterationBackend {
 public:
  BackendResult run(int index, const RewardWeights& weights, const RunConfig& cfg,
                    const std::filesystem::path& staging_dir, const std::atomic<bool>* cancel) override;
};

std::unique_ptr<IterationBackend> make_backend(Mode mode);

// Builds the proposer named in the settings. Console mode reads `in` and
// writes `out`; LM mode reads the API key from the environment now.
std::unique_ptr<Proposer> make_proposer(const ProposerSettings& settings, std::istream& in, std::ostream& out,
                                        const std::atomic<bool>* cancel = nullptr);

struct LoopOptions {
  Proposer* proposer = nullptr;         // required
  IterationBackend* backend = nullptr;  // default: make_backend(cfg.mode)
  PromptTemplates templates = PromptTemplates::builtin();
  const std::atomic<bool>* cancel = nullptr;
  std::function<void(const std::string&)> log;
  std::function<void(const IterationRecord&)> on_iteration;  // after each commit
  unsigned threads = 0;  // copied into RunConfig::threads (not persisted)
};

// Prompt context for the next iteration of a run: history holds exactly the
// committed records, in order.
PromptContext build_context(const RunManifest& manifest);

// Starts a new run in `run_dir` (created if needed; must not already hold a
// manifest) and executes all iterations. On proposer or training failure the
// manifest is marked failed with earlier records intact and the error is
// rethrown.
RunManifest run_loop(const RunConfig& cfg, const std::filesystem::path& run_dir, LoopOptions opts);

// Continues a run at its first missing iteration. Staging leftovers and
// uncommitted iteration directories are removed first. A complete run is
// returned unchanged.
RunManifest resume(const std::filesystem::path& run_dir, LoopOptions opts);

}  // namespace rewardloop
