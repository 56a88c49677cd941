#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rewardloop/env.hpp"
#include "rewardloop/eval.hpp"
#include "rewardloop/ppo.hpp"
#include "rewardloop/proposer.hpp"
#include "rewardloop/track.hpp"

namespace rewardloop {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kCodeVersion = "rewardloop 0.1.0";

enum class Mode { Full, Surrogate };
enum class RunStatus { InProgress, Complete, Failed };

const char* to_string(Mode m);
Mode mode_from_string(std::string_view s);
const char* to_string(RunStatus s);
RunStatus status_from_string(std::string_view s);

struct ProposerSettings {
  std::string kind = "lm";  // lm | scripted | console | random | hillclimb
  std::string script_path;  // scripted
  LmConfig lm;
  std::uint64_t random_seed = 0;
  WeightBounds bounds;
};

void to_json(nlohmann::json& j, const ProposerSettings& p);
void from_json(const nlohmann::json& j, ProposerSettings& p);

struct RunConfig {
  int iterations = 5;
  std::vector<std::uint64_t> eval_seeds{101, 202, 303, 404, 505};
  int episodes = 50;
  TrainConfig train;
  EnvConfig env;
  TrackSpec track = TrackSpec::default_circuit();
  Mode mode = Mode::Full;
  int train_seeds = 1;        // policies trained per iteration
  std::uint64_t run_seed = 0;  // parent of the training seeds
  std::string user_goal;       // empty = default goal
  ProposerSettings proposer;
  unsigned threads = 0;        // worker threads, 0 = all cores; not persisted, never affects results

  void validate() const;
  // Training seed of replica r; the same for every iteration so iterations
  // differ only in their weights.
  std::uint64_t train_seed(int replica) const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

struct IterationTimings {
  double propose_ms = 0.0;
  double train_ms = 0.0;
  double eval_ms = 0.0;
};

struct IterationRecord {
  int index = 0;
  Proposal proposal;
  std::vector<std::string> checkpoints;  // file names inside iter_<i>/, empty in surrogate mode
  std::vector<SeedStats> per_seed;
  IterationStats stats;
  std::string stats_block;
  IterationTimings timings;
};

struct RunManifest {
  int schema_version = kSchemaVersion;
  RunConfig config;
  std::vector<IterationRecord> iterations;
  RunStatus status = RunStatus::InProgress;
  std::string failure;  // message when status == Failed
  std::optional<int> best;
  std::string template_version;
  std::string code_version = kCodeVersion;
  // Kernel instruction set that produced the numbers. Training results are
  // reproducible bit for bit only under the same one (FMA rounds differently).
  std::string kernel_isa;
  std::string created_at;  // wall clock, informational
  std::string updated_at;

  // Throws ManifestError on contiguity or status violations.
  void check() const;
};

// Wall-clock fields live under "timings" keys so that comparisons can drop
// them; everything else is a pure function of the configuration and seeds.
nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

// Same document with every "timings" member removed, recursively.
nlohmann::json strip_timings(nlohmann::json j);

std::filesystem::path manifest_path(const std::filesystem::path& run_dir);
std::filesystem::path iteration_dir(const std::filesystem::path& run_dir, int index);

// Throws ManifestError naming the file on missing, unparsable or invalid
// manifests.
RunManifest load_manifest(const std::filesystem::path& run_dir);
void save_manifest(const RunManifest& m, const std::filesystem::path& run_dir);

// Write to <path>.tmp, flush, then rename over <path>.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

// Highest pooled success, then fewer mean steps on successes, then the
// earlier iteration.
std::optional<int> select_best(const std::vector<IterationRecord>& records);

std::string utc_timestamp();

}  // namespace rewardloop
