#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rewardloop/manifest.hpp"

namespace rewardloop {

// "80.4% +4.4/−5.4": pooled rate with the Wilson interval as offsets, one
// decimal.
std::string format_rate_cell(int count, int n);

// One row per committed iteration, numbers recomputed from per-seed counts.
// Columns: Success, Off-road, Timeout, Speed, Steps; per-column best in bold.
std::string render_report_markdown(const RunManifest& m);
std::string render_report_csv(const RunManifest& m);
std::string render_per_seed_csv(const RunManifest& m);

void write_telemetry_csv(const Telemetry& t, const std::filesystem::path& path);

// Paths where two JSON documents differ, e.g. "/per_seed/0/successful: 3 != 4".
std::vector<std::string> json_diff(const nlohmann::json& expected, const nlohmann::json& actual);

struct ReplayOptions {
  int iteration = 0;
  std::uint64_t seed = 0;  // evaluation seed
  std::optional<std::filesystem::path> telemetry_csv;
  int telemetry_episode = 0;
  unsigned threads = 0;
};

struct ReplayResult {
  std::vector<SeedStats> recomputed;  // one per replica
  std::vector<std::string> diffs;     // empty when reproduced
};

// Re-evaluates one (iteration, seed) from the stored checkpoints, or from the
// surrogate in surrogate mode, and compares with iter_<i>/stats.json. Throws
// ManifestError for missing files, ConfigError for an unknown iteration or
// seed. Mismatches are returned, not thrown.
ReplayResult replay(const std::filesystem::path& run_dir, const ReplayOptions& opts);

}  // namespace rewardloop
