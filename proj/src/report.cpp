#include "rewardloop/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rewardloop/error.hpp"
#include "rewardloop/kernels.hpp"
#include "rewardloop/ppo.hpp"
#include "rewardloop/surrogate.hpp"

namespace rewardloop {
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

// A number, or empty for an undefined average.
std::string csv_num(std::optional<double> v) { return v ? fmt("%.6f", *v) : std::string(); }

struct Row {
  int index = 0;
  IterationStats stats;
};

std::vector<Row> rows_of(const RunManifest& m) {
  std::vector<Row> rows;
  for (const auto& r : m.iterations) rows.push_back({r.index, aggregate(r.per_seed)});
  return rows;
}

double rate(int count, int n) { return n > 0 ? static_cast<double>(count) / n : 0.0; }

void json_diff_into(const nlohmann::json& a, const nlohmann::json& b, const std::string& path,
                    std::vector<std::string>& out) {
  if (a.type() != b.type() && !(a.is_number() && b.is_number())) {
    out.push_back(path + ": " + a.dump() + " != " + b.dump());
    return;
  }
  if (a.is_object()) {
    for (const auto& [k, v] : a.items()) {
      if (!b.contains(k)) {
        out.push_back(path + "/" + k + ": missing in recomputed");
      } else {
        json_diff_into(v, b.at(k), path + "/" + k, out);
      }
    }
    for (const auto& [k, v] : b.items()) {
      if (!a.contains(k)) out.push_back(path + "/" + k + ": missing in stored");
    }
  } else if (a.is_array()) {
    if (a.size() != b.size()) {
      out.push_back(path + ": length " + std::to_string(a.size()) + " != " + std::to_string(b.size()));
      return;
    }
    for (std::size_t i = 0; i < a.size(); ++i) json_diff_into(a[i], b[i], path + "/" + std::to_string(i), out);
  } else if (a != b) {
    out.push_back(path + ": " + a.dump() + " != " + b.dump());
  }
}

}  // namespace

std::string format_rate_cell(int count, int n) {
  const auto [lo, hi] = wilson_interval(count, n);
  const double p = rate(count, n);
  // Round the offsets from the printed values so they add up on the page.
  return fmt("%.1f%%", 100.0 * p) + " " + fmt("+%.1f", 100.0 * (hi - p)) + fmt("/−%.1f", 100.0 * (p - lo));
}

std::string render_report_markdown(const RunManifest& m) {
  const auto rows = rows_of(m);
  std::string out = "| Iteration | Success | Off-road | Timeout | Speed (km/h) | Steps |\n";
  out += "|---|---|---|---|---|---|\n";
  if (rows.empty()) return out;

  auto best_of = [&](auto value, bool higher) {
    std::optional<double> best;
    for (const auto& r : rows) {
      const std::optional<double> v = value(r.stats);
      if (!v) continue;
      if (!best || (higher ? *v > *best : *v < *best)) best = v;
    }
    return best;
  };
  const auto success = [](const IterationStats& s) -> std::optional<double> {
    return rate(s.pooled_successful, s.pooled_n);
  };
  const auto offroad = [](const IterationStats& s) -> std::optional<double> {
    return rate(s.pooled_off_road, s.pooled_n);
  };
  const auto timeout = [](const IterationStats& s) -> std::optional<double> {
    return rate(s.pooled_timeout, s.pooled_n);
  };
  const auto speed = [](const IterationStats& s) -> std::optional<double> {
    return s.avg_speed_success ? std::optional(s.avg_speed_success->mean) : std::nullopt;
  };
  const auto steps = [](const IterationStats& s) -> std::optional<double> {
    return s.avg_steps_success ? std::optional(s.avg_steps_success->mean) : std::nullopt;
  };
  const auto best_success = best_of(success, true);
  const auto best_offroad = best_of(offroad, false);
  const auto best_timeout = best_of(timeout, false);
  const auto best_speed = best_of(speed, true);
  const auto best_steps = best_of(steps, false);

  auto mark = [](std::string cell, std::optional<double> v, std::optional<double> best) {
    return (v && best && *v == *best) ? "**" + cell + "**" : cell;
  };

  for (const auto& r : rows) {
    const auto& s = r.stats;
    std::string speed_cell = "--", steps_cell = "--";
    if (s.avg_speed_success) speed_cell = fmt("%.1f ± %.1f", s.avg_speed_success->mean, s.avg_speed_success->std);
    if (s.avg_steps_success) steps_cell = fmt("%.1f ± %.1f", s.avg_steps_success->mean, s.avg_steps_success->std);
    out += "| " + std::to_string(r.index) + " | " +
           mark(format_rate_cell(s.pooled_successful, s.pooled_n), success(s), best_success) + " | " +
           mark(format_rate_cell(s.pooled_off_road, s.pooled_n), offroad(s), best_offroad) + " | " +
           mark(format_rate_cell(s.pooled_timeout, s.pooled_n), timeout(s), best_timeout) + " | " +
           mark(speed_cell, speed(s), best_speed) + " | " + mark(steps_cell, steps(s), best_steps) + " |\n";
  }
  return out;
}

std::string render_report_csv(const RunManifest& m) {
  std::string out =
      "iteration,success_rate,wilson_lo,wilson_hi,offroad_rate,timeout_rate,speed_mean,speed_std,steps_mean,"
      "steps_std\n";
  for (const auto& r : rows_of(m)) {
    const auto& s = r.stats;
    auto mean = [](const std::optional<MeanStd>& v) { return v ? std::optional(v->mean) : std::nullopt; };
    auto sd = [](const std::optional<MeanStd>& v) { return v ? std::optional(v->std) : std::nullopt; };
    out += std::to_string(r.index) + "," + fmt("%.6f", rate(s.pooled_successful, s.pooled_n)) + "," +
           fmt("%.6f", s.wilson_lo) + "," + fmt("%.6f", s.wilson_hi) + "," +
           fmt("%.6f", rate(s.pooled_off_road, s.pooled_n)) + "," + fmt("%.6f", rate(s.pooled_timeout, s.pooled_n)) +
           "," + csv_num(mean(s.avg_speed_success)) + "," + csv_num(sd(s.avg_speed_success)) + "," +
           csv_num(mean(s.avg_steps_success)) + "," + csv_num(sd(s.avg_steps_success)) + "\n";
  }
  return out;
}

std::string render_per_seed_csv(const RunManifest& m) {
  std::string out =
      "iteration,replica,seed,episodes,successful,off_road,timeout,success_rate,offroad_rate,timeout_rate,"
      "avg_speed_success,avg_speed_offroad,avg_steps_success\n";
  for (const auto& r : m.iterations) {
    for (const auto& s : r.per_seed) {
      out += std::to_string(r.index) + "," + std::to_string(s.replica) + "," + std::to_string(s.seed) + "," +
             std::to_string(s.episodes) + "," + std::to_string(s.successful) + "," + std::to_string(s.off_road) +
             "," + std::to_string(s.timeout) + "," + fmt("%.6f", rate(s.successful, s.episodes)) + "," +
             fmt("%.6f", rate(s.off_road, s.episodes)) + "," + fmt("%.6f", rate(s.timeout, s.episodes)) + "," +
             csv_num(s.avg_speed_success) + "," + csv_num(s.avg_speed_offroad) + "," +
             csv_num(s.avg_steps_success) + "\n";
    }
  }
  return out;
}

void write_telemetry_csv(const Telemetry& t, const fs::path& path) {
  std::string out = "step,x,y,speed_kmh,lateral_norm,reward\n";
  for (std::size_t i = 0; i < t.step.size(); ++i) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%.9g\n", t.step[i], t.position[i].x, t.position[i].y,
                  t.speed_kmh[i], t.lateral_norm[i], t.reward[i]);
    out += buf;
  }
  write_file_atomic(path, out);
}

std::vector<std::string> json_diff(const nlohmann::json& expected, const nlohmann::json& actual) {
  std::vector<std::string> out;
  json_diff_into(expected, actual, "", out);
  return out;
}

ReplayResult replay(const fs::path& run_dir, const ReplayOptions& opts) {
  const RunManifest m = load_manifest(run_dir);
  if (opts.iteration < 0 || opts.iteration >= static_cast<int>(m.iterations.size())) {
    throw ConfigError("iteration " + std::to_string(opts.iteration) + " is not in the run (have " +
                      std::to_string(m.iterations.size()) + ")");
  }
  const auto& cfg = m.config;
  if (std::find(cfg.eval_seeds.begin(), cfg.eval_seeds.end(), opts.seed) == cfg.eval_seeds.end()) {
    throw ConfigError("seed " + std::to_string(opts.seed) + " is not an evaluation seed of this run");
  }
  const auto& rec = m.iterations[static_cast<std::size_t>(opts.iteration)];
  const auto dir = iteration_dir(run_dir, opts.iteration);
  const auto stats_path = dir / "stats.json";
  nlohmann::json stored;
  try {
    stored = nlohmann::json::parse(read_text_file(stats_path));
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(stats_path.string() + ": " + e.what());
  }

  ReplayResult result;
  const auto& weights = rec.proposal.weights;
  for (int r = 0; r < cfg.train_seeds; ++r) {
    SeedStats s;
    if (cfg.mode == Mode::Surrogate) {
      s = surrogate_eval(weights, {surrogate_replica_seed(opts.seed, r)}, cfg.episodes).front();
      s.seed = opts.seed;
    } else {
      if (static_cast<std::size_t>(r) >= rec.checkpoints.size()) {
        throw ManifestError("iteration " + std::to_string(opts.iteration) + " lists no checkpoint for replica " +
                            std::to_string(r));
      }
      const auto ckpt = dir / rec.checkpoints[static_cast<std::size_t>(r)];
      const TrainedPolicy policy = load_checkpoint(ckpt);
      EvalOptions eo;
      eo.threads = opts.threads;
      s = evaluate_policy(policy, cfg.track, weights, cfg.env, cfg.episodes, {opts.seed}, eo).front();
      if (opts.telemetry_csv && r == 0) {
        if (opts.telemetry_episode < 0 || opts.telemetry_episode >= cfg.episodes) {
          throw ConfigError("telemetry episode out of range");
        }
        const auto ep_seed = derive_seed(opts.seed, static_cast<std::uint64_t>(opts.telemetry_episode));
        const EpisodeRecord ep = run_episode(policy, cfg.track, weights, cfg.env, ep_seed, true);
        write_telemetry_csv(*ep.telemetry, *opts.telemetry_csv);
      }
    }
    s.replica = r;

    const nlohmann::json* match = nullptr;
    for (const auto& js : stored.at("per_seed")) {
      if (js.at("seed").get<std::uint64_t>() == opts.seed && js.value("replica", 0) == r) match = &js;
    }
    const std::string where = "seed " + std::to_string(opts.seed) + " replica " + std::to_string(r);
    if (match == nullptr) {
      result.diffs.push_back(where + ": no stored statistics");
    } else {
      for (auto& d : json_diff(*match, nlohmann::json(s))) result.diffs.push_back(where + ": " + d);
    }
    result.recomputed.push_back(std::move(s));
  }
  if (!result.diffs.empty() && cfg.mode == Mode::Full && !m.kernel_isa.empty() &&
      m.kernel_isa != kernels::active().name) {
    result.diffs.push_back("note: the run used " + m.kernel_isa + " kernels, this replay used " +
                           kernels::active().name + " (set REWARDLOOP_SIMD to match)");
  }
  if (opts.telemetry_csv && cfg.mode == Mode::Surrogate) {
    throw ConfigError("telemetry needs a full-mode run (surrogate runs have no policies)");
  }
  return result;
}

}  // namespace rewardloop
