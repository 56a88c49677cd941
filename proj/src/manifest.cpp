#include "rewardloop/manifest.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "rewardloop/error.hpp"
#include "rewardloop/rng.hpp"

namespace rewardloop {
namespace {

nlohmann::json weights_json(const RewardWeights& w) {
  return {{"speed", w.speed}, {"offroad", w.offroad}, {"lateral", w.lateral}, {"stay", w.stay}};
}

RewardWeights weights_from(const nlohmann::json& j) {
  return {j.at("speed").get<double>(), j.at("offroad").get<double>(), j.at("lateral").get<double>(),
          j.at("stay").get<double>()};
}

nlohmann::json record_to_json(const IterationRecord& r) {
  nlohmann::json proposal = r.proposal;
  proposal.erase("latency_ms");
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& s : r.per_seed) {
    nlohmann::json js = s;
    js.erase("episode_results");  // kept in iter_<i>/stats.json
    per_seed.push_back(std::move(js));
  }
  return {{"index", r.index},
          {"proposal", proposal},
          {"checkpoints", r.checkpoints},
          {"per_seed", per_seed},
          {"stats", r.stats},
          {"stats_block", r.stats_block},
          {"timings",
           {{"propose_ms", r.timings.propose_ms},
            {"proposer_latency_ms", r.proposal.latency_ms},
            {"train_ms", r.timings.train_ms},
            {"eval_ms", r.timings.eval_ms}}}};
}

IterationRecord record_from_json(const nlohmann::json& j) {
  IterationRecord r;
  r.index = j.at("index").get<int>();
  r.proposal = j.at("proposal").get<Proposal>();
  r.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  r.per_seed = j.at("per_seed").get<std::vector<SeedStats>>();
  r.stats = j.at("stats").get<IterationStats>();
  r.stats_block = j.at("stats_block").get<std::string>();
  if (j.contains("timings")) {
    const auto& t = j.at("timings");
    r.timings.propose_ms = t.value("propose_ms", 0.0);
    r.timings.train_ms = t.value("train_ms", 0.0);
    r.timings.eval_ms = t.value("eval_ms", 0.0);
    r.proposal.latency_ms = t.value("proposer_latency_ms", 0.0);
  }
  return r;
}

}  // namespace

const char* to_string(Mode m) { return m == Mode::Full ? "full" : "surrogate"; }

Mode mode_from_string(std::string_view s) {
  if (s == "full") return Mode::Full;
  if (s == "surrogate") return Mode::Surrogate;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected full or surrogate)");
}

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::InProgress: return "in_progress";
    case RunStatus::Complete: return "complete";
    case RunStatus::Failed: return "failed";
  }
  return "failed";
}

RunStatus status_from_string(std::string_view s) {
  if (s == "in_progress") return RunStatus::InProgress;
  if (s == "complete") return RunStatus::Complete;
  if (s == "failed") return RunStatus::Failed;
  throw ManifestError("unknown run status '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const ProposerSettings& p) {
  j = {{"kind", p.kind},
       {"script_path", p.script_path},
       {"lm",
        {{"endpoint", p.lm.endpoint},
         {"model", p.lm.model},
         {"api_key_env", p.lm.api_key_env},
         {"temperature", p.lm.temperature},
         {"max_retries", p.lm.max_retries},
         {"timeout_s", p.lm.timeout_s},
         {"backoff_base_s", p.lm.backoff_base_s}}},
       {"random_seed", p.random_seed},
       {"bounds", {{"lo", weights_json(p.bounds.lo)}, {"hi", weights_json(p.bounds.hi)}}}};
}

void from_json(const nlohmann::json& j, ProposerSettings& p) {
  p.kind = j.at("kind").get<std::string>();
  p.script_path = j.value("script_path", std::string());
  if (j.contains("lm")) {
    const auto& l = j.at("lm");
    p.lm.endpoint = l.value("endpoint", p.lm.endpoint);
    p.lm.model = l.value("model", p.lm.model);
    p.lm.api_key_env = l.value("api_key_env", p.lm.api_key_env);
    p.lm.temperature = l.value("temperature", p.lm.temperature);
    p.lm.max_retries = l.value("max_retries", p.lm.max_retries);
    p.lm.timeout_s = l.value("timeout_s", p.lm.timeout_s);
    p.lm.backoff_base_s = l.value("backoff_base_s", p.lm.backoff_base_s);
  }
  p.random_seed = j.value("random_seed", std::uint64_t{0});
  if (j.contains("bounds")) {
    p.bounds.lo = weights_from(j.at("bounds").at("lo"));
    p.bounds.hi = weights_from(j.at("bounds").at("hi"));
  }
}

void RunConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (eval_seeds.empty()) throw ConfigError("at least one evaluation seed is required");
  if (episodes < 1) throw ConfigError("episodes per seed must be >= 1");
  if (train_seeds < 1) throw ConfigError("train-seeds must be >= 1");
  train.validate();
  env.validate();
}

std::uint64_t RunConfig::train_seed(int replica) const {
  return derive_seed(run_seed, static_cast<std::uint64_t>(replica));
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"iterations", c.iterations},
       {"eval_seeds", c.eval_seeds},
       {"episodes", c.episodes},
       {"train", c.train},
       {"env", c.env},
       {"track", c.track.to_json()},
       {"mode", to_string(c.mode)},
       {"train_seeds", c.train_seeds},
       {"run_seed", c.run_seed},
       {"user_goal", c.user_goal},
       {"proposer", c.proposer}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  c.iterations = j.at("iterations").get<int>();
  c.eval_seeds = j.at("eval_seeds").get<std::vector<std::uint64_t>>();
  c.episodes = j.at("episodes").get<int>();
  c.train = j.at("train").get<TrainConfig>();
  c.env = j.at("env").get<EnvConfig>();
  c.track = TrackSpec::from_json(j.at("track"));
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.train_seeds = j.at("train_seeds").get<int>();
  c.run_seed = j.at("run_seed").get<std::uint64_t>();
  c.user_goal = j.value("user_goal", std::string());
  c.proposer = j.at("proposer").get<ProposerSettings>();
}

void RunManifest::check() const {
  if (schema_version != kSchemaVersion) {
    throw ManifestError("unsupported schema_version " + std::to_string(schema_version));
  }
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    if (iterations[i].index != static_cast<int>(i)) {
      throw ManifestError("iteration records are not contiguous from 0 (found index " +
                          std::to_string(iterations[i].index) + " at position " + std::to_string(i) + ")");
    }
  }
  if (static_cast<int>(iterations.size()) > config.iterations) {
    throw ManifestError("more iteration records than configured iterations");
  }
  if (status == RunStatus::Complete && static_cast<int>(iterations.size()) != config.iterations) {
    throw ManifestError("run marked complete with " + std::to_string(iterations.size()) + " of " +
                        std::to_string(config.iterations) + " iterations");
  }
  if (best && (*best < 0 || *best >= static_cast<int>(iterations.size()))) {
    throw ManifestError("best iteration index out of range");
  }
}

nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : m.iterations) records.push_back(record_to_json(r));
  return {{"schema_version", m.schema_version},
          {"code_version", m.code_version},
          {"template_version", m.template_version},
          {"kernel_isa", m.kernel_isa},
          {"status", to_string(m.status)},
          {"failure", m.failure},
          {"best", m.best ? nlohmann::json(*m.best) : nlohmann::json(nullptr)},
          {"config", m.config},
          {"iterations", records},
          {"timings", {{"created_at", m.created_at}, {"updated_at", m.updated_at}}}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != kSchemaVersion) {
    throw ManifestError("unsupported schema_version " + std::to_string(m.schema_version));
  }
  m.code_version = j.value("code_version", std::string());
  m.template_version = j.value("template_version", std::string());
  m.kernel_isa = j.value("kernel_isa", std::string());
  m.status = status_from_string(j.at("status").get<std::string>());
  m.failure = j.value("failure", std::string());
  if (j.contains("best") && !j.at("best").is_null()) m.best = j.at("best").get<int>();
  m.config = j.at("config").get<RunConfig>();
  for (const auto& r : j.at("iterations")) m.iterations.push_back(record_from_json(r));
  if (j.contains("timings")) {
    m.created_at = j.at("timings").value("created_at", std::string());
    m.updated_at = j.at("timings").value("updated_at", std::string());
  }
  m.check();
  return m;
}

nlohmann::json strip_timings(nlohmann::json j) {
  if (j.is_object()) {
    j.erase("timings");
    for (auto& [k, v] : j.items()) v = strip_timings(std::move(v));
  } else if (j.is_array()) {
    for (auto& v : j) v = strip_timings(std::move(v));
  }
  return j;
}

std::filesystem::path manifest_path(const std::filesystem::path& run_dir) { return run_dir / "manifest.json"; }

std::filesystem::path iteration_dir(const std::filesystem::path& run_dir, int index) {
  return run_dir / ("iter_" + std::to_string(index));
}

RunManifest load_manifest(const std::filesystem::path& run_dir) {
  const auto path = manifest_path(run_dir);
  if (!std::filesystem::exists(path)) throw ManifestError("no manifest at " + path.string());
  try {
    return manifest_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const ManifestError& e) {
    throw ManifestError(path.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw ManifestError(path.string() + ": corrupt manifest: " + e.what());
  }
}

void save_manifest(const RunManifest& m, const std::filesystem::path& run_dir) {
  m.check();
  write_file_atomic(manifest_path(run_dir), manifest_to_json(m).dump(2) + "\n");
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  const auto tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw ManifestError("cannot write " + tmp + ": " + std::strerror(errno));
  std::size_t off = 0;
  while (off < contents.size()) {
    const auto n = ::write(fd, contents.data() + off, contents.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw ManifestError("cannot write " + tmp + ": " + std::strerror(err));
    }
    off += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ManifestError("cannot rename " + tmp + " to " + path.string() + ": " + ec.message());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<int> select_best(const std::vector<IterationRecord>& records) {
  std::optional<int> best;
  auto steps = [](const IterationRecord& r) {
    return r.stats.avg_steps_success ? r.stats.avg_steps_success->mean : HUGE_VAL;
  };
  for (const auto& r : records) {
    if (!best) {
      best = r.index;
      continue;
    }
    const auto& b = records[static_cast<std::size_t>(*best)];
    const double rs = r.stats.pooled_success_rate();
    const double bs = b.stats.pooled_success_rate();
    if (rs > bs || (rs == bs && steps(r) < steps(b))) best = r.index;
  }
  return best;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace rewardloop
