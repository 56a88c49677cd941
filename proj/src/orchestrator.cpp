#include "rewardloop/orchestrator.hpp"

#include <chrono>
#include <charconv>
#include <istream>
#include <ostream>

#include "rewardloop/error.hpp"
#include "rewardloop/kernels.hpp"
#include "rewardloop/parallel.hpp"
#include "rewardloop/surrogate.hpp"

namespace rewardloop {
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void log_line(const LoopOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

// iter_<n> -> n, anything else -> -1.
int parse_iter_dir(const std::string& name) {
  if (!name.starts_with("iter_")) return -1;
  int n = -1;
  const char* first = name.data() + 5;
  const char* last = name.data() + name.size();
  const auto [ptr, ec] = std::from_chars(first, last, n);
  if (ec != std::errc{} || ptr != last || first == last) return -1;
  return n;
}

void remove_uncommitted(const fs::path& run_dir, int committed, const LoopOptions& opts) {
  std::vector<fs::path> doomed;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const auto name = entry.path().filename().string();
    if (name.ends_with(".tmp") || parse_iter_dir(name) >= committed) doomed.push_back(entry.path());
  }
  for (const auto& p : doomed) {
    log_line(opts, "removing uncommitted " + p.filename().string());
    fs::remove_all(p);
  }
}

void point_best_link(const fs::path& run_dir, int index) {
  const auto link = run_dir / "best";
  const auto tmp = run_dir / "best.tmp";
  fs::remove(tmp);
  fs::create_directory_symlink("iter_" + std::to_string(index), tmp);
  fs::rename(tmp, link);
}

void verify_committed(const RunManifest& m, const fs::path& run_dir) {
  for (const auto& r : m.iterations) {
    const auto dir = iteration_dir(run_dir, r.index);
    if (!fs::is_directory(dir)) throw ManifestError("manifest lists iteration " + std::to_string(r.index) +
                                                    " but " + dir.string() + " is missing");
  }
}

RunManifest continue_loop(RunManifest m, const fs::path& run_dir, LoopOptions& opts) {
  if (opts.proposer == nullptr) throw ConfigError("run loop: no proposer configured");
  std::unique_ptr<IterationBackend> owned;
  IterationBackend* backend = opts.backend;
  if (backend == nullptr) {
    owned = make_backend(m.config.mode);
    backend = owned.get();
  }
  auto& cfg = m.config;

  auto fail = [&](const std::string& what) {
    m.status = RunStatus::Failed;
    m.failure = what;
    m.updated_at = utc_timestamp();
    save_manifest(m, run_dir);
  };

  m.status = RunStatus::InProgress;
  m.failure.clear();
  m.updated_at = utc_timestamp();
  save_manifest(m, run_dir);

  for (int i = static_cast<int>(m.iterations.size()); i < cfg.iterations; ++i) {
    const fs::path staging = run_dir / ("iter_" + std::to_string(i) + ".tmp");
    try {
      if (opts.cancel && opts.cancel->load()) throw Interrupted("interrupted before iteration " + std::to_string(i));
      fs::remove_all(staging);
      fs::create_directories(staging);

      const PromptContext ctx = build_context(m);
      const std::string prompt = render_prompt(ctx, opts.templates);
      write_file_atomic(staging / "prompt.txt", prompt);

      log_line(opts, "iteration " + std::to_string(i) + ": proposing (" + opts.proposer->kind() + ")");
      const auto t_prop = Clock::now();
      Proposal proposal = opts.proposer->propose(ctx, prompt);
      const double propose_ms = ms_since(t_prop);
      const std::string line = serialize_weight_file(proposal.weights);
      write_file_atomic(staging / "reply.txt", proposal.raw_reply);
      write_file_atomic(staging / "weights.txt", line + "\n");
      write_file_atomic(staging / "proposal.json", nlohmann::json(proposal).dump(2) + "\n");
      log_line(opts, "iteration " + std::to_string(i) + ": " + line);

      BackendResult res = backend->run(i, proposal.weights, cfg, staging, opts.cancel);
      IterationRecord rec;
      rec.index = i;
      rec.proposal = std::move(proposal);
      rec.checkpoints = std::move(res.checkpoints);
      rec.stats = aggregate(res.per_seed);
      rec.stats_block = render_stats_block(rec.stats);
      rec.timings = {propose_ms, res.train_ms, res.eval_ms};

      const nlohmann::json stats_doc = {
          {"schema_version", kSchemaVersion}, {"per_seed", res.per_seed}, {"stats", rec.stats}};
      write_file_atomic(staging / "stats.json", stats_doc.dump(2) + "\n");
      write_file_atomic(staging / "stats_block.txt", rec.stats_block);
      for (auto& s : res.per_seed) s.episode_results.clear();
      rec.per_seed = std::move(res.per_seed);

      // Commit: the directory rename makes the iteration visible, the
      // manifest write makes it part of the run.
      fs::rename(staging, iteration_dir(run_dir, i));
      m.iterations.push_back(std::move(rec));
      m.best = select_best(m.iterations);
      if (m.best) point_best_link(run_dir, *m.best);
      m.updated_at = utc_timestamp();
      save_manifest(m, run_dir);
      if (opts.on_iteration) opts.on_iteration(m.iterations.back());
    } catch (const Interrupted& e) {
      std::error_code ec;
      fs::remove_all(staging, ec);
      // Still resumable as in progress; note why it stopped.
      m.failure = e.what();
      m.updated_at = utc_timestamp();
      save_manifest(m, run_dir);
      throw;
    } catch (const Error& e) {
      std::error_code ec;
      fs::remove_all(staging, ec);
      fail(e.what());
      throw;
    }
  }

  m.status = RunStatus::Complete;
  m.updated_at = utc_timestamp();
  save_manifest(m, run_dir);
  return m;
}

}  // namespace

BackendResult FullBackend::run(int, const RewardWeights& weights, const RunConfig& cfg, const fs::path& staging,
                               const std::atomic<bool>* cancel) {
  BackendResult out;
  const auto k = static_cast<std::size_t>(cfg.train_seeds);
  std::vector<TrainedPolicy> policies(k);
  std::vector<TrainingCurve> curves(k);

  const auto t_train = Clock::now();
  parallel_for(
      k,
      [&](std::size_t r) {
        TrainOptions topts;
        topts.cancel = cancel;
        std::tie(policies[r], curves[r]) =
            train(weights, cfg.track, cfg.env, cfg.train, cfg.train_seed(static_cast<int>(r)), topts);
      },
      cfg.threads);
  out.train_ms = ms_since(t_train);

  for (std::size_t r = 0; r < k; ++r) {
    const auto seed = std::to_string(policies[r].train_seed);
    const std::string ckpt = "policy_seed" + seed + ".ckpt";
    save_checkpoint(policies[r], staging / ckpt);
    out.checkpoints.push_back(ckpt);
    write_curve_csv(curves[r], staging / (k == 1 ? std::string("curve.csv") : "curve_seed" + seed + ".csv"));
  }

  const auto t_eval = Clock::now();
  EvalOptions eopts;
  eopts.threads = cfg.threads;
  for (std::size_t r = 0; r < k; ++r) {
    auto stats = evaluate_policy(policies[r], cfg.track, weights, cfg.env, cfg.episodes, cfg.eval_seeds, eopts);
    for (auto& s : stats) {
      s.replica = static_cast<int>(r);
      out.per_seed.push_back(std::move(s));
    }
  }
  out.eval_ms = ms_since(t_eval);
  return out;
}

BackendResult SurrogateBackend::run(int, const RewardWeights& weights, const RunConfig& cfg, const fs::path&,
                                    const std::atomic<bool>* cancel) {
  if (cancel && cancel->load()) throw Interrupted("interrupted before surrogate evaluation");
  BackendResult out;
  const auto t0 = Clock::now();
  for (int r = 0; r < cfg.train_seeds; ++r) {
    std::vector<std::uint64_t> seeds;
    for (const auto s : cfg.eval_seeds) seeds.push_back(surrogate_replica_seed(s, r));
    auto stats = surrogate_eval(weights, seeds, cfg.episodes);
    for (std::size_t i = 0; i < stats.size(); ++i) {
      stats[i].seed = cfg.eval_seeds[i];
      stats[i].replica = r;
      out.per_seed.push_back(std::move(stats[i]));
    }
  }
  out.eval_ms = ms_since(t0);
  return out;
}

std::unique_ptr<IterationBackend> make_backend(Mode mode) {
  if (mode == Mode::Surrogate) return std::make_unique<SurrogateBackend>();
  return std::make_unique<FullBackend>();
}

std::unique_ptr<Proposer> make_proposer(const ProposerSettings& s, std::istream& in, std::ostream& out,
                                        const std::atomic<bool>* cancel) {
  if (s.kind == "scripted") {
    if (s.script_path.empty()) throw ConfigError("scripted proposer needs --script <file>");
    return std::make_unique<ScriptedProposer>(ScriptedProposer::from_file(s.script_path));
  }
  if (s.kind == "console") return std::make_unique<ConsoleProposer>(in, out);
  if (s.kind == "random") return std::make_unique<RandomProposer>(s.random_seed, s.bounds);
  if (s.kind == "hillclimb") return std::make_unique<HillClimbProposer>();
  if (s.kind == "lm") return std::make_unique<LmProposer>(s.lm, cancel);
  throw ConfigError("unknown proposer '" + s.kind + "' (expected lm, scripted, console, random or hillclimb)");
}

PromptContext build_context(const RunManifest& m) {
  PromptContext ctx;
  if (!m.config.user_goal.empty()) ctx.user_goal = m.config.user_goal;
  ctx.seed_count = static_cast<int>(m.config.eval_seeds.size()) * m.config.train_seeds;
  for (const auto& r : m.iterations) ctx.history.push_back({r.index, r.proposal.weights, r.stats_block, r.stats});
  return ctx;
}

RunManifest run_loop(const RunConfig& cfg, const fs::path& run_dir, LoopOptions opts) {
  cfg.validate();
  if (fs::exists(manifest_path(run_dir))) {
    throw ConfigError(run_dir.string() + " already holds a run; use resume to continue it");
  }
  fs::create_directories(run_dir);
  RunManifest m;
  m.config = cfg;
  m.config.threads = opts.threads;
  m.template_version = opts.templates.version;
  m.kernel_isa = kernels::active().name;
  m.created_at = utc_timestamp();
  return continue_loop(std::move(m), run_dir, opts);
}

RunManifest resume(const fs::path& run_dir, LoopOptions opts) {
  RunManifest m = load_manifest(run_dir);
  if (m.status == RunStatus::Complete) return m;
  verify_committed(m, run_dir);
  if (m.template_version != opts.templates.version) {
    throw ConfigError("templates are version '" + opts.templates.version + "' but the run used '" +
                      m.template_version + "'");
  }
  if (m.kernel_isa != kernels::active().name) {
    log_line(opts, std::string("warning: run was started with ") + m.kernel_isa + " kernels, continuing with " +
                       kernels::active().name + "; later iterations may not match a single-ISA rerun");
  }
  m.config.threads = opts.threads;
  remove_uncommitted(run_dir, static_cast<int>(m.iterations.size()), opts);
  return continue_loop(std::move(m), run_dir, opts);
}

}  // namespace rewardloop
