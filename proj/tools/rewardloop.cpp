// rewardloop: propose reward weights, train, evaluate, feed back.
//
// Exit codes: 0 ok, 1 manifest/IO error, 2 usage or configuration error,
// 3 proposer failure, 4 training failure, 5 replay mismatch, 130 interrupted.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rewardloop/error.hpp"
#include "rewardloop/orchestrator.hpp"
#include "rewardloop/report.hpp"

namespace rl = rewardloop;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_signal(int sig) {
  g_cancel.store(true);
  // A second signal kills the process the usual way.
  std::signal(sig, SIG_DFL);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw rl::ConfigError("--seeds: '" + item + "' is not a non-negative integer");
    }
  }
  if (seeds.empty()) throw rl::ConfigError("--seeds: empty list");
  return seeds;
}

nlohmann::json read_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(rl::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw rl::ConfigError(path + ": " + e.what());
  }
}

void print_summary(const rl::IterationRecord& r) {
  const auto& s = r.stats;
  std::printf("iter %d  %s  success %s  off-road %s  timeout %s\n", r.index,
              rl::serialize_weight_file(r.proposal.weights).c_str(),
              rl::format_rate_cell(s.pooled_successful, s.pooled_n).c_str(),
              rl::format_rate_cell(s.pooled_off_road, s.pooled_n).c_str(),
              rl::format_rate_cell(s.pooled_timeout, s.pooled_n).c_str());
  std::fflush(stdout);
}

rl::LoopOptions loop_options(const std::string& templates_dir, unsigned threads, bool quiet) {
  rl::LoopOptions o;
  o.templates = templates_dir.empty() ? rl::PromptTemplates::builtin() : rl::PromptTemplates::load(templates_dir);
  o.cancel = &g_cancel;
  o.threads = threads;
  if (!quiet) o.log = [](const std::string& msg) { std::cerr << msg << std::endl; };
  o.on_iteration = print_summary;
  return o;
}

struct RunFlags {
  std::string goal;
  std::string proposer = "lm";
  std::string mode = "full";
  int iterations = 5;
  std::string seeds = "101,202,303,404,505";
  int episodes = 50;
  std::int64_t train_steps = 0;
  std::string track;
  std::string templates;
  std::string out;
  std::string endpoint;
  std::string model;
  double temperature = 1.0;
  int max_retries = 3;
  double timeout_s = 120.0;
  double backoff_s = 1.0;
  std::string script;
  int train_seeds = 1;
  std::uint64_t run_seed = 0;
  std::uint64_t random_seed = 0;
  std::string env_config;
  std::string train_config;
  unsigned threads = 0;
  bool quiet = false;
};

int cmd_run(const RunFlags& f) {
  rl::RunConfig cfg;
  cfg.iterations = f.iterations;
  cfg.eval_seeds = parse_seeds(f.seeds);
  cfg.episodes = f.episodes;
  if (!f.train_config.empty()) cfg.train = read_json_file(f.train_config).get<rl::TrainConfig>();
  if (f.train_steps > 0) cfg.train.total_env_steps = f.train_steps;
  if (!f.env_config.empty()) cfg.env = read_json_file(f.env_config).get<rl::EnvConfig>();
  if (!f.track.empty()) cfg.track = rl::TrackSpec::load(f.track);
  cfg.mode = rl::mode_from_string(f.mode);
  cfg.train_seeds = f.train_seeds;
  cfg.run_seed = f.run_seed;
  cfg.user_goal = f.goal;

  auto& p = cfg.proposer;
  p.kind = f.proposer;
  if (!f.script.empty()) p.script_path = fs::absolute(f.script).string();
  if (!f.endpoint.empty()) p.lm.endpoint = f.endpoint;
  if (!f.model.empty()) p.lm.model = f.model;
  p.lm.temperature = f.temperature;
  p.lm.max_retries = f.max_retries;
  p.lm.timeout_s = f.timeout_s;
  p.lm.backoff_base_s = f.backoff_s;
  p.random_seed = f.random_seed;
  cfg.validate();

  auto proposer = rl::make_proposer(p, std::cin, std::cout, &g_cancel);
  auto opts = loop_options(f.templates, f.threads, f.quiet);
  opts.proposer = proposer.get();
  const auto m = rl::run_loop(cfg, f.out, opts);
  if (m.best) std::printf("best iteration: %d\n", *m.best);
  return 0;
}

int cmd_resume(const std::string& dir, const std::string& templates, unsigned threads, bool quiet) {
  const auto m0 = rl::load_manifest(dir);
  if (m0.status == rl::RunStatus::Complete) {
    std::printf("run is already complete (%zu iterations)\n", m0.iterations.size());
    return 0;
  }
  auto proposer = rl::make_proposer(m0.config.proposer, std::cin, std::cout, &g_cancel);
  auto opts = loop_options(templates, threads, quiet);
  opts.proposer = proposer.get();
  const auto m = rl::resume(dir, opts);
  if (m.best) std::printf("best iteration: %d\n", *m.best);
  return 0;
}

int cmd_report(const std::string& dir, const std::string& format, const std::string& per_seed_out) {
  const auto m = rl::load_manifest(dir);
  if (format == "md") {
    std::cout << rl::render_report_markdown(m);
  } else if (format == "csv") {
    std::cout << rl::render_report_csv(m);
  } else {
    throw rl::ConfigError("--format must be md or csv");
  }
  const fs::path out = per_seed_out.empty() ? fs::path(dir) / "per_seed.csv" : fs::path(per_seed_out);
  rl::write_file_atomic(out, rl::render_per_seed_csv(m));
  std::cerr << "per-seed table written to " << out.string() << std::endl;
  return 0;
}

int cmd_replay(const std::string& dir, const rl::ReplayOptions& opts) {
  const auto res = rl::replay(dir, opts);
  for (const auto& s : res.recomputed) {
    std::printf("seed %llu replica %d: %d successful, %d off-road, %d timeout of %d\n",
                static_cast<unsigned long long>(s.seed), s.replica, s.successful, s.off_road, s.timeout, s.episodes);
  }
  if (!res.diffs.empty()) {
    std::string msg = "replay does not match the stored statistics:";
    for (const auto& d : res.diffs) msg += "\n  " + d;
    throw rl::ReproducibilityError(msg);
  }
  std::printf("replay matches the stored statistics\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop reward weight tuning for a 2D driving agent"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Start a new run");
  run->add_option("--out", rf.out, "Run directory")->required();
  run->add_option("--goal", rf.goal, "User goal text for the prompt");
  run->add_option("--proposer", rf.proposer, "Weight proposer")
      ->check(CLI::IsMember({"lm", "scripted", "console", "random", "hillclimb"}));
  run->add_option("--mode", rf.mode, "full trains policies, surrogate uses the closed-form stand-in")
      ->check(CLI::IsMember({"full", "surrogate"}));
  run->add_option("-T,--iterations", rf.iterations, "Loop iterations")->check(CLI::PositiveNumber);
  run->add_option("--seeds", rf.seeds, "Comma-separated evaluation seeds");
  run->add_option("--episodes", rf.episodes, "Evaluation episodes per seed")->check(CLI::PositiveNumber);
  run->add_option("--train-steps", rf.train_steps, "Environment steps per training run")
      ->check(CLI::PositiveNumber);
  run->add_option("--train-seeds", rf.train_seeds, "Policies trained per iteration")->check(CLI::PositiveNumber);
  run->add_option("--run-seed", rf.run_seed, "Parent seed for training");
  run->add_option("--track", rf.track, "Track JSON file")->check(CLI::ExistingFile);
  run->add_option("--env-config", rf.env_config, "Environment JSON overrides")->check(CLI::ExistingFile);
  run->add_option("--train-config", rf.train_config, "PPO JSON overrides")->check(CLI::ExistingFile);
  run->add_option("--templates", rf.templates, "Directory with initial.txt and feedback.txt")
      ->check(CLI::ExistingDirectory);
  run->add_option("--script", rf.script, "Weight lines for the scripted proposer")->check(CLI::ExistingFile);
  run->add_option("--endpoint", rf.endpoint, "Chat-completions URL");
  run->add_option("--model", rf.model, "Model name");
  run->add_option("--temperature", rf.temperature, "Sampling temperature");
  run->add_option("--max-retries", rf.max_retries, "LM retries per iteration")->check(CLI::NonNegativeNumber);
  run->add_option("--timeout", rf.timeout_s, "LM request timeout in seconds")->check(CLI::PositiveNumber);
  run->add_option("--backoff", rf.backoff_s, "LM retry backoff base in seconds")->check(CLI::NonNegativeNumber);
  run->add_option("--random-seed", rf.random_seed, "Seed for the random proposer");
  run->add_option("--threads", rf.threads, "Worker threads (0 = all cores)");
  run->add_flag("-q,--quiet", rf.quiet, "Only print iteration summaries");

  std::string resume_dir, resume_templates;
  unsigned resume_threads = 0;
  bool resume_quiet = false;
  auto* res = app.add_subcommand("resume", "Continue an interrupted or failed run");
  res->add_option("run_dir", resume_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  res->add_option("--templates", resume_templates, "Template directory")->check(CLI::ExistingDirectory);
  res->add_option("--threads", resume_threads, "Worker threads (0 = all cores)");
  res->add_flag("-q,--quiet", resume_quiet, "Only print iteration summaries");

  std::string report_dir, report_format = "md", per_seed_out;
  auto* rep = app.add_subcommand("report", "Per-iteration table and per-seed CSV");
  rep->add_option("run_dir", report_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--format", report_format, "md or csv")->check(CLI::IsMember({"md", "csv"}));
  rep->add_option("--per-seed", per_seed_out, "Where to write per_seed.csv (default: run directory)");

  std::string replay_dir, telemetry;
  rl::ReplayOptions ro;
  auto* rp = app.add_subcommand("replay", "Re-evaluate a stored policy and check its statistics");
  rp->add_option("run_dir", replay_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  rp->add_option("--iteration", ro.iteration, "Iteration index")->required();
  rp->add_option("--seed", ro.seed, "Evaluation seed")->required();
  rp->add_option("--telemetry", telemetry, "Write per-step telemetry CSV of one episode");
  rp->add_option("--episode", ro.telemetry_episode, "Episode index for --telemetry");
  rp->add_option("--threads", ro.threads, "Worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    if (*run) return cmd_run(rf);
    if (*res) return cmd_resume(resume_dir, resume_templates, resume_threads, resume_quiet);
    if (*rep) return cmd_report(report_dir, report_format, per_seed_out);
    if (*rp) {
      if (!telemetry.empty()) ro.telemetry_csv = telemetry;
      return cmd_replay(replay_dir, ro);
    }
  } catch (const rl::ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const rl::ProposerError& e) {
    std::cerr << "proposer failed: " << e.what() << std::endl;
    return 3;
  } catch (const rl::TrainingError& e) {
    std::cerr << "training failed: " << e.what() << std::endl;
    return 4;
  } catch (const rl::ReproducibilityError& e) {
    std::cerr << "reproducibility violation: " << e.what() << std::endl;
    return 5;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: invalid configuration file: " << e.what() << std::endl;
    return 2;
  } catch (const rl::Interrupted& e) {
    std::cerr << "interrupted: " << e.what() << "; continue with 'rewardloop resume'" << std::endl;
    return 130;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
