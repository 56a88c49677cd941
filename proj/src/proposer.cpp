#include "rewardloop/proposer.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <regex>
#include <thread>

#include <httplib.h>

#include "rewardloop/rng.hpp"

namespace rewardloop {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/\s]+)(/\S*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("lm endpoint is not an http(s) URL: " + url);
  Endpoint e{m[1].str(), m[2].matched ? m[2].str() : std::string()};
  if (e.path.empty() || e.path == "/") e.path = "/v1/chat/completions";
  return e;
}

void sleep_cancelable(double seconds, const std::atomic<bool>* cancel) {
  const auto until = Clock::now() + std::chrono::duration<double>(seconds);
  while (Clock::now() < until) {
    if (cancel && cancel->load()) throw Interrupted("interrupted while waiting to retry the LM request");
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

}  // namespace

void to_json(nlohmann::json& j, const Proposal& p) {
  j = {{"weights", {{"speed", p.weights.speed}, {"offroad", p.weights.offroad},
                    {"lateral", p.weights.lateral}, {"stay", p.weights.stay}}},
       {"weight_line", serialize_weight_file(p.weights)},
       {"raw_reply", p.raw_reply},
       {"kind", p.kind},
       {"latency_ms", p.latency_ms},
       {"retries", p.retries},
       {"attempt_log", p.attempt_log}};
}

void from_json(const nlohmann::json& j, Proposal& p) {
  const auto& w = j.at("weights");
  p.weights = {w.at("speed").get<double>(), w.at("offroad").get<double>(), w.at("lateral").get<double>(),
               w.at("stay").get<double>()};
  p.raw_reply = j.at("raw_reply").get<std::string>();
  p.kind = j.at("kind").get<std::string>();
  p.latency_ms = j.value("latency_ms", 0.0);
  p.retries = j.value("retries", 0);
  p.attempt_log = j.value("attempt_log", std::vector<std::string>{});
}

ScriptedProposer::ScriptedProposer(std::vector<RewardWeights> script) : script_(std::move(script)) {}

ScriptedProposer ScriptedProposer::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read script " + path.string());
  std::vector<RewardWeights> script;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      script.push_back(parse_weight_file(line));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (script.empty()) throw ConfigError("script " + path.string() + " has no weight lines");
  return ScriptedProposer(std::move(script));
}

Proposal ScriptedProposer::propose(const PromptContext& ctx, const std::string&) {
  const auto i = ctx.history.size();
  if (i >= script_.size()) {
    throw ProposerError("script exhausted: no weight line for iteration " + std::to_string(i));
  }
  Proposal p;
  p.weights = script_[i];
  p.raw_reply = serialize_weight_file(p.weights);
  p.kind = kind();
  return p;
}

Proposal ConsoleProposer::propose(const PromptContext&, const std::string& prompt) {
  const auto t0 = Clock::now();
  out_ << prompt;
  if (!prompt.ends_with('\n')) out_ << '\n';
  out_ << "\nEnter the reward function line:" << std::endl;
  Proposal p;
  p.kind = kind();
  std::string line;
  while (std::getline(in_, line)) {
    if (blank(line)) continue;
    try {
      auto ex = extract_weights(line);
      p.weights = ex.weights;
      p.raw_reply = line;
      p.latency_ms = elapsed_ms(t0);
      return p;
    } catch (const ExtractionError& e) {
      p.attempt_log.push_back(line);
      ++p.retries;
      out_ << "Could not parse that line (" << e.what() << "). Enter it again:" << std::endl;
    }
  }
  throw ProposerError("console proposer: input ended before a valid weight line was entered");
}

void WeightBounds::validate() const {
  const double los[] = {lo.speed, lo.offroad, lo.lateral, lo.stay};
  const double his[] = {hi.speed, hi.offroad, hi.lateral, hi.stay};
  for (int i = 0; i < 4; ++i) {
    if (!std::isfinite(los[i]) || !std::isfinite(his[i])) throw ConfigError("random bounds must be finite");
    if (los[i] > his[i]) throw ConfigError("random bounds are inverted");
  }
}

RandomProposer::RandomProposer(std::uint64_t seed, WeightBounds bounds) : seed_(seed), bounds_(bounds) {
  bounds_.validate();
}

Proposal RandomProposer::propose(const PromptContext& ctx, const std::string&) {
  Rng rng(derive_seed(seed_, ctx.history.size()));
  const auto& [lo, hi] = bounds_;
  Proposal p;
  p.weights = {rng.uniform(lo.speed, hi.speed), rng.uniform(lo.offroad, hi.offroad),
               rng.uniform(lo.lateral, hi.lateral), rng.uniform(lo.stay, hi.stay)};
  p.raw_reply = serialize_weight_file(p.weights);
  p.kind = kind();
  return p;
}

Proposal HillClimbProposer::propose(const PromptContext& ctx, const std::string&) {
  Proposal p;
  p.kind = kind();
  if (ctx.history.empty()) {
    p.weights = initial_;
  } else {
    const auto& last = ctx.history.back();
    p.weights = last.weights;
    const auto& s = last.stats;
    const double offroad_pct = s.pooled_n > 0 ? 100.0 * s.pooled_off_road / s.pooled_n : 0.0;
    if (offroad_pct > threshold_) p.weights.offroad = -(std::abs(p.weights.offroad) + step_);
  }
  p.raw_reply = serialize_weight_file(p.weights);
  return p;
}

void LmConfig::validate() const {
  if (max_retries < 0) throw ConfigError("lm: max_retries must be >= 0");
  if (!(timeout_s > 0.0)) throw ConfigError("lm: timeout must be positive");
  if (!(backoff_base_s >= 0.0)) throw ConfigError("lm: backoff base must be >= 0");
  if (!std::isfinite(temperature) || temperature < 0.0) throw ConfigError("lm: temperature must be >= 0");
  if (model.empty()) throw ConfigError("lm: model name is empty");
  split_endpoint(endpoint);
}

LmProposer::LmProposer(LmConfig cfg, const std::atomic<bool>* cancel) : cfg_(std::move(cfg)), cancel_(cancel) {
  cfg_.validate();
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("lm proposer: environment variable " + cfg_.api_key_env + " is not set");
  }
  api_key_ = key;
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (cfg_.endpoint.starts_with("https://")) {
    throw ConfigError("lm proposer: built without TLS support, cannot reach " + cfg_.endpoint);
  }
#endif
}

Proposal LmProposer::propose(const PromptContext&, const std::string& prompt) {
  const auto t0 = Clock::now();
  const Endpoint ep = split_endpoint(cfg_.endpoint);
  httplib::Client client(ep.origin);
  const auto secs = static_cast<time_t>(cfg_.timeout_s);
  const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  client.set_bearer_token_auth(api_key_);

  Proposal p;
  p.kind = kind();
  bool corrective = false;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (cancel_ && cancel_->load()) throw Interrupted("interrupted before the LM request");
    if (attempt > 0) sleep_cancelable(cfg_.backoff_base_s * std::pow(2.0, attempt - 1), cancel_);

    std::string content = prompt;
    if (corrective) content += std::string("\n\n") + kCorrectiveSentence;
    const nlohmann::json body = {{"model", cfg_.model},
                                 {"messages", {{{"role", "user"}, {"content", content}}}},
                                 {"temperature", cfg_.temperature}};
    const std::string tag = "attempt " + std::to_string(attempt + 1) + ": ";

    auto res = client.Post(ep.path, body.dump(), "application/json");
    if (!res) {
      p.attempt_log.push_back(tag + "transport error: " + httplib::to_string(res.error()));
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      throw ProposerError("lm proposer: authentication rejected (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status >= 500 || res->status == 429) {
      p.attempt_log.push_back(tag + "HTTP " + std::to_string(res->status));
      continue;
    }
    if (res->status != 200) {
      throw ProposerError("lm proposer: HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    }

    std::string reply;
    try {
      reply = nlohmann::json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      p.attempt_log.push_back(tag + "unexpected response body: " + e.what());
      continue;
    }
    try {
      p.weights = extract_weights(reply).weights;
      p.raw_reply = reply;
      p.retries = attempt;
      p.latency_ms = elapsed_ms(t0);
      return p;
    } catch (const ExtractionError& e) {
      p.attempt_log.push_back(tag + e.what() + "; reply: " + reply.substr(0, 500));
      corrective = true;
    }
  }

  std::string msg = "lm proposer: no usable reply after " + std::to_string(cfg_.max_retries + 1) + " attempts";
  for (const auto& line : p.attempt_log) msg += "\n  " + line;
  throw ProposerError(msg);
}

}  // namespace rewardloop
