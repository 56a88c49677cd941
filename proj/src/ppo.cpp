#include "rewardloop/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rewardloop/error.hpp"

namespace rewardloop {

void TrainConfig::validate() const {
  if (batch_size <= 0 || buffer_size <= 0 || time_horizon <= 0 || epochs <= 0 || total_env_steps <= 0) {
    throw ConfigError("train config: sizes must be positive");
  }
  if (buffer_size % batch_size != 0) throw ConfigError("train config: buffer_size must be divisible by batch_size");
  if (time_horizon > buffer_size) throw ConfigError("train config: time_horizon must not exceed buffer_size");
  if (!(lr > 0.0) || !(clip_epsilon > 0.0) || !(gamma > 0.0) || !(gae_lambda > 0.0) || !(max_grad_norm > 0.0) ||
      !(value_coef > 0.0) || !(entropy_coef >= 0.0)) {
    throw ConfigError("train config: coefficients must be positive");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"buffer_size", c.buffer_size},
       {"lr", c.lr},
       {"entropy_coef", c.entropy_coef},
       {"clip_epsilon", c.clip_epsilon},
       {"gae_lambda", c.gae_lambda},
       {"gamma", c.gamma},
       {"time_horizon", c.time_horizon},
       {"epochs", c.epochs},
       {"total_env_steps", c.total_env_steps},
       {"value_coef", c.value_coef},
       {"max_grad_norm", c.max_grad_norm},
       {"hidden_units", c.net.hidden_units},
       {"hidden_layers", c.net.hidden_layers},
       {"shared_trunk", c.net.shared_trunk}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.buffer_size = j.value("buffer_size", c.buffer_size);
  c.lr = j.value("lr", c.lr);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.gamma = j.value("gamma", c.gamma);
  c.time_horizon = j.value("time_horizon", c.time_horizon);
  c.epochs = j.value("epochs", c.epochs);
  c.total_env_steps = j.value("total_env_steps", c.total_env_steps);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.net.hidden_units = j.value("hidden_units", c.net.hidden_units);
  c.net.hidden_layers = j.value("hidden_layers", c.net.hidden_layers);
  c.net.shared_trunk = j.value("shared_trunk", c.net.shared_trunk);
}

namespace {

Action squash(const ActionVec& u) { return {std::tanh(u[0]), std::tanh(u[1])}; }

}  // namespace

RolloutCollector::RolloutCollector(const TrackSpec& track, const RewardWeights& weights, const EnvConfig& env,
                                   std::uint64_t seed)
    : track_(track), weights_(weights), env_(env), seed_(seed) {
  start_episode();
}

void RolloutCollector::start_episode() {
  state_ = reset(track_, derive_seed(seed_, episode_index_++), env_);
  running_return_ = 0.0;
}

RolloutBuffer RolloutCollector::collect(const MlpParams& params, const TrainConfig& cfg, Rng& rng) {
  const auto n = static_cast<std::size_t>(cfg.buffer_size);
  const auto horizon = static_cast<std::size_t>(cfg.time_horizon);
  RolloutBuffer buf;
  buf.obs.reserve(n);
  buf.actions.reserve(n);
  buf.log_probs.reserve(n);
  buf.rewards.reserve(n);
  buf.values.reserve(n);
  buf.dones.reserve(n);
  buf.truncated.reserve(n);
  finished_.clear();
  std::size_t seg_start = 0;

  ForwardCache cache;
  for (std::size_t t = 0; t < n; ++t) {
    const Observation obs = observe(state_, track_, env_);
    const NetOutput out = forward(params, obs, cache);
    ActionVec u{};
    for (std::size_t i = 0; i < kActionSize; ++i) u[i] = out.mean[i] + std::exp(params.log_std[i]) * rng.normal();
    const GaussianStats g = gaussian_head(out.mean, params.log_std, u);

    const StepResult r = step(state_, squash(u), track_, weights_, env_);
    state_ = r.state;
    running_return_ += r.reward;
    const bool done = r.events.terminal();
    const bool truncated = r.events.timed_out && !r.events.off_road;

    buf.obs.push_back(obs);
    buf.actions.push_back(u);
    buf.log_probs.push_back(g.log_prob);
    buf.rewards.push_back(r.reward);
    buf.values.push_back(out.value);
    buf.dones.push_back(done ? 1 : 0);
    buf.truncated.push_back(truncated ? 1 : 0);

    if ((t + 1) % horizon == 0 || t + 1 == n || done) {
      double bootstrap = 0.0;
      if (!done || truncated) bootstrap = forward(params, observe(state_, track_, env_), cache).value;
      buf.segments.push_back({seg_start, t + 1 - seg_start, bootstrap});
      seg_start = t + 1;
    }
    if (done) {
      finished_.push_back({classify_outcome({.off_road_count_start = 0,
                                             .off_road_count_end = state_.off_road_count,
                                             .step_count = state_.step_count,
                                             .max_steps = env_.max_steps,
                                             .lap_done = state_.lap_done,
                                             .terminated = true}),
                           state_.step_count, running_return_});
      start_episode();
    }
  }
  return buf;
}

std::pair<std::vector<double>, std::vector<double>> compute_gae(std::span<const double> rewards,
                                                                std::span<const double> values,
                                                                std::span<const std::uint8_t> dones,
                                                                double bootstrap_value, double gamma,
                                                                double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ConfigError("compute_gae: length mismatch");
  std::vector<double> adv(n), ret(n);
  double next_value = bootstrap_value;
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    running = delta + gamma * lambda * live * running;
    adv[t] = running;
    ret[t] = running + values[t];
    next_value = values[t];
  }
  return {std::move(adv), std::move(ret)};
}

void compute_buffer_advantages(RolloutBuffer& buf, const TrainConfig& cfg) {
  const std::size_t n = buf.size();
  buf.advantages.assign(n, 0.0);
  buf.returns.assign(n, 0.0);
  std::size_t covered = 0;
  std::vector<std::uint8_t> dones;
  for (const auto& seg : buf.segments) {
    if (seg.start != covered || seg.start + seg.length > n || seg.length == 0) {
      throw ConfigError("rollout segments do not tile the buffer");
    }
    covered += seg.length;
    // A truncated final step bootstraps instead of terminating.
    dones.assign(buf.dones.begin() + static_cast<std::ptrdiff_t>(seg.start),
                 buf.dones.begin() + static_cast<std::ptrdiff_t>(seg.start + seg.length));
    if (buf.truncated[seg.start + seg.length - 1]) dones.back() = 0;
    auto [adv, ret] = compute_gae(std::span(buf.rewards).subspan(seg.start, seg.length),
                                  std::span(buf.values).subspan(seg.start, seg.length), dones, seg.bootstrap,
                                  cfg.gamma, cfg.gae_lambda);
    std::copy(adv.begin(), adv.end(), buf.advantages.begin() + static_cast<std::ptrdiff_t>(seg.start));
    std::copy(ret.begin(), ret.end(), buf.returns.begin() + static_cast<std::ptrdiff_t>(seg.start));
  }
  if (covered != n) throw ConfigError("rollout segments do not tile the buffer");
}

void normalize_advantages(RolloutBuffer& buf) {
  const std::size_t n = buf.advantages.size();
  if (n == 0) return;
  const double mean = std::accumulate(buf.advantages.begin(), buf.advantages.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double a : buf.advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  for (double& a : buf.advantages) a = sd > 1e-12 ? (a - mean) / sd : 0.0;
}

LossTerms ppo_loss_and_grad(const MlpParams& params, const RolloutBuffer& buf,
                            std::span<const std::size_t> indices, const TrainConfig& cfg, MlpParams& grads) {
  grads.set_zero();
  LossTerms terms;
  if (indices.empty()) return terms;
  const double inv_b = 1.0 / static_cast<double>(indices.size());
  ForwardCache cache;
  std::array<double, kActionSize> sigma2{};
  for (std::size_t i = 0; i < kActionSize; ++i) sigma2[i] = std::exp(2.0 * params.log_std[i]);

  double clipped = 0.0;
  for (std::size_t idx : indices) {
    const NetOutput out = forward(params, buf.obs[idx], cache);
    const ActionVec& u = buf.actions[idx];
    const GaussianStats g = gaussian_head(out.mean, params.log_std, u);
    const double log_ratio = g.log_prob - buf.log_probs[idx];
    const double ratio = std::exp(log_ratio);
    const double adv = buf.advantages[idx];
    const double surr1 = ratio * adv;
    const double surr2 = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv;
    // d(min(surr1, surr2))/d(log_prob): only the unclipped branch carries gradient.
    const double dsurr_dlogp = surr1 <= surr2 ? ratio * adv : 0.0;
    const double value_err = out.value - buf.returns[idx];

    terms.policy_loss -= std::min(surr1, surr2) * inv_b;
    terms.value_loss += value_err * value_err * inv_b;
    terms.entropy += g.entropy * inv_b;
    terms.approx_kl += ((ratio - 1.0) - log_ratio) * inv_b;
    if (std::abs(ratio - 1.0) > cfg.clip_epsilon) clipped += 1.0;

    const double dlogp = -dsurr_dlogp * inv_b;
    OutputGrad dout;
    for (std::size_t i = 0; i < kActionSize; ++i) {
      const double diff = u[i] - out.mean[i];
      dout.mean[i] = dlogp * diff / sigma2[i];
      grads.log_std[i] += dlogp * (diff * diff / sigma2[i] - 1.0);
    }
    dout.value = 2.0 * cfg.value_coef * value_err * inv_b;
    backward(params, cache, dout, grads);
  }
  for (std::size_t i = 0; i < kActionSize; ++i) grads.log_std[i] -= cfg.entropy_coef;
  terms.clip_fraction = clipped * inv_b;
  terms.total = terms.policy_loss + cfg.value_coef * terms.value_loss - cfg.entropy_coef * terms.entropy;
  return terms;
}

UpdateDiagnostics ppo_update(MlpParams& params, AdamState& adam, const RolloutBuffer& buf,
                             const TrainConfig& cfg, Rng& rng) {
  const std::size_t n = buf.size();
  if (buf.advantages.size() != n || buf.returns.size() != n) {
    throw ConfigError("ppo_update: advantages have not been computed");
  }
  std::vector<std::size_t> order(n);
  MlpParams grads = params.zeros_like();
  UpdateDiagnostics diag;
  const AdamConfig adam_cfg{.lr = cfg.lr};
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      const LossTerms t = ppo_loss_and_grad(params, buf, std::span(order).subspan(start, len), cfg, grads);
      if (!std::isfinite(t.total)) {
        std::ostringstream msg;
        msg << "non-finite PPO loss (policy " << t.policy_loss << ", value " << t.value_loss << ", entropy "
            << t.entropy << ", approx_kl " << t.approx_kl << ")";
        throw TrainingError(msg.str());
      }
      double sq = 0.0;
      grads.for_each_buffer([&](std::span<const double> b) {
        for (double g : b) sq += g * g;
      });
      const double gnorm = std::sqrt(sq);
      if (gnorm > cfg.max_grad_norm) {
        const double s = cfg.max_grad_norm / gnorm;
        grads.for_each_buffer([&](std::span<double> b) {
          for (double& g : b) g *= s;
        });
      }
      adam_step(params, grads, adam, adam_cfg);

      diag.policy_loss += t.policy_loss;
      diag.value_loss += t.value_loss;
      diag.entropy += t.entropy;
      diag.clip_fraction += t.clip_fraction;
      diag.approx_kl += t.approx_kl;
      diag.minibatches += 1;
    }
  }
  if (diag.minibatches > 0) {
    const double k = 1.0 / diag.minibatches;
    diag.policy_loss *= k;
    diag.value_loss *= k;
    diag.entropy *= k;
    diag.clip_fraction *= k;
    diag.approx_kl *= k;
  }
  return diag;
}

Action TrainedPolicy::act(const Observation& obs) const {
  const NetOutput out = forward(params, obs);
  return squash(out.mean);
}

TrainedPolicy untrained_policy(std::uint64_t seed, const NetConfig& net) {
  TrainedPolicy p;
  p.params = init_params(derive_seed(seed, 0), net);
  p.train_seed = seed;
  return p;
}

std::pair<TrainedPolicy, TrainingCurve> train(const RewardWeights& weights, const TrackSpec& track,
                                              const EnvConfig& env, const TrainConfig& cfg, std::uint64_t seed,
                                              const TrainOptions& opts) {
  cfg.validate();
  env.validate();
  TrainedPolicy policy = untrained_policy(seed, cfg.net);
  AdamState adam = adam_init(policy.params);
  Rng rng(derive_seed(seed, 1));
  RolloutCollector collector(track, weights, env, derive_seed(seed, 2));
  TrainingCurve curve;

  std::int64_t steps = 0;
  double last_mean = 0.0;
  while (steps < cfg.total_env_steps) {
    if (opts.cancel && opts.cancel->load()) throw Interrupted("training interrupted");
    RolloutBuffer buf = collector.collect(policy.params, cfg, rng);
    steps += static_cast<std::int64_t>(buf.size());
    compute_buffer_advantages(buf, cfg);
    normalize_advantages(buf);
    const UpdateDiagnostics diag = ppo_update(policy.params, adam, buf, cfg, rng);

    const auto& done = collector.finished();
    if (!done.empty()) {
      double sum = 0.0;
      for (const auto& e : done) sum += e.total_reward;
      last_mean = sum / static_cast<double>(done.size());
    } else {
      last_mean = collector.running_return();
    }
    const CurvePoint point{steps, last_mean, diag.clip_fraction, diag.approx_kl};
    curve.push_back(point);
    if (opts.on_update) opts.on_update(point);
  }
  policy.env_steps = steps;
  policy.final_mean_reward = last_mean;
  return {std::move(policy), std::move(curve)};
}

PolicyFn as_policy_fn(const TrainedPolicy& policy) {
  return [&policy](const Observation& obs) { return policy.act(obs); };
}

EpisodeRecord run_episode(const TrainedPolicy& policy, const TrackSpec& track, const RewardWeights& weights,
                          const EnvConfig& cfg, std::uint64_t seed, bool record_telemetry) {
  if (policy.params.input_size() != kObservationSize) {
    throw ConfigError("policy expects " + std::to_string(policy.params.input_size()) +
                      " inputs, observation has " + std::to_string(kObservationSize));
  }
  return run_episode(as_policy_fn(policy), track, weights, cfg, seed, record_telemetry);
}

void write_curve_csv(const TrainingCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "env_steps,mean_episode_reward,clip_fraction,approx_kl\n";
  out.precision(17);
  for (const auto& p : curve) {
    out << p.env_steps << ',' << p.mean_episode_reward << ',' << p.clip_fraction << ',' << p.approx_kl << '\n';
  }
}

}  // namespace rewardloop
