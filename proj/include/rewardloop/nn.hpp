#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace rewardloop {

inline constexpr std::size_t kActionSize = 2;

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;    // out
};

// Plain feed-forward stack; tanh after every layer except the last.
struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t input_size() const { return layers.front().in; }
  std::size_t output_size() const { return layers.back().out; }
};

struct NetConfig {
  std::size_t input_size = 11;
  std::size_t hidden_units = 128;
  std::size_t hidden_layers = 4;
  // One trunk with a 3-wide output layer (2 action means + value), or two
  // separate stacks of the same shape for policy and value.
  bool shared_trunk = false;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Policy/value parameters. Also used as the gradient container.
struct MlpParams {
  bool shared_trunk = false;
  std::vector<Mlp> nets;  // shared: {trunk}; separate: {policy, value}
  std::array<double, kActionSize> log_std{};

  std::size_t input_size() const { return nets.front().input_size(); }
  std::size_t parameter_count() const;
  // Visits every parameter buffer in a fixed order (weights, biases, log-std).
  void for_each_buffer(const std::function<void(std::span<double>)>& fn);
  void for_each_buffer(const std::function<void(std::span<const double>)>& fn) const;
  // Same shapes, all zeros.
  MlpParams zeros_like() const;
  void set_zero();
  bool all_finite() const;
  void clamp_log_std();
};

// Orthogonal rows/columns rescaled to 1/sqrt(fan_in); zero biases; the action
// rows of the output layer scaled by 0.01; log-std = -0.5.
MlpParams init_params(std::uint64_t seed, const NetConfig& cfg = {});

struct ForwardCache {
  // acts[n][l] is the input of layer l of net n; acts[n][L] is the net output.
  std::vector<std::vector<std::vector<double>>> acts;
};

struct NetOutput {
  std::array<double, kActionSize> mean{};
  double value = 0.0;
};

// Throws ConfigError on a wrong input length or non-finite input.
NetOutput forward(const MlpParams& params, std::span<const double> obs, ForwardCache& cache);
NetOutput forward(const MlpParams& params, std::span<const double> obs);

struct OutputGrad {
  std::array<double, kActionSize> mean{};
  double value = 0.0;
};

// Reverse-mode pass for the cached forward. Accumulates into `grads` (which
// must come from zeros_like of the same params); log-std is left untouched.
void backward(const MlpParams& params, const ForwardCache& cache, const OutputGrad& dout,
              MlpParams& grads);

struct GaussianStats {
  double log_prob = 0.0;
  double entropy = 0.0;
};

// Diagonal Gaussian log-density of `action` and the distribution's entropy.
GaussianStats gaussian_head(std::span<const double> mean, std::span<const double> log_std,
                            std::span<const double> action);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  MlpParams m;
  MlpParams v;
  std::int64_t step = 0;
};

AdamState adam_init(const MlpParams& params);
// Throws ConfigError on shape mismatch, TrainingError on non-finite gradients.
void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, const AdamConfig& cfg = {});

}  // namespace rewardloop
