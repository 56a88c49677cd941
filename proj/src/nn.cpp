#include "rewardloop/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rewardloop/error.hpp"
#include "rewardloop/kernels.hpp"
#include "rewardloop/rng.hpp"

namespace rewardloop {
namespace {

// Semi-orthogonal out x in matrix: orthonormal rows when out <= in, otherwise
// orthonormal columns. Gram-Schmidt on Gaussian vectors.
std::vector<double> orthogonal(std::size_t out, std::size_t in, Rng& rng) {
  const bool by_rows = out <= in;
  const std::size_t count = by_rows ? out : in;
  const std::size_t len = by_rows ? in : out;
  std::vector<std::vector<double>> basis;
  basis.reserve(count);
  while (basis.size() < count) {
    std::vector<double> v(len);
    for (double& x : v) x = rng.normal();
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double p = 0.0;
        for (std::size_t i = 0; i < len; ++i) p += v[i] * b[i];
        for (std::size_t i = 0; i < len; ++i) v[i] -= p * b[i];
      }
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm < 1e-8) continue;
    for (double& x : v) x /= nrm;
    basis.push_back(std::move(v));
  }
  std::vector<double> w(out * in);
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t i = 0; i < len; ++i) {
      if (by_rows) {
        w[k * in + i] = basis[k][i];
      } else {
        w[i * in + k] = basis[k][i];
      }
    }
  }
  return w;
}

Mlp make_mlp(std::size_t in, std::size_t hidden, std::size_t hidden_layers, std::size_t out, Rng& rng) {
  Mlp net;
  std::size_t prev = in;
  for (std::size_t l = 0; l <= hidden_layers; ++l) {
    const std::size_t width = l == hidden_layers ? out : hidden;
    DenseLayer layer{prev, width, orthogonal(width, prev, rng), std::vector<double>(width, 0.0)};
    const double scale = std::sqrt(static_cast<double>(std::max(prev, width)) / static_cast<double>(prev));
    for (double& x : layer.weight) x *= scale;
    net.layers.push_back(std::move(layer));
    prev = width;
  }
  return net;
}

void scale_rows(DenseLayer& layer, std::size_t first, std::size_t count, double factor) {
  for (std::size_t r = first; r < first + count; ++r) {
    for (std::size_t c = 0; c < layer.in; ++c) layer.weight[r * layer.in + c] *= factor;
  }
}

void check_same_shape(const MlpParams& a, const MlpParams& b) {
  bool ok = a.shared_trunk == b.shared_trunk && a.nets.size() == b.nets.size();
  for (std::size_t n = 0; ok && n < a.nets.size(); ++n) {
    ok = a.nets[n].layers.size() == b.nets[n].layers.size();
    for (std::size_t l = 0; ok && l < a.nets[n].layers.size(); ++l) {
      ok = a.nets[n].layers[l].in == b.nets[n].layers[l].in && a.nets[n].layers[l].out == b.nets[n].layers[l].out &&
           a.nets[n].layers[l].weight.size() == b.nets[n].layers[l].weight.size();
    }
  }
  if (!ok) throw ConfigError("parameter shape mismatch");
}

// Runs one net, storing every layer input in `acts`.
void forward_net(const Mlp& net, std::span<const double> x, std::vector<std::vector<double>>& acts) {
  const auto& k = kernels::active();
  acts.resize(net.layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    auto& y = acts[l + 1];
    y.resize(layer.out);
    k.affine(layer.weight.data(), layer.bias.data(), acts[l].data(), y.data(), layer.out, layer.in);
    if (l + 1 < net.layers.size()) {
      for (double& v : y) v = std::tanh(v);
    }
  }
}

void backward_net(const Mlp& net, const std::vector<std::vector<double>>& acts, std::vector<double> grad_out,
                  Mlp& grads) {
  const auto& k = kernels::active();
  std::vector<double> grad_in;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const DenseLayer& layer = net.layers[l];
    DenseLayer& g = grads.layers[l];
    k.rank1_acc(g.weight.data(), grad_out.data(), acts[l].data(), layer.out, layer.in);
    for (std::size_t r = 0; r < layer.out; ++r) g.bias[r] += grad_out[r];
    if (l == 0) break;
    grad_in.assign(layer.in, 0.0);
    k.affine_transpose_acc(layer.weight.data(), grad_out.data(), grad_in.data(), layer.out, layer.in);
    // acts[l] holds tanh outputs of the previous layer.
    for (std::size_t c = 0; c < layer.in; ++c) grad_in[c] *= 1.0 - acts[l][c] * acts[l][c];
    std::swap(grad_out, grad_in);
  }
}

}  // namespace

std::size_t MlpParams::parameter_count() const {
  std::size_t n = log_std.size();
  for (const Mlp& net : nets) {
    for (const DenseLayer& l : net.layers) n += l.weight.size() + l.bias.size();
  }
  return n;
}

void MlpParams::for_each_buffer(const std::function<void(std::span<double>)>& fn) {
  for (Mlp& net : nets) {
    for (DenseLayer& l : net.layers) {
      fn(l.weight);
      fn(l.bias);
    }
  }
  fn(log_std);
}

void MlpParams::for_each_buffer(const std::function<void(std::span<const double>)>& fn) const {
  for (const Mlp& net : nets) {
    for (const DenseLayer& l : net.layers) {
      fn(l.weight);
      fn(l.bias);
    }
  }
  fn(log_std);
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z = *this;
  z.set_zero();
  return z;
}

void MlpParams::set_zero() {
  for_each_buffer([](std::span<double> b) { std::fill(b.begin(), b.end(), 0.0); });
}

bool MlpParams::all_finite() const {
  bool ok = true;
  for_each_buffer([&](std::span<const double> b) {
    ok = ok && std::all_of(b.begin(), b.end(), [](double x) { return std::isfinite(x); });
  });
  return ok;
}

void MlpParams::clamp_log_std() {
  for (double& s : log_std) s = std::clamp(s, kLogStdMin, kLogStdMax);
}

MlpParams init_params(std::uint64_t seed, const NetConfig& cfg) {
  Rng rng(seed);
  MlpParams p;
  p.shared_trunk = cfg.shared_trunk;
  if (cfg.shared_trunk) {
    p.nets.push_back(make_mlp(cfg.input_size, cfg.hidden_units, cfg.hidden_layers, kActionSize + 1, rng));
    scale_rows(p.nets[0].layers.back(), 0, kActionSize, 0.01);
  } else {
    p.nets.push_back(make_mlp(cfg.input_size, cfg.hidden_units, cfg.hidden_layers, kActionSize, rng));
    p.nets.push_back(make_mlp(cfg.input_size, cfg.hidden_units, cfg.hidden_layers, 1, rng));
    scale_rows(p.nets[0].layers.back(), 0, kActionSize, 0.01);
  }
  p.log_std.fill(-0.5);
  return p;
}

NetOutput forward(const MlpParams& params, std::span<const double> obs, ForwardCache& cache) {
  if (obs.size() != params.input_size()) {
    throw ConfigError("network input has length " + std::to_string(obs.size()) + ", expected " +
                      std::to_string(params.input_size()));
  }
  if (!std::all_of(obs.begin(), obs.end(), [](double x) { return std::isfinite(x); })) {
    throw ConfigError("network input is not finite");
  }
  cache.acts.resize(params.nets.size());
  NetOutput out;
  for (std::size_t n = 0; n < params.nets.size(); ++n) forward_net(params.nets[n], obs, cache.acts[n]);
  const auto& first = cache.acts[0].back();
  out.mean = {first[0], first[1]};
  out.value = params.shared_trunk ? first[kActionSize] : cache.acts[1].back()[0];
  return out;
}

NetOutput forward(const MlpParams& params, std::span<const double> obs) {
  thread_local ForwardCache cache;
  return forward(params, obs, cache);
}

void backward(const MlpParams& params, const ForwardCache& cache, const OutputGrad& dout, MlpParams& grads) {
  check_same_shape(params, grads);
  if (cache.acts.size() != params.nets.size()) throw ConfigError("forward cache does not match parameters");
  for (std::size_t n = 0; n < params.nets.size(); ++n) {
    if (cache.acts[n].size() != params.nets[n].layers.size() + 1 ||
        cache.acts[n].front().size() != params.nets[n].input_size()) {
      throw ConfigError("forward cache does not match parameters");
    }
  }
  if (params.shared_trunk) {
    backward_net(params.nets[0], cache.acts[0], {dout.mean[0], dout.mean[1], dout.value}, grads.nets[0]);
  } else {
    backward_net(params.nets[0], cache.acts[0], {dout.mean[0], dout.mean[1]}, grads.nets[0]);
    backward_net(params.nets[1], cache.acts[1], {dout.value}, grads.nets[1]);
  }
}

GaussianStats gaussian_head(std::span<const double> mean, std::span<const double> log_std,
                            std::span<const double> action) {
  if (mean.size() != log_std.size() || mean.size() != action.size()) {
    throw ConfigError("gaussian_head: length mismatch");
  }
  constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)
  GaussianStats g;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (!std::isfinite(mean[i]) || !std::isfinite(log_std[i]) || !std::isfinite(action[i])) {
      throw ConfigError("gaussian_head: non-finite input");
    }
    const double z = (action[i] - mean[i]) * std::exp(-log_std[i]);
    g.log_prob += -0.5 * z * z - log_std[i] - kHalfLog2Pi;
    g.entropy += log_std[i] + 0.5 + kHalfLog2Pi;
  }
  return g;
}

AdamState adam_init(const MlpParams& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, const AdamConfig& cfg) {
  check_same_shape(params, grads);
  check_same_shape(params, state.m);
  check_same_shape(params, state.v);
  if (!grads.all_finite()) throw TrainingError("non-finite gradient passed to Adam");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const kernels::AdamCoefficients c{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps,
                                    1.0 - std::pow(cfg.beta1, t), 1.0 - std::pow(cfg.beta2, t)};
  const auto& k = kernels::active();

  std::vector<std::span<double>> p_bufs, m_bufs, v_bufs;
  std::vector<std::span<const double>> g_bufs;
  params.for_each_buffer([&](std::span<double> b) { p_bufs.push_back(b); });
  state.m.for_each_buffer([&](std::span<double> b) { m_bufs.push_back(b); });
  state.v.for_each_buffer([&](std::span<double> b) { v_bufs.push_back(b); });
  grads.for_each_buffer([&](std::span<const double> b) { g_bufs.push_back(b); });
  for (std::size_t i = 0; i < p_bufs.size(); ++i) {
    k.adam(p_bufs[i].data(), g_bufs[i].data(), m_bufs[i].data(), v_bufs[i].data(), p_bufs[i].size(), c);
  }
  params.clamp_log_std();
  if (!params.all_finite()) throw TrainingError("parameters became non-finite after Adam step");
}

}  // namespace rewardloop
