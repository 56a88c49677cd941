#include <fstream>

#include "rewardloop/error.hpp"
#include "rewardloop/ppo.hpp"

namespace rewardloop {
namespace {

constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const TrainedPolicy& policy, const std::filesystem::path& path) {
  nlohmann::json nets = nlohmann::json::array();
  for (const Mlp& net : policy.params.nets) {
    nlohmann::json layers = nlohmann::json::array();
    for (const DenseLayer& l : net.layers) {
      layers.push_back({{"in", l.in}, {"out", l.out}, {"weight", l.weight}, {"bias", l.bias}});
    }
    nets.push_back({{"layers", layers}});
  }
  const nlohmann::json j = {{"format", "rewardloop-policy"},
                            {"version", kCheckpointVersion},
                            {"shared_trunk", policy.params.shared_trunk},
                            {"log_std", policy.params.log_std},
                            {"train_seed", policy.train_seed},
                            {"env_steps", policy.env_steps},
                            {"final_mean_reward", policy.final_mean_reward},
                            {"nets", nets}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << j.dump();
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

TrainedPolicy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("checkpoint not found: " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("format") != "rewardloop-policy" || j.at("version").get<int>() != kCheckpointVersion) {
      throw ManifestError("unsupported checkpoint format in " + path.string());
    }
    TrainedPolicy p;
    p.params.shared_trunk = j.at("shared_trunk").get<bool>();
    p.params.log_std = j.at("log_std").get<std::array<double, kActionSize>>();
    p.train_seed = j.at("train_seed").get<std::uint64_t>();
    p.env_steps = j.at("env_steps").get<std::int64_t>();
    p.final_mean_reward = j.at("final_mean_reward").get<double>();
    for (const auto& jn : j.at("nets")) {
      Mlp net;
      for (const auto& jl : jn.at("layers")) {
        DenseLayer l{jl.at("in").get<std::size_t>(), jl.at("out").get<std::size_t>(),
                     jl.at("weight").get<std::vector<double>>(), jl.at("bias").get<std::vector<double>>()};
        if (l.weight.size() != l.in * l.out || l.bias.size() != l.out) {
          throw ManifestError("checkpoint layer shape mismatch in " + path.string());
        }
        if (!net.layers.empty() && net.layers.back().out != l.in) {
          throw ManifestError("checkpoint layers do not chain in " + path.string());
        }
        net.layers.push_back(std::move(l));
      }
      if (net.layers.empty()) throw ManifestError("checkpoint net has no layers in " + path.string());
      p.params.nets.push_back(std::move(net));
    }
    const std::size_t expected_nets = p.params.shared_trunk ? 1 : 2;
    if (p.params.nets.size() != expected_nets) throw ManifestError("checkpoint net count mismatch in " + path.string());
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace rewardloop
