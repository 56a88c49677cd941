#include <atomic>
#include <cstdlib>
#include <string>

#include "rewardloop/error.hpp"
#include "rewardloop/kernels.hpp"

namespace rewardloop::kernels {

#if !defined(REWARDLOOP_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif
#if !defined(REWARDLOOP_HAVE_NEON)
const KernelTable* neon_table() { return nullptr; }
#endif

namespace {

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return &scalar_table();
    case Isa::Avx2: return avx2_table();
    case Isa::Neon: return neon_table();
  }
  return nullptr;
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("REWARDLOOP_SIMD")) {
    const std::string want(env);
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
      if (want == isa_name(isa) && cpu_supports(isa)) return table_for(isa);
    }
  }
  if (cpu_supports(Isa::Avx2)) return avx2_table();
  if (cpu_supports(Isa::Neon)) return neon_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(REWARDLOOP_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(REWARDLOOP_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "?";
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) {
  if (!cpu_supports(isa)) throw ConfigError("instruction set '" + std::string(isa_name(isa)) + "' is not available");
  current().store(table_for(isa), std::memory_order_release);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("dot: length mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

void affine(std::span<const double> w, std::span<const double> bias, std::span<const double> x,
            std::span<double> y) {
  if (bias.size() != y.size() || w.size() != y.size() * x.size()) throw ConfigError("affine: shape mismatch");
  active().affine(w.data(), bias.data(), x.data(), y.data(), y.size(), x.size());
}

}  // namespace rewardloop::kernels
