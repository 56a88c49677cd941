#pragma once

// Dense linear-algebra inner loops used by the network. Each instruction set
// provides the same table; the scalar table is the reference that the
// vectorised ones are tested against.

#include <cstddef>
#include <span>
#include <string_view>

namespace rewardloop::kernels {

enum class Isa { Scalar, Avx2, Neon };

struct AdamCoefficients {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  const char* name;

  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[r] = bias[r] + sum_c w[r * cols + c] * x[c]
  void (*affine)(const double* w, const double* bias, const double* x, double* y,
                 std::size_t rows, std::size_t cols);
  // gx[c] += sum_r w[r * cols + c] * g[r]
  void (*affine_transpose_acc)(const double* w, const double* g, double* gx,
                               std::size_t rows, std::size_t cols);
  // gw[r * cols + c] += g[r] * x[c]
  void (*rank1_acc)(double* gw, const double* g, const double* x, std::size_t rows,
                    std::size_t cols);
  // Bias-corrected Adam on n parameters, updating moments in place.
  void (*adam)(double* param, const double* grad, double* m, double* v, std::size_t n,
               const AdamCoefficients& c);
};

const KernelTable& scalar_table();
// nullptr when the instruction set was not compiled in.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool cpu_supports(Isa isa);
std::string_view isa_name(Isa isa);

// Table used by the network. Chosen on first use from the best instruction set
// the CPU supports; REWARDLOOP_SIMD=scalar|avx2|neon overrides the choice.
const KernelTable& active();
// Forces a specific table (tests, benchmarks). Throws ConfigError if the
// instruction set is unavailable.
void select(Isa isa);

// Span-checked conveniences over active().
double dot(std::span<const double> a, std::span<const double> b);
void affine(std::span<const double> w, std::span<const double> bias, std::span<const double> x,
            std::span<double> y);

}  // namespace rewardloop::kernels
