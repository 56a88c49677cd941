#include <arm_neon.h>

#include "rewardloop/kernels.hpp"

namespace rewardloop::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void affine_neon(const double* w, const double* bias, const double* x, double* y,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = bias[r] + dot_neon(w + r * cols, x, cols);
}

void affine_transpose_acc_neon(const double* w, const double* g, double* gx,
                               std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    const float64x2_t gv = vdupq_n_f64(gr);
    const double* row = w + r * cols;
    std::size_t c = 0;
    for (; c + 2 <= cols; c += 2) vst1q_f64(gx + c, vfmaq_f64(vld1q_f64(gx + c), vld1q_f64(row + c), gv));
    for (; c < cols; ++c) gx[c] += row[c] * gr;
  }
}

void rank1_acc_neon(double* gw, const double* g, const double* x, std::size_t rows,
                    std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    const float64x2_t gv = vdupq_n_f64(gr);
    double* row = gw + r * cols;
    std::size_t c = 0;
    for (; c + 2 <= cols; c += 2) vst1q_f64(row + c, vfmaq_f64(vld1q_f64(row + c), gv, vld1q_f64(x + c)));
    for (; c < cols; ++c) row[c] += gr * x[c];
  }
}

}  // namespace

// Adam is memory-bound and small; the scalar loop is reused.
const KernelTable* neon_table() {
  static const KernelTable table{Isa::Neon,  "neon",      dot_neon, affine_neon, affine_transpose_acc_neon,
                                 rank1_acc_neon, scalar_table().adam};
  return &table;
}

}  // namespace rewardloop::kernels
