// AArch64 Advanced SIMD variants. NEON is mandatory on AArch64, so no runtime
// check is needed; vfmaq is deliberately avoided to stay bit-identical with
// the scalar reference.
#if defined(__aarch64__)

#include <arm_neon.h>

#include "codistillery/kernels.hpp"

namespace codistillery::kernels {
namespace {

constexpr std::size_t kLanes = 2;

void add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const double* a, double s, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) vst1q_f64(out + i, vmulq_f64(vs, vld1q_f64(a + i)));
  for (; i < n; ++i) out[i] = s * a[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void relu(const double* a, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const float64x2_t v = vld1q_f64(a + i);
    const uint64x2_t gt = vcgtq_f64(v, zero);
    vst1q_f64(out + i, vreinterpretq_f64_u64(vandq_u64(vreinterpretq_u64_f64(v), gt)));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_backward_acc(const double* x, const double* g, double* acc, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const uint64x2_t gt = vcgtq_f64(vld1q_f64(x + i), zero);
    const float64x2_t pass =
        vreinterpretq_f64_u64(vandq_u64(vreinterpretq_u64_f64(vld1q_f64(g + i)), gt));
    vst1q_f64(acc + i, vaddq_f64(vld1q_f64(acc + i), pass));
  }
  for (; i < n; ++i) acc[i] = acc[i] + (x[i] > 0.0 ? g[i] : 0.0);
}

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    std::size_t j0 = 0;
    for (; j0 + 4 * kLanes <= n; j0 += 4 * kLanes) {
      float64x2_t c0 = vdupq_n_f64(0.0), c1 = c0, c2 = c0, c3 = c0;
      for (std::size_t p = 0; p < k; ++p) {
        const float64x2_t av = vdupq_n_f64(a[i * k + p]);
        const double* brow = b + p * n + j0;
        c0 = vaddq_f64(c0, vmulq_f64(av, vld1q_f64(brow)));
        c1 = vaddq_f64(c1, vmulq_f64(av, vld1q_f64(brow + 2)));
        c2 = vaddq_f64(c2, vmulq_f64(av, vld1q_f64(brow + 4)));
        c3 = vaddq_f64(c3, vmulq_f64(av, vld1q_f64(brow + 6)));
      }
      vst1q_f64(crow + j0, c0);
      vst1q_f64(crow + j0 + 2, c1);
      vst1q_f64(crow + j0 + 4, c2);
      vst1q_f64(crow + j0 + 6, c3);
    }
    for (std::size_t j = j0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = acc + a[i * k + p] * b[p * n + j];
      crow[j] = acc;
    }
  }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable t{Isa::neon, "neon", add,  sub,  mul, scale,
                             axpy,      relu,   relu_backward_acc, gemm};
  return t;
}

}  // namespace codistillery::kernels

#endif  // __aarch64__
