#pragma once

// Data-parallel inner loops behind Tensor and the autodiff tape.
//
// Every variant must be bit-identical to the scalar reference. Vector lanes
// therefore only ever span independent output elements: no kernel here
// reassociates a sum, and none uses fused multiply-add. Reductions whose
// order is part of a contract (sums, dot products) stay scalar and live in
// tensor.cpp.

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace codistillery::kernels {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  Isa isa;
  std::string_view name;

  // out[i] = a[i] op b[i]. `out` may alias either input.
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = s * a[i]
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  // y[i] = y[i] + alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = a[i] > 0 ? a[i] : +0
  void (*relu)(const double* a, double* out, std::size_t n);
  // acc[i] = acc[i] + (x[i] > 0 ? g[i] : +0)
  void (*relu_backward_acc)(const double* x, const double* g, double* acc, std::size_t n);
  // c[m x n] = a[m x k] * b[k x n], row-major. Each c[i][j] is accumulated
  // from +0 over p = 0..k-1 in ascending order.
  void (*gemm)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
};

const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif
#if defined(__aarch64__)
const KernelTable& neon_table();
#endif

/// True when the running CPU can execute `isa`.
bool supported(Isa isa);

/// Kernel table for `isa`; throws ContractError if unsupported here.
const KernelTable& table(Isa isa);

/// Tables for every ISA the running CPU supports, scalar first.
std::vector<const KernelTable*> available();

/// The table used by Tensor operations. Chosen on first use: the widest
/// supported ISA, unless CODISTILLERY_KERNELS=scalar|avx2|neon overrides.
const KernelTable& active();

/// Force a specific table (tests and benchmarks).
void select(Isa isa);

std::optional<Isa> parse_isa(std::string_view name);

}  // namespace codistillery::kernels
