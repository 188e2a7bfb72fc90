#include <atomic>
#include <cstdlib>
#include <string>

#include "codistillery/errors.hpp"
#include "codistillery/kernels.hpp"

namespace codistillery::kernels {
namespace {

std::atomic<const KernelTable*> g_active{nullptr};

const KernelTable* pick_default() {
  if (const char* env = std::getenv("CODISTILLERY_KERNELS")) {
    const std::string_view name(env);
    if (name != "auto") {
      const auto isa = parse_isa(name);
      if (!isa) throw ContractError("CODISTILLERY_KERNELS: unknown kernel set '" + std::string(name) + "'");
      return &table(*isa);
    }
  }
  const auto all = available();
  return all.back();
}

}  // namespace

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) throw ContractError("kernel set not supported on this CPU");
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::avx2:
      return avx2_table();
#endif
#if defined(__aarch64__)
    case Isa::neon:
      return neon_table();
#endif
    default:
      return scalar_table();
  }
}

std::vector<const KernelTable*> available() {
  std::vector<const KernelTable*> out{&scalar_table()};
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (supported(isa)) out.push_back(&table(isa));
  }
  return out;
}

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = pick_default();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

void select(Isa isa) { g_active.store(&table(isa), std::memory_order_release); }

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "neon") return Isa::neon;
  return std::nullopt;
}

}  // namespace codistillery::kernels
