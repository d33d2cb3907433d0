#include <atomic>
#include <cstdlib>
#include <string>

#include "pgs/error.hpp"
#include "pgs/simd.hpp"

namespace pgs::simd {

std::string_view to_string(Isa isa) noexcept {
  return isa == Isa::Avx2 ? "avx2" : "scalar";
}

bool supported(Isa isa) noexcept {
  if (isa == Isa::Scalar) return true;
#if defined(PGS_BUILD_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) fail(ErrorKind::InvalidArgument, "ISA not supported on this machine");
#if defined(PGS_BUILD_AVX2)
  if (isa == Isa::Avx2) return detail::kAvx2Table;
#endif
  return detail::kScalarTable;
}

namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("PGS_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &detail::kScalarTable;
  }
  return supported(Isa::Avx2) ? &table(Isa::Avx2) : &detail::kScalarTable;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{initial_table()};
  return ptr;
}

}  // namespace

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

Isa active_isa() noexcept { return active().isa; }

void set_active(Isa isa) { current().store(&table(isa), std::memory_order_relaxed); }

}  // namespace pgs::simd
