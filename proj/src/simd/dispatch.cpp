#include <atomic>
#include <cstdlib>
#include <string>
#include <string_view>

#include "fmp/error.hpp"
#include "fmp/simd/kernels.hpp"

namespace fmp::simd {

#ifndef FMP_HAVE_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif

namespace {

std::atomic<const KernelTable*> g_active{nullptr};

const KernelTable& resolve_default() {
  const char* env = std::getenv("FMP_SIMD");
  const std::string_view choice = env ? env : "auto";
  if (choice == "scalar") return scalar_kernels();
  if (choice == "avx2") {
    require(cpu_supports(Isa::avx2), ErrorCode::invalid_argument,
            "FMP_SIMD=avx2 requested but AVX2 is unavailable");
    return *avx2_kernels();
  }
  require(choice == "auto", ErrorCode::invalid_argument,
          "FMP_SIMD must be scalar, avx2 or auto, got '" + std::string(choice) + "'");
  if (cpu_supports(Isa::avx2)) return *avx2_kernels();
  return scalar_kernels();
}

}  // namespace

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(__i386__)
      return avx2_kernels() != nullptr && __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& active_kernels() {
  const KernelTable* table = g_active.load(std::memory_order_acquire);
  if (table == nullptr) {
    table = &resolve_default();
    g_active.store(table, std::memory_order_release);
  }
  return *table;
}

void select_kernels(Isa isa) {
  require(cpu_supports(isa), ErrorCode::invalid_argument,
          std::string("kernel variant unavailable: ") + isa_name(isa));
  g_active.store(isa == Isa::avx2 ? avx2_kernels() : &scalar_kernels(),
                 std::memory_order_release);
}

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace fmp::simd
