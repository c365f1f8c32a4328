#include <cstdlib>
#include <stdexcept>
#include <string>

#include "sct/simd/kernels.hpp"

namespace sct::simd {

std::string_view to_string(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool available(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(SCT_HAVE_AVX2_TU)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!available(isa)) throw std::runtime_error("SIMD variant not available: " + std::string(to_string(isa)));
#if defined(SCT_HAVE_AVX2_TU)
  if (isa == Isa::Avx2) return detail::kAvx2Table;
#endif
  return detail::kScalarTable;
}

namespace {

const KernelTable& select() {
  const char* env = std::getenv("SCT_SIMD");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return detail::kScalarTable;
  if (want == "avx2") return kernels_for(Isa::Avx2);
  return available(Isa::Avx2) ? kernels_for(Isa::Avx2) : detail::kScalarTable;
}

}  // namespace

const KernelTable& kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace sct::simd
