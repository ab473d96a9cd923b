#include <cstdlib>
#include <string>

#include "omni/core/error.hpp"
#include "omni/core/kernels.hpp"

namespace omni::kernels {
namespace {

const Backend* g_active = nullptr;

const Backend* pick_initial() {
  if (const char* env = std::getenv("ONEREPO_KERNEL_LANE")) {
    std::string v(env);
    if (v == "scalar") return &scalar_backend();
    if (v == "avx2") {
      if (!cpu_has_avx2())
        throw ArgError("ONEREPO_KERNEL_LANE=avx2 but the CPU lacks AVX2/FMA");
      return &avx2_backend();
    }
    if (!v.empty() && v != "auto")
      throw ArgError("ONEREPO_KERNEL_LANE must be scalar, avx2 or auto (got '" +
                     v + "')");
  }
  return cpu_has_avx2() ? &avx2_backend() : &scalar_backend();
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Backend& active() {
  if (!g_active) g_active = pick_initial();
  return *g_active;
}

void force(Lane lane) {
  if (lane == Lane::Avx2 && !cpu_has_avx2())
    throw ArgError("cannot force AVX2 kernels: CPU lacks AVX2/FMA");
  g_active = (lane == Lane::Avx2) ? &avx2_backend() : &scalar_backend();
}

std::string active_name() { return active().name; }

}  // namespace omni::kernels
