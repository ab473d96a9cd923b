#pragma once

#include <cstdint>
#include <string>

namespace omni::kernels {

// Hot arithmetic loops exist in two lanes: a scalar reference (the semantic
// ground truth) and an AVX2 variant. One lane is picked per process at first
// use, so a given run is deterministic end to end. Elementwise ops and the
// AdamW update use identical arithmetic in both lanes (no FMA) and are tested
// bit-exact; gemm/dot/sum reassociate and are tested to tolerance.

enum class Lane { Scalar, Avx2 };

struct Backend {
  const char* name;

  // C[M x N] = A[M x K] * B[K x N], row-major; accumulate adds into C.
  void (*gemm_f32)(int64_t M, int64_t N, int64_t K, const float* A,
                   const float* B, float* C, bool accumulate);
  void (*gemm_f64)(int64_t M, int64_t N, int64_t K, const double* A,
                   const double* B, double* C, bool accumulate);

  // out[i] = a[i] + b[i]
  void (*add_f32)(int64_t n, const float* a, const float* b, float* out);
  void (*add_f64)(int64_t n, const double* a, const double* b, double* out);
  // out[i] = a[i] * b[i]
  void (*mul_f32)(int64_t n, const float* a, const float* b, float* out);
  void (*mul_f64)(int64_t n, const double* a, const double* b, double* out);
  // y[i] += alpha * x[i]
  void (*axpy_f32)(int64_t n, float alpha, const float* x, float* y);
  void (*axpy_f64)(int64_t n, double alpha, const double* x, double* y);
  // out[i] = alpha * x[i]
  void (*scale_f32)(int64_t n, float alpha, const float* x, float* out);
  void (*scale_f64)(int64_t n, double alpha, const double* x, double* out);

  double (*dot_f32)(int64_t n, const float* a, const float* b);
  double (*dot_f64)(int64_t n, const double* a, const double* b);
  double (*sum_f32)(int64_t n, const float* x);
  double (*sum_f64)(int64_t n, const double* x);

  // Decoupled-weight-decay Adam step on one flat parameter. c1/c2 are the
  // precomputed bias corrections 1/(1-beta^t). Frozen params never reach here.
  void (*adamw_f32)(int64_t n, float* p, const float* g, float* m, float* v,
                    float lr, float beta1, float beta2, float eps, float wd,
                    float c1, float c2);
  void (*adamw_f64)(int64_t n, double* p, const double* g, double* m, double* v,
                    double lr, double beta1, double beta2, double eps, double wd,
                    double c1, double c2);
};

const Backend& scalar_backend();
const Backend& avx2_backend();
bool cpu_has_avx2();

// The process-wide active backend. Honors ONEREPO_KERNEL_LANE=scalar|avx2|auto
// on first call; `force` overrides it (used by the equivalence tests).
const Backend& active();
void force(Lane lane);
std::string active_name();

}  // namespace omni::kernels
