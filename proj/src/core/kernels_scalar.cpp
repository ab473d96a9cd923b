#include <cmath>

#include "omni/core/kernels.hpp"

// Reference lane. Written for clarity: textbook loops, sequential reduction
// order. The AVX2 lane is validated against these implementations.

namespace omni::kernels {
namespace {

template <typename T>
void gemm_ref(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
              bool accumulate) {
  for (int64_t i = 0; i < M; ++i) {
    for (int64_t j = 0; j < N; ++j) {
      T acc = accumulate ? C[i * N + j] : T(0);
      for (int64_t k = 0; k < K; ++k) acc += A[i * K + k] * B[k * N + j];
      C[i * N + j] = acc;
    }
  }
}

template <typename T>
void add_ref(int64_t n, const T* a, const T* b, T* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul_ref(int64_t n, const T* a, const T* b, T* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void axpy_ref(int64_t n, T alpha, const T* x, T* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

template <typename T>
void scale_ref(int64_t n, T alpha, const T* x, T* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <typename T>
double dot_ref(int64_t n, const T* a, const T* b) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

template <typename T>
double sum_ref(int64_t n, const T* x) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

// Identical arithmetic to the AVX2 lane (mul then add, no fused ops), so the
// two lanes produce bit-identical parameter trajectories.
template <typename T>
void adamw_ref(int64_t n, T* p, const T* g, T* m, T* v, T lr, T beta1, T beta2,
               T eps, T wd, T c1, T c2) {
  for (int64_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * (g[i] * g[i]);
    T mhat = m[i] * c1;
    T vhat = v[i] * c2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
  }
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend b = {
      "scalar",    gemm_ref<float>, gemm_ref<double>,  add_ref<float>,
      add_ref<double>, mul_ref<float>,  mul_ref<double>,   axpy_ref<float>,
      axpy_ref<double>, scale_ref<float>, scale_ref<double>, dot_ref<float>,
      dot_ref<double>, sum_ref<float>,  sum_ref<double>,   adamw_ref<float>,
      adamw_ref<double>,
  };
  return b;
}

}  // namespace omni::kernels
