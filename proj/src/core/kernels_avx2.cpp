#include <cmath>
#include <cstring>
#include <immintrin.h>

#include "omni/core/kernels.hpp"

// AVX2/FMA lane. This is the only translation unit compiled with -mavx2; the
// dispatcher guarantees none of these run unless cpuid reports AVX2+FMA.
//
// gemm uses the i-k-j order with the j loop vectorized: per output element
// the additions happen in the same ascending-k order as the scalar lane, but
// FMA contracts mul+add and the tail uses std::fma to match, so results agree
// to rounding, not bitwise. Reductions keep a single vector accumulator and
// combine its 8 (or 4) slots in a fixed order, which makes them deterministic
// within the lane even though the association differs from the reference.

namespace omni::kernels {
namespace {

void gemm_f32_avx2(int64_t M, int64_t N, int64_t K, const float* A,
                   const float* B, float* C, bool accumulate) {
  for (int64_t i = 0; i < M; ++i) {
    float* c = C + i * N;
    if (!accumulate) std::memset(c, 0, sizeof(float) * static_cast<size_t>(N));
    const float* a = A + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const float* b = B + k * N;
      __m256 av = _mm256_set1_ps(a[k]);
      int64_t j = 0;
      for (; j + 8 <= N; j += 8) {
        __m256 cv = _mm256_loadu_ps(c + j);
        cv = _mm256_fmadd_ps(av, _mm256_loadu_ps(b + j), cv);
        _mm256_storeu_ps(c + j, cv);
      }
      for (; j < N; ++j) c[j] = std::fma(a[k], b[j], c[j]);
    }
  }
}

void gemm_f64_avx2(int64_t M, int64_t N, int64_t K, const double* A,
                   const double* B, double* C, bool accumulate) {
  for (int64_t i = 0; i < M; ++i) {
    double* c = C + i * N;
    if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(N));
    const double* a = A + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const double* b = B + k * N;
      __m256d av = _mm256_set1_pd(a[k]);
      int64_t j = 0;
      for (; j + 4 <= N; j += 4) {
        __m256d cv = _mm256_loadu_pd(c + j);
        cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + j), cv);
        _mm256_storeu_pd(c + j, cv);
      }
      for (; j < N; ++j) c[j] = std::fma(a[k], b[j], c[j]);
    }
  }
}

void add_f32_avx2(int64_t n, const float* a, const float* b, float* out) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void add_f64_avx2(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_f32_avx2(int64_t n, const float* a, const float* b, float* out) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_f64_avx2(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

// axpy/scale deliberately avoid FMA: they sit on the gradient-accumulation
// and optimizer paths where the lanes are promised bit-identical.
void axpy_f32_avx2(int64_t n, float alpha, const float* x, float* y) {
  __m256 av = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 prod = _mm256_mul_ps(av, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void axpy_f64_avx2(int64_t n, double alpha, const double* x, double* y) {
  __m256d av = _mm256_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void scale_f32_avx2(int64_t n, float alpha, const float* x, float* out) {
  __m256 av = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void scale_f64_avx2(int64_t n, double alpha, const double* x, double* out) {
  __m256d av = _mm256_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

double dot_f32_avx2(int64_t n, const float* a, const float* b) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    // accumulate in f64 to match the reference's accumulator width
    __m256d av = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
    __m256d bv = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(av, bv));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = ((lanes[0] + lanes[1]) + lanes[2]) + lanes[3];
  for (; i < n; ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double dot_f64_avx2(int64_t n, const double* a, const double* b) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                           _mm256_loadu_pd(b + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = ((lanes[0] + lanes[1]) + lanes[2]) + lanes[3];
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_f32_avx2(int64_t n, const float* x) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm_loadu_ps(x + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = ((lanes[0] + lanes[1]) + lanes[2]) + lanes[3];
  for (; i < n; ++i) s += x[i];
  return s;
}

double sum_f64_avx2(int64_t n, const double* x) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = ((lanes[0] + lanes[1]) + lanes[2]) + lanes[3];
  for (; i < n; ++i) s += x[i];
  return s;
}

// Mirrors the scalar lane operation-for-operation (no FMA; _mm256_sqrt_ps and
// division are IEEE correctly-rounded) so the update is bit-identical.
void adamw_f32_avx2(int64_t n, float* p, const float* g, float* m, float* v,
                    float lr, float beta1, float beta2, float eps, float wd,
                    float c1, float c2) {
  __m256 b1 = _mm256_set1_ps(beta1), ob1 = _mm256_set1_ps(1.0f - beta1);
  __m256 b2 = _mm256_set1_ps(beta2), ob2 = _mm256_set1_ps(1.0f - beta2);
  __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps);
  __m256 vwd = _mm256_set1_ps(wd), vc1 = _mm256_set1_ps(c1), vc2 = _mm256_set1_ps(c2);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)),
                              _mm256_mul_ps(ob1, gv));
    __m256 vv = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                              _mm256_mul_ps(ob2, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    __m256 mhat = _mm256_mul_ps(mv, vc1);
    __m256 vhat = _mm256_mul_ps(vv, vc2);
    __m256 pv = _mm256_loadu_ps(p + i);
    __m256 upd = _mm256_add_ps(
        _mm256_div_ps(mhat, _mm256_add_ps(_mm256_sqrt_ps(vhat), veps)),
        _mm256_mul_ps(vwd, pv));
    _mm256_storeu_ps(p + i, _mm256_sub_ps(pv, _mm256_mul_ps(vlr, upd)));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * (g[i] * g[i]);
    float mhat = m[i] * c1;
    float vhat = v[i] * c2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
  }
}

void adamw_f64_avx2(int64_t n, double* p, const double* g, double* m, double* v,
                    double lr, double beta1, double beta2, double eps, double wd,
                    double c1, double c2) {
  __m256d b1 = _mm256_set1_pd(beta1), ob1 = _mm256_set1_pd(1.0 - beta1);
  __m256d b2 = _mm256_set1_pd(beta2), ob2 = _mm256_set1_pd(1.0 - beta2);
  __m256d vlr = _mm256_set1_pd(lr), veps = _mm256_set1_pd(eps);
  __m256d vwd = _mm256_set1_pd(wd), vc1 = _mm256_set1_pd(c1), vc2 = _mm256_set1_pd(c2);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                               _mm256_mul_pd(ob1, gv));
    __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                               _mm256_mul_pd(ob2, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    __m256d mhat = _mm256_mul_pd(mv, vc1);
    __m256d vhat = _mm256_mul_pd(vv, vc2);
    __m256d pv = _mm256_loadu_pd(p + i);
    __m256d upd = _mm256_add_pd(
        _mm256_div_pd(mhat, _mm256_add_pd(_mm256_sqrt_pd(vhat), veps)),
        _mm256_mul_pd(vwd, pv));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(pv, _mm256_mul_pd(vlr, upd)));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
    double mhat = m[i] * c1;
    double vhat = v[i] * c2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
  }
}

}  // namespace

const Backend& avx2_backend() {
  static const Backend b = {
      "avx2",        gemm_f32_avx2, gemm_f64_avx2, add_f32_avx2,
      add_f64_avx2,  mul_f32_avx2,  mul_f64_avx2,  axpy_f32_avx2,
      axpy_f64_avx2, scale_f32_avx2, scale_f64_avx2, dot_f32_avx2,
      dot_f64_avx2,  sum_f32_avx2,  sum_f64_avx2,  adamw_f32_avx2,
      adamw_f64_avx2,
  };
  return b;
}

}  // namespace omni::kernels
