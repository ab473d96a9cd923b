#include "omni/core/ops.hpp"

#include <cmath>
#include <numbers>

#include "omni/core/kernels.hpp"

namespace omni {
namespace {

// Thin dtype-dispatch shims over the active kernel backend.
template <typename T> struct Kern;
template <> struct Kern<float> {
  static void gemm(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
                   float* C, bool acc) {
    kernels::active().gemm_f32(M, N, K, A, B, C, acc);
  }
  static void add(int64_t n, const float* a, const float* b, float* o) {
    kernels::active().add_f32(n, a, b, o);
  }
  static void mul(int64_t n, const float* a, const float* b, float* o) {
    kernels::active().mul_f32(n, a, b, o);
  }
  static void axpy(int64_t n, float al, const float* x, float* y) {
    kernels::active().axpy_f32(n, al, x, y);
  }
  static void scale(int64_t n, float al, const float* x, float* o) {
    kernels::active().scale_f32(n, al, x, o);
  }
  static double dot(int64_t n, const float* a, const float* b) {
    return kernels::active().dot_f32(n, a, b);
  }
};
template <> struct Kern<double> {
  static void gemm(int64_t M, int64_t N, int64_t K, const double* A, const double* B,
                   double* C, bool acc) {
    kernels::active().gemm_f64(M, N, K, A, B, C, acc);
  }
  static void add(int64_t n, const double* a, const double* b, double* o) {
    kernels::active().add_f64(n, a, b, o);
  }
  static void mul(int64_t n, const double* a, const double* b, double* o) {
    kernels::active().mul_f64(n, a, b, o);
  }
  static void axpy(int64_t n, double al, const double* x, double* y) {
    kernels::active().axpy_f64(n, al, x, y);
  }
  static void scale(int64_t n, double al, const double* x, double* o) {
    kernels::active().scale_f64(n, al, x, o);
  }
  static double dot(int64_t n, const double* a, const double* b) {
    return kernels::active().dot_f64(n, a, b);
  }
};

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined input tensor");
}

Dtype same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw ShapeError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) +
                     " vs " + dtype_name(b.dtype()) + ")");
  return a.dtype();
}

std::shared_ptr<TensorNode> result_node(std::vector<int64_t> shape, Dtype dt,
                                        const char* op,
                                        std::vector<std::shared_ptr<TensorNode>> ins) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->dtype = dt;
  n->is_leaf = false;
  n->op = op;
  size_t count = static_cast<size_t>(n->numel());
  if (dt == Dtype::F32)
    n->f32.assign(count, 0.0f);
  else
    n->f64.assign(count, 0.0);
  bool req = false;
  for (const auto& in : ins) req = req || in->requires_grad;
  n->requires_grad = req;
  // Constants drop their history so dead subgraphs free immediately.
  if (req) n->inputs = std::move(ins);
  return n;
}

Tensor finish(std::shared_ptr<TensorNode> n) {
  check_finite(*n, n->op);
  return Tensor(std::move(n));
}

template <typename T>
void accum(TensorNode& n, const T* delta) {
  if (!n.requires_grad) return;
  auto g = n.grad<T>();
  Kern<T>::axpy(n.numel(), T(1), delta, g.data());
}

template <typename T>
void accum(TensorNode& n, const std::vector<T>& delta) {
  accum(n, delta.data());
}

// ---- add ----------------------------------------------------------------

template <typename T>
void add_bw(TensorNode& self) {
  const T* g = self.grad<T>().data();
  accum<T>(*self.inputs[0], g);
  accum<T>(*self.inputs[1], g);
}

// ---- mul ----------------------------------------------------------------

template <typename T>
void mul_bw(TensorNode& self) {
  auto& a = *self.inputs[0];
  auto& b = *self.inputs[1];
  const T* g = self.grad<T>().data();
  int64_t n = self.numel();
  std::vector<T> tmp(static_cast<size_t>(n));
  if (a.requires_grad) {
    Kern<T>::mul(n, g, b.data<T>().data(), tmp.data());
    accum(a, tmp);
  }
  if (b.requires_grad) {
    Kern<T>::mul(n, g, a.data<T>().data(), tmp.data());
    accum(b, tmp);
  }
}

// ---- scale --------------------------------------------------------------

template <typename T>
void scale_bw(TensorNode& self, double alpha) {
  auto& a = *self.inputs[0];
  if (!a.requires_grad) return;
  const T* g = self.grad<T>().data();
  Kern<T>::axpy(self.numel(), static_cast<T>(alpha), g, a.grad<T>().data());
}

// ---- add_bias -----------------------------------------------------------

template <typename T>
void add_bias_bw(TensorNode& self) {
  auto& x = *self.inputs[0];
  auto& b = *self.inputs[1];
  const T* g = self.grad<T>().data();
  accum<T>(x, g);
  if (b.requires_grad) {
    int64_t R = self.shape[0], D = self.shape[1];
    auto gb = b.grad<T>();
    for (int64_t r = 0; r < R; ++r)
      for (int64_t d = 0; d < D; ++d) gb[static_cast<size_t>(d)] += g[r * D + d];
  }
}

// ---- matmul -------------------------------------------------------------

template <typename T>
void matmul_bw(TensorNode& self) {
  auto& A = *self.inputs[0];
  auto& B = *self.inputs[1];
  int64_t M = A.shape[0], K = A.shape[1], N = B.shape[1];
  const T* g = self.grad<T>().data();
  if (A.requires_grad) {
    // dA += dC * B^T
    std::vector<T> BT(static_cast<size_t>(N * K));
    const T* b = B.data<T>().data();
    for (int64_t k = 0; k < K; ++k)
      for (int64_t n = 0; n < N; ++n) BT[static_cast<size_t>(n * K + k)] = b[k * N + n];
    Kern<T>::gemm(M, K, N, g, BT.data(), A.grad<T>().data(), true);
  }
  if (B.requires_grad) {
    // dB += A^T * dC
    std::vector<T> AT(static_cast<size_t>(K * M));
    const T* a = A.data<T>().data();
    for (int64_t m = 0; m < M; ++m)
      for (int64_t k = 0; k < K; ++k) AT[static_cast<size_t>(k * M + m)] = a[m * K + k];
    Kern<T>::gemm(K, N, M, AT.data(), g, B.grad<T>().data(), true);
  }
}

// ---- transpose / reshape ------------------------------------------------

template <typename T>
void transpose_fw(const T* a, T* out, int64_t R, int64_t C) {
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) out[c * R + r] = a[r * C + c];
}

template <typename T>
void transpose_bw(TensorNode& self) {
  auto& a = *self.inputs[0];
  if (!a.requires_grad) return;
  int64_t R = a.shape[0], C = a.shape[1];
  const T* g = self.grad<T>().data();
  std::vector<T> tmp(static_cast<size_t>(R * C));
  // g has shape [C x R]; transpose back to [R x C]
  transpose_fw(g, tmp.data(), C, R);
  accum(a, tmp);
}

// ---- concat / slice -----------------------------------------------------

template <typename T>
void concat_rows_bw(TensorNode& self) {
  const T* g = self.grad<T>().data();
  int64_t off = 0;
  for (auto& in : self.inputs) {
    int64_t n = in->numel();
    if (in->requires_grad)
      Kern<T>::axpy(n, T(1), g + off, in->grad<T>().data());
    off += n;
  }
}

template <typename T>
void concat_cols_bw(TensorNode& self) {
  int64_t R = self.shape[0], Dtot = self.shape[1];
  const T* g = self.grad<T>().data();
  int64_t off = 0;
  for (auto& in : self.inputs) {
    int64_t D = in->shape[1];
    if (in->requires_grad) {
      auto gi = in->grad<T>();
      for (int64_t r = 0; r < R; ++r)
        for (int64_t d = 0; d < D; ++d)
          gi[static_cast<size_t>(r * D + d)] += g[r * Dtot + off + d];
    }
    off += D;
  }
}

template <typename T>
void slice_rows_bw(TensorNode& self, int64_t lo, int64_t cols) {
  auto& a = *self.inputs[0];
  if (!a.requires_grad) return;
  const T* g = self.grad<T>().data();
  Kern<T>::axpy(self.numel(), T(1), g, a.grad<T>().data() + lo * cols);
}

template <typename T>
void slice_cols_bw(TensorNode& self, int64_t lo) {
  auto& a = *self.inputs[0];
  if (!a.requires_grad) return;
  int64_t R = self.shape[0], D = self.shape[1], C = a.shape[1];
  const T* g = self.grad<T>().data();
  auto ga = a.grad<T>();
  for (int64_t r = 0; r < R; ++r)
    for (int64_t d = 0; d < D; ++d)
      ga[static_cast<size_t>(r * C + lo + d)] += g[r * D + d];
}

// ---- gelu ---------------------------------------------------------------

template <typename T>
void gelu_fw(const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    T cdf = T(0.5) * (T(1) + std::erf(x[i] * T(std::numbers::sqrt2 / 2.0)));
    y[i] = x[i] * cdf;
  }
}

template <typename T>
void gelu_bw(TensorNode& self) {
  auto& a = *self.inputs[0];
  if (!a.requires_grad) return;
  const T* x = a.data<T>().data();
  const T* g = self.grad<T>().data();
  auto ga = a.grad<T>();
  int64_t n = self.numel();
  const T inv_sqrt2pi = T(1.0 / std::sqrt(2.0 * std::numbers::pi));
  for (int64_t i = 0; i < n; ++i) {
    T cdf = T(0.5) * (T(1) + std::erf(x[i] * T(std::numbers::sqrt2 / 2.0)));
    T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x[i] * x[i]);
    ga[static_cast<size_t>(i)] += g[i] * (cdf + x[i] * pdf);
  }
}

// ---- softmax ------------------------------------------------------------

template <typename T>
void softmax_fw(const T* x, T* y, int64_t R, int64_t C) {
  for (int64_t r = 0; r < R; ++r) {
    const T* xr = x + r * C;
    T* yr = y + r * C;
    T m = xr[0];
    for (int64_t c = 1; c < C; ++c) m = std::max(m, xr[c]);
    T sum = T(0);
    for (int64_t c = 0; c < C; ++c) {
      yr[c] = std::exp(xr[c] - m);
      sum += yr[c];
    }
    for (int64_t c = 0; c < C; ++c) yr[c] /= sum;
  }
}

template <typename T>
void softmax_bw(TensorNode& self) {
  auto& a = *self.inputs[0];
  if (!a.requires_grad) return;
  int64_t R = self.shape[0], C = self.shape[1];
  const T* y = self.data<T>().data();
  const T* g = self.grad<T>().data();
  auto ga = a.grad<T>();
  for (int64_t r = 0; r < R; ++r) {
    const T* yr = y + r * C;
    const T* gr = g + r * C;
    T s = T(0);
    for (int64_t c = 0; c < C; ++c) s += gr[c] * yr[c];
    for (int64_t c = 0; c < C; ++c)
      ga[static_cast<size_t>(r * C + c)] += yr[c] * (gr[c] - s);
  }
}

// ---- layer norm ---------------------------------------------------------

template <typename T>
void layer_norm_bw(TensorNode& self, const std::vector<T>& mean,
                   const std::vector<T>& rstd) {
  auto& x = *self.inputs[0];
  auto& gamma = *self.inputs[1];
  auto& beta = *self.inputs[2];
  int64_t R = self.shape[0], D = self.shape[1];
  const T* xs = x.data<T>().data();
  const T* gm = gamma.data<T>().data();
  const T* g = self.grad<T>().data();
  std::vector<T> xhat(static_cast<size_t>(D)), dxhat(static_cast<size_t>(D));
  for (int64_t r = 0; r < R; ++r) {
    const T* xr = xs + r * D;
    const T* gr = g + r * D;
    T mu = mean[static_cast<size_t>(r)], rs = rstd[static_cast<size_t>(r)];
    T m1 = T(0), m2 = T(0);
    for (int64_t d = 0; d < D; ++d) {
      xhat[static_cast<size_t>(d)] = (xr[d] - mu) * rs;
      dxhat[static_cast<size_t>(d)] = gr[d] * gm[d];
      m1 += dxhat[static_cast<size_t>(d)];
      m2 += dxhat[static_cast<size_t>(d)] * xhat[static_cast<size_t>(d)];
    }
    m1 /= T(D);
    m2 /= T(D);
    if (x.requires_grad) {
      auto gx = x.grad<T>();
      for (int64_t d = 0; d < D; ++d)
        gx[static_cast<size_t>(r * D + d)] +=
            rs * (dxhat[static_cast<size_t>(d)] - m1 -
                  xhat[static_cast<size_t>(d)] * m2);
    }
    if (gamma.requires_grad) {
      auto gg = gamma.grad<T>();
      for (int64_t d = 0; d < D; ++d)
        gg[static_cast<size_t>(d)] += gr[d] * xhat[static_cast<size_t>(d)];
    }
    if (beta.requires_grad) {
      auto gb = beta.grad<T>();
      for (int64_t d = 0; d < D; ++d) gb[static_cast<size_t>(d)] += gr[d];
    }
  }
}

// ---- conv2d -------------------------------------------------------------

struct ConvDims {
  int64_t Ci, H, W, Co, Kh, Kw, sh, sw, Ho, Wo;
  int64_t patch_rows() const { return Ci * Kh * Kw; }
  int64_t positions() const { return Ho * Wo; }
};

template <typename T>
std::vector<T> im2col(const T* x, const ConvDims& d) {
  std::vector<T> col(static_cast<size_t>(d.patch_rows() * d.positions()));
  int64_t P = d.positions();
  for (int64_t c = 0; c < d.Ci; ++c)
    for (int64_t kh = 0; kh < d.Kh; ++kh)
      for (int64_t kw = 0; kw < d.Kw; ++kw) {
        int64_t row = (c * d.Kh + kh) * d.Kw + kw;
        for (int64_t ho = 0; ho < d.Ho; ++ho)
          for (int64_t wo = 0; wo < d.Wo; ++wo)
            col[static_cast<size_t>(row * P + ho * d.Wo + wo)] =
                x[(c * d.H + ho * d.sh + kh) * d.W + wo * d.sw + kw];
      }
  return col;
}

template <typename T>
void col2im_accum(const std::vector<T>& dcol, const ConvDims& d, std::span<T> dx) {
  int64_t P = d.positions();
  for (int64_t c = 0; c < d.Ci; ++c)
    for (int64_t kh = 0; kh < d.Kh; ++kh)
      for (int64_t kw = 0; kw < d.Kw; ++kw) {
        int64_t row = (c * d.Kh + kh) * d.Kw + kw;
        for (int64_t ho = 0; ho < d.Ho; ++ho)
          for (int64_t wo = 0; wo < d.Wo; ++wo)
            dx[static_cast<size_t>((c * d.H + ho * d.sh + kh) * d.W + wo * d.sw +
                                   kw)] += dcol[static_cast<size_t>(row * P + ho * d.Wo + wo)];
      }
}

template <typename T>
void conv2d_bw(TensorNode& self, const ConvDims& d, const std::vector<T>& col) {
  auto& x = *self.inputs[0];
  auto& w = *self.inputs[1];
  auto& b = *self.inputs[2];
  int64_t CK = d.patch_rows(), P = d.positions();
  const T* g = self.grad<T>().data();  // [Co x P]
  if (w.requires_grad) {
    std::vector<T> colT(static_cast<size_t>(P * CK));
    transpose_fw(col.data(), colT.data(), CK, P);
    Kern<T>::gemm(d.Co, CK, P, g, colT.data(), w.grad<T>().data(), true);
  }
  if (b.requires_grad) {
    auto gb = b.grad<T>();
    for (int64_t co = 0; co < d.Co; ++co)
      for (int64_t p = 0; p < P; ++p) gb[static_cast<size_t>(co)] += g[co * P + p];
  }
  if (x.requires_grad) {
    std::vector<T> WT(static_cast<size_t>(CK * d.Co));
    transpose_fw(w.data<T>().data(), WT.data(), d.Co, CK);
    std::vector<T> dcol(static_cast<size_t>(CK * P));
    Kern<T>::gemm(CK, P, d.Co, WT.data(), g, dcol.data(), false);
    col2im_accum(dcol, d, x.grad<T>());
  }
}

// ---- embedding ----------------------------------------------------------

template <typename T>
void embedding_bw(TensorNode& self, const std::vector<int32_t>& ids) {
  auto& table = *self.inputs[0];
  if (!table.requires_grad) return;
  int64_t D = self.shape[1];
  const T* g = self.grad<T>().data();
  auto gt = table.grad<T>();
  for (size_t l = 0; l < ids.size(); ++l)
    Kern<T>::axpy(D, T(1), g + static_cast<int64_t>(l) * D,
                  gt.data() + static_cast<int64_t>(ids[l]) * D);
}

// ---- cross entropy ------------------------------------------------------

template <typename T>
void cross_entropy_bw(TensorNode& self, const std::vector<int32_t>& targets,
                      const std::vector<uint8_t>& mask, int64_t count) {
  auto& logits = *self.inputs[0];
  if (!logits.requires_grad) return;
  int64_t R = logits.shape[0], V = logits.shape[1];
  const T* ls = logits.data<T>().data();
  T gscale = self.grad<T>()[0] / T(count);
  auto gl = logits.grad<T>();
  std::vector<T> prob(static_cast<size_t>(V));
  for (int64_t r = 0; r < R; ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    softmax_fw(ls + r * V, prob.data(), 1, V);
    prob[static_cast<size_t>(targets[static_cast<size_t>(r)])] -= T(1);
    Kern<T>::axpy(V, gscale, prob.data(), gl.data() + r * V);
  }
}

// ---- segment max --------------------------------------------------------

template <typename T>
void segment_max_bw(TensorNode& self, const std::vector<int32_t>& arg, int64_t S) {
  auto& x = *self.inputs[0];
  if (!x.requires_grad) return;
  int64_t G = self.shape[0], D = self.shape[1];
  const T* g = self.grad<T>().data();
  auto gx = x.grad<T>();
  for (int64_t gi = 0; gi < G; ++gi)
    for (int64_t d = 0; d < D; ++d) {
      int64_t src = (gi * S + arg[static_cast<size_t>(gi * D + d)]) * D + d;
      gx[static_cast<size_t>(src)] += g[gi * D + d];
    }
}

// ---- expert mixing ------------------------------------------------------

template <typename T>
void mix_rows_bw(TensorNode& self, MixMode mode, int64_t K,
                 const std::vector<int32_t>& winner) {
  int64_t N = self.shape[0], D = self.shape[1];
  const T* g = self.grad<T>().data();
  // inputs: K experts, then (Weighted/ArgmaxOnly) the weight matrix.
  bool has_w = mode != MixMode::Mean;
  TensorNode* wnode = has_w ? self.inputs[static_cast<size_t>(K)].get() : nullptr;
  const T* w = has_w ? wnode->data<T>().data() : nullptr;
  for (int64_t k = 0; k < K; ++k) {
    auto& ek = *self.inputs[static_cast<size_t>(k)];
    for (int64_t n = 0; n < N; ++n) {
      T coeff = T(0);
      switch (mode) {
        case MixMode::Weighted: coeff = w[n * K + k]; break;
        case MixMode::Mean: coeff = T(1) / T(K); break;
        case MixMode::ArgmaxOnly:
          if (winner[static_cast<size_t>(n)] != k) continue;
          coeff = w[n * K + k];
          break;
      }
      if (ek.requires_grad)
        Kern<T>::axpy(D, coeff, g + n * D, ek.grad<T>().data() + n * D);
      if (has_w && wnode->requires_grad) {
        double d = Kern<T>::dot(D, g + n * D, ek.data<T>().data() + n * D);
        wnode->grad<T>()[static_cast<size_t>(n * K + k)] += static_cast<T>(d);
      }
    }
  }
}

template <typename T>
void sum_all_bw(TensorNode& self) {
  auto& a = *self.inputs[0];
  if (!a.requires_grad) return;
  T g = self.grad<T>()[0];
  auto ga = a.grad<T>();
  for (auto& v : ga) v += g;
}

void expect_rank(const Tensor& t, size_t rank, const char* op) {
  if (t.shape().size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
}

}  // namespace

// ==== public ops =========================================================

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  Dtype dt = same_dtype(a, b, "add");
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  auto n = result_node(a.shape(), dt, "add", {a.node(), b.node()});
  if (dt == Dtype::F32)
    Kern<float>::add(n->numel(), a.data<float>().data(), b.data<float>().data(),
                     n->f32.data());
  else
    Kern<double>::add(n->numel(), a.data<double>().data(), b.data<double>().data(),
                      n->f64.data());
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      self.dtype == Dtype::F32 ? add_bw<float>(self) : add_bw<double>(self);
    };
  return finish(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  Dtype dt = same_dtype(a, b, "mul");
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  auto n = result_node(a.shape(), dt, "mul", {a.node(), b.node()});
  if (dt == Dtype::F32)
    Kern<float>::mul(n->numel(), a.data<float>().data(), b.data<float>().data(),
                     n->f32.data());
  else
    Kern<double>::mul(n->numel(), a.data<double>().data(), b.data<double>().data(),
                      n->f64.data());
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      self.dtype == Dtype::F32 ? mul_bw<float>(self) : mul_bw<double>(self);
    };
  return finish(n);
}

Tensor scale(const Tensor& a, double alpha) {
  require_defined(a, "scale");
  Dtype dt = a.dtype();
  auto n = result_node(a.shape(), dt, "scale", {a.node()});
  if (dt == Dtype::F32)
    Kern<float>::scale(n->numel(), static_cast<float>(alpha),
                       a.data<float>().data(), n->f32.data());
  else
    Kern<double>::scale(n->numel(), alpha, a.data<double>().data(), n->f64.data());
  if (n->requires_grad)
    n->backward_fn = [alpha](TensorNode& self) {
      self.dtype == Dtype::F32 ? scale_bw<float>(self, alpha)
                               : scale_bw<double>(self, alpha);
    };
  return finish(n);
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_defined(x, "add_bias");
  require_defined(bias, "add_bias");
  Dtype dt = same_dtype(x, bias, "add_bias");
  expect_rank(x, 2, "add_bias");
  expect_rank(bias, 1, "add_bias");
  int64_t R = x.dim(0), D = x.dim(1);
  if (bias.dim(0) != D)
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " vs rows of " +
                     shape_str(x.shape()));
  auto n = result_node({R, D}, dt, "add_bias", {x.node(), bias.node()});
  auto run = [&](auto tag) {
    using T = decltype(tag);
    const T* xs = x.data<T>().data();
    const T* bs = bias.data<T>().data();
    auto out = n->data<T>();
    for (int64_t r = 0; r < R; ++r)
      Kern<T>::add(D, xs + r * D, bs, out.data() + r * D);
  };
  dt == Dtype::F32 ? run(float{}) : run(double{});
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      self.dtype == Dtype::F32 ? add_bias_bw<float>(self) : add_bias_bw<double>(self);
    };
  return finish(n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  Dtype dt = same_dtype(a, b, "matmul");
  expect_rank(a, 2, "matmul");
  expect_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dims disagree, " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  auto n = result_node({M, N}, dt, "matmul", {a.node(), b.node()});
  if (dt == Dtype::F32)
    Kern<float>::gemm(M, N, K, a.data<float>().data(), b.data<float>().data(),
                      n->f32.data(), false);
  else
    Kern<double>::gemm(M, N, K, a.data<double>().data(), b.data<double>().data(),
                       n->f64.data(), false);
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      self.dtype == Dtype::F32 ? matmul_bw<float>(self) : matmul_bw<double>(self);
    };
  return finish(n);
}

Tensor transpose2d(const Tensor& a) {
  require_defined(a, "transpose2d");
  expect_rank(a, 2, "transpose2d");
  int64_t R = a.dim(0), C = a.dim(1);
  auto n = result_node({C, R}, a.dtype(), "transpose2d", {a.node()});
  if (a.dtype() == Dtype::F32)
    transpose_fw(a.data<float>().data(), n->f32.data(), R, C);
  else
    transpose_fw(a.data<double>().data(), n->f64.data(), R, C);
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      self.dtype == Dtype::F32 ? transpose_bw<float>(self) : transpose_bw<double>(self);
    };
  return finish(n);
}

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape) +
                     " changes element count");
  auto n = result_node(std::move(shape), a.dtype(), "reshape", {a.node()});
  n->f32 = a.node()->f32;
  n->f64 = a.node()->f64;
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      if (self.dtype == Dtype::F32)
        accum(*self.inputs[0], self.grad<float>().data());
      else
        accum(*self.inputs[0], self.grad<double>().data());
    };
  return finish(n);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgError("concat_rows: no inputs");
  Dtype dt = parts[0].dtype();
  int64_t D = parts[0].dim(1), R = 0;
  std::vector<std::shared_ptr<TensorNode>> ins;
  for (const auto& p : parts) {
    expect_rank(p, 2, "concat_rows");
    same_dtype(parts[0], p, "concat_rows");
    if (p.dim(1) != D)
      throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()));
    R += p.dim(0);
    ins.push_back(p.node());
  }
  auto n = result_node({R, D}, dt, "concat_rows", std::move(ins));
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t cnt = p.numel();
    if (dt == Dtype::F32)
      std::copy_n(p.data<float>().data(), cnt, n->f32.data() + off);
    else
      std::copy_n(p.data<double>().data(), cnt, n->f64.data() + off);
    off += cnt;
  }
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      self.dtype == Dtype::F32 ? concat_rows_bw<float>(self)
                               : concat_rows_bw<double>(self);
    };
  return finish(n);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgError("concat_cols: no inputs");
  Dtype dt = parts[0].dtype();
  int64_t R = parts[0].dim(0), D = 0;
  std::vector<std::shared_ptr<TensorNode>> ins;
  for (const auto& p : parts) {
    expect_rank(p, 2, "concat_cols");
    same_dtype(parts[0], p, "concat_cols");
    if (p.dim(0) != R)
      throw ShapeError("concat_cols: row mismatch " + shape_str(p.shape()));
    D += p.dim(1);
    ins.push_back(p.node());
  }
  auto n = result_node({R, D}, dt, "concat_cols", std::move(ins));
  auto fill = [&](auto tag) {
    using T = decltype(tag);
    auto out = n->data<T>();
    int64_t off = 0;
    for (const auto& p : parts) {
      int64_t pc = p.dim(1);
      const T* src = p.data<T>().data();
      for (int64_t r = 0; r < R; ++r)
        std::copy_n(src + r * pc, pc, out.data() + r * D + off);
      off += pc;
    }
  };
  dt == Dtype::F32 ? fill(float{}) : fill(double{});
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      self.dtype == Dtype::F32 ? concat_cols_bw<float>(self)
                               : concat_cols_bw<double>(self);
    };
  return finish(n);
}

Tensor slice_rows(const Tensor& a, int64_t lo, int64_t hi) {
  require_defined(a, "slice_rows");
  expect_rank(a, 2, "slice_rows");
  if (lo < 0 || hi > a.dim(0) || lo >= hi)
    throw ShapeError("slice_rows: [" + std::to_string(lo) + "," + std::to_string(hi) +
                     ") of " + shape_str(a.shape()));
  int64_t D = a.dim(1);
  auto n = result_node({hi - lo, D}, a.dtype(), "slice_rows", {a.node()});
  if (a.dtype() == Dtype::F32)
    std::copy_n(a.data<float>().data() + lo * D, (hi - lo) * D, n->f32.data());
  else
    std::copy_n(a.data<double>().data() + lo * D, (hi - lo) * D, n->f64.data());
  if (n->requires_grad)
    n->backward_fn = [lo, D](TensorNode& self) {
      self.dtype == Dtype::F32 ? slice_rows_bw<float>(self, lo, D)
                               : slice_rows_bw<double>(self, lo, D);
    };
  return finish(n);
}

Tensor slice_cols(const Tensor& a, int64_t lo, int64_t hi) {
  require_defined(a, "slice_cols");
  expect_rank(a, 2, "slice_cols");
  if (lo < 0 || hi > a.dim(1) || lo >= hi)
    throw ShapeError("slice_cols: [" + std::to_string(lo) + "," + std::to_string(hi) +
                     ") of " + shape_str(a.shape()));
  int64_t R = a.dim(0), C = a.dim(1), D = hi - lo;
  auto n = result_node({R, D}, a.dtype(), "slice_cols", {a.node()});
  auto fill = [&](auto tag) {
    using T = decltype(tag);
    const T* src = a.data<T>().data();
    auto out = n->data<T>();
    for (int64_t r = 0; r < R; ++r)
      std::copy_n(src + r * C + lo, D, out.data() + r * D);
  };
  a.dtype() == Dtype::F32 ? fill(float{}) : fill(double{});
  if (n->requires_grad)
    n->backward_fn = [lo](TensorNode& self) {
      self.dtype == Dtype::F32 ? slice_cols_bw<float>(self, lo)
                               : slice_cols_bw<double>(self, lo);
    };
  return finish(n);
}

Tensor gelu(const Tensor& x) {
  require_defined(x, "gelu");
  auto n = result_node(x.shape(), x.dtype(), "gelu", {x.node()});
  if (x.dtype() == Dtype::F32)
    gelu_fw(x.data<float>().data(), n->f32.data(), n->numel());
  else
    gelu_fw(x.data<double>().data(), n->f64.data(), n->numel());
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      self.dtype == Dtype::F32 ? gelu_bw<float>(self) : gelu_bw<double>(self);
    };
  return finish(n);
}

Tensor softmax_rows(const Tensor& x) {
  require_defined(x, "softmax_rows");
  expect_rank(x, 2, "softmax_rows");
  auto n = result_node(x.shape(), x.dtype(), "softmax_rows", {x.node()});
  if (x.dtype() == Dtype::F32)
    softmax_fw(x.data<float>().data(), n->f32.data(), x.dim(0), x.dim(1));
  else
    softmax_fw(x.data<double>().data(), n->f64.data(), x.dim(0), x.dim(1));
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      self.dtype == Dtype::F32 ? softmax_bw<float>(self) : softmax_bw<double>(self);
    };
  return finish(n);
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps) {
  require_defined(x, "layer_norm");
  require_defined(gamma, "layer_norm");
  require_defined(beta, "layer_norm");
  same_dtype(x, gamma, "layer_norm");
  Dtype dt = same_dtype(x, beta, "layer_norm");
  expect_rank(x, 2, "layer_norm");
  int64_t R = x.dim(0), D = x.dim(1);
  if (gamma.dim(0) != D || beta.dim(0) != D)
    throw ShapeError("layer_norm: scale/shift dims disagree with " +
                     shape_str(x.shape()));
  auto n = result_node({R, D}, dt, "layer_norm", {x.node(), gamma.node(), beta.node()});
  auto run = [&](auto tag) {
    using T = decltype(tag);
    const T* xs = x.data<T>().data();
    const T* gm = gamma.data<T>().data();
    const T* bt = beta.data<T>().data();
    auto out = n->data<T>();
    std::vector<T> mean(static_cast<size_t>(R)), rstd(static_cast<size_t>(R));
    for (int64_t r = 0; r < R; ++r) {
      const T* xr = xs + r * D;
      T mu = T(0);
      for (int64_t d = 0; d < D; ++d) mu += xr[d];
      mu /= T(D);
      T var = T(0);
      for (int64_t d = 0; d < D; ++d) var += (xr[d] - mu) * (xr[d] - mu);
      var /= T(D);
      T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
      mean[static_cast<size_t>(r)] = mu;
      rstd[static_cast<size_t>(r)] = rs;
      for (int64_t d = 0; d < D; ++d)
        out[static_cast<size_t>(r * D + d)] = (xr[d] - mu) * rs * gm[d] + bt[d];
    }
    if (n->requires_grad)
      n->backward_fn = [mean = std::move(mean), rstd = std::move(rstd)](TensorNode& self) {
        layer_norm_bw<T>(self, mean, rstd);
      };
  };
  dt == Dtype::F32 ? run(float{}) : run(double{});
  return finish(n);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t sh,
              int64_t sw) {
  require_defined(x, "conv2d");
  require_defined(w, "conv2d");
  require_defined(bias, "conv2d");
  same_dtype(x, w, "conv2d");
  Dtype dt = same_dtype(x, bias, "conv2d");
  expect_rank(x, 3, "conv2d");
  expect_rank(w, 4, "conv2d");
  expect_rank(bias, 1, "conv2d");
  if (sh <= 0 || sw <= 0) throw ArgError("conv2d: strides must be positive");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), w.dim(3),
             sh,       sw,       0,        0};
  if (w.dim(1) != d.Ci)
    throw ShapeError("conv2d: weight channels " + shape_str(w.shape()) +
                     " vs input " + shape_str(x.shape()));
  if (bias.dim(0) != d.Co)
    throw ShapeError("conv2d: bias size " + shape_str(bias.shape()) + " vs " +
                     std::to_string(d.Co) + " output channels");
  if (d.H < d.Kh || d.W < d.Kw)
    throw ShapeError("conv2d: kernel larger than input (" + shape_str(x.shape()) +
                     " vs " + shape_str(w.shape()) + ")");
  d.Ho = (d.H - d.Kh) / sh + 1;
  d.Wo = (d.W - d.Kw) / sw + 1;
  auto n = result_node({d.Co, d.Ho, d.Wo}, dt, "conv2d",
                       {x.node(), w.node(), bias.node()});
  auto run = [&](auto tag) {
    using T = decltype(tag);
    auto col = im2col(x.data<T>().data(), d);
    int64_t P = d.positions();
    auto out = n->data<T>();
    Kern<T>::gemm(d.Co, P, d.patch_rows(), w.data<T>().data(), col.data(),
                  out.data(), false);
    const T* bs = bias.data<T>().data();
    for (int64_t co = 0; co < d.Co; ++co)
      for (int64_t p = 0; p < P; ++p) out[static_cast<size_t>(co * P + p)] += bs[co];
    if (n->requires_grad)
      n->backward_fn = [d, col = std::move(col)](TensorNode& self) {
        conv2d_bw<T>(self, d, col);
      };
  };
  dt == Dtype::F32 ? run(float{}) : run(double{});
  return finish(n);
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride) {
  require_defined(x, "conv1d");
  require_defined(w, "conv1d");
  expect_rank(x, 2, "conv1d");
  expect_rank(w, 3, "conv1d");
  Tensor x3 = reshape(x, {x.dim(0), 1, x.dim(1)});
  Tensor w4 = reshape(w, {w.dim(0), w.dim(1), 1, w.dim(2)});
  Tensor out = conv2d(x3, w4, bias, 1, stride);
  return reshape(out, {out.dim(0), out.dim(2)});
}

Tensor embedding_rows(const Tensor& table, const std::vector<int32_t>& ids) {
  require_defined(table, "embedding_rows");
  expect_rank(table, 2, "embedding_rows");
  int64_t V = table.dim(0), D = table.dim(1);
  for (int32_t id : ids)
    if (id < 0 || id >= V)
      throw ShapeError("embedding_rows: id " + std::to_string(id) +
                       " outside table of " + std::to_string(V) + " rows");
  int64_t L = static_cast<int64_t>(ids.size());
  auto n = result_node({L, D}, table.dtype(), "embedding_rows", {table.node()});
  if (table.dtype() == Dtype::F32) {
    const float* src = table.data<float>().data();
    for (int64_t l = 0; l < L; ++l)
      std::copy_n(src + static_cast<int64_t>(ids[static_cast<size_t>(l)]) * D, D,
                  n->f32.data() + l * D);
  } else {
    const double* src = table.data<double>().data();
    for (int64_t l = 0; l < L; ++l)
      std::copy_n(src + static_cast<int64_t>(ids[static_cast<size_t>(l)]) * D, D,
                  n->f64.data() + l * D);
  }
  if (n->requires_grad)
    n->backward_fn = [ids](TensorNode& self) {
      self.dtype == Dtype::F32 ? embedding_bw<float>(self, ids)
                               : embedding_bw<double>(self, ids);
    };
  return finish(n);
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int32_t>& targets,
                          const std::vector<uint8_t>& row_mask) {
  require_defined(logits, "cross_entropy");
  expect_rank(logits, 2, "cross_entropy");
  int64_t R = logits.dim(0), V = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != R ||
      static_cast<int64_t>(row_mask.size()) != R)
    throw ShapeError("cross_entropy: targets/mask length vs " +
                     shape_str(logits.shape()));
  int64_t count = 0;
  for (int64_t r = 0; r < R; ++r) {
    if (!row_mask[static_cast<size_t>(r)]) continue;
    ++count;
    int32_t t = targets[static_cast<size_t>(r)];
    if (t < 0 || t >= V)
      throw ShapeError("cross_entropy: target " + std::to_string(t) +
                       " outside vocab of " + std::to_string(V));
  }
  if (count == 0) throw ArgError("cross_entropy: no rows selected by mask");
  auto n = result_node({1}, logits.dtype(), "cross_entropy", {logits.node()});
  auto run = [&](auto tag) {
    using T = decltype(tag);
    const T* ls = logits.data<T>().data();
    double acc = 0.0;
    for (int64_t r = 0; r < R; ++r) {
      if (!row_mask[static_cast<size_t>(r)]) continue;
      const T* row = ls + r * V;
      T m = row[0];
      for (int64_t v = 1; v < V; ++v) m = std::max(m, row[v]);
      double sum = 0.0;
      for (int64_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(row[v] - m));
      acc += static_cast<double>(m) + std::log(sum) -
             static_cast<double>(row[targets[static_cast<size_t>(r)]]);
    }
    n->data<T>()[0] = static_cast<T>(acc / static_cast<double>(count));
  };
  logits.dtype() == Dtype::F32 ? run(float{}) : run(double{});
  if (n->requires_grad)
    n->backward_fn = [targets, row_mask, count](TensorNode& self) {
      self.dtype == Dtype::F32
          ? cross_entropy_bw<float>(self, targets, row_mask, count)
          : cross_entropy_bw<double>(self, targets, row_mask, count);
    };
  return finish(n);
}

Tensor segment_max(const Tensor& x, int64_t group_size) {
  require_defined(x, "segment_max");
  expect_rank(x, 2, "segment_max");
  if (group_size <= 0 || x.dim(0) % group_size != 0)
    throw ShapeError("segment_max: rows " + std::to_string(x.dim(0)) +
                     " not divisible by group size " + std::to_string(group_size));
  int64_t G = x.dim(0) / group_size, D = x.dim(1), S = group_size;
  auto n = result_node({G, D}, x.dtype(), "segment_max", {x.node()});
  std::vector<int32_t> arg(static_cast<size_t>(G * D), 0);
  auto run = [&](auto tag) {
    using T = decltype(tag);
    const T* xs = x.data<T>().data();
    auto out = n->data<T>();
    for (int64_t g = 0; g < G; ++g)
      for (int64_t d = 0; d < D; ++d) {
        T best = xs[(g * S) * D + d];
        int32_t bi = 0;
        for (int64_t s = 1; s < S; ++s) {
          T v = xs[(g * S + s) * D + d];
          if (v > best) {
            best = v;
            bi = static_cast<int32_t>(s);
          }
        }
        out[static_cast<size_t>(g * D + d)] = best;
        arg[static_cast<size_t>(g * D + d)] = bi;
      }
  };
  x.dtype() == Dtype::F32 ? run(float{}) : run(double{});
  if (n->requires_grad)
    n->backward_fn = [arg = std::move(arg), S](TensorNode& self) {
      self.dtype == Dtype::F32 ? segment_max_bw<float>(self, arg, S)
                               : segment_max_bw<double>(self, arg, S);
    };
  return finish(n);
}

Tensor mix_rows(const std::vector<Tensor>& experts, const Tensor& weights,
                MixMode mode) {
  if (experts.empty()) throw ArgError("mix_rows: no experts");
  int64_t K = static_cast<int64_t>(experts.size());
  expect_rank(experts[0], 2, "mix_rows");
  int64_t N = experts[0].dim(0), D = experts[0].dim(1);
  Dtype dt = experts[0].dtype();
  std::vector<std::shared_ptr<TensorNode>> ins;
  for (const auto& e : experts) {
    same_dtype(experts[0], e, "mix_rows");
    if (e.shape() != experts[0].shape())
      throw ShapeError("mix_rows: expert shape mismatch " + shape_str(e.shape()));
    ins.push_back(e.node());
  }
  std::vector<int32_t> winner;
  if (mode != MixMode::Mean) {
    require_defined(weights, "mix_rows");
    expect_rank(weights, 2, "mix_rows");
    same_dtype(experts[0], weights, "mix_rows");
    if (weights.dim(0) != N || weights.dim(1) != K)
      throw ShapeError("mix_rows: weights " + shape_str(weights.shape()) +
                       " for N=" + std::to_string(N) + " K=" + std::to_string(K));
    ins.push_back(weights.node());
  }
  auto n = result_node({N, D}, dt, "mix_rows", std::move(ins));
  auto run = [&](auto tag) {
    using T = decltype(tag);
    auto out = n->data<T>();
    const T* w = mode != MixMode::Mean ? weights.data<T>().data() : nullptr;
    if (mode == MixMode::ArgmaxOnly) {
      winner.resize(static_cast<size_t>(N));
      for (int64_t r = 0; r < N; ++r) {
        int32_t best = 0;
        // ties resolve to the lower expert index (strict >)
        for (int64_t k = 1; k < K; ++k)
          if (w[r * K + k] > w[r * K + best]) best = static_cast<int32_t>(k);
        winner[static_cast<size_t>(r)] = best;
      }
    }
    for (int64_t r = 0; r < N; ++r) {
      T* orow = out.data() + r * D;
      for (int64_t k = 0; k < K; ++k) {
        T coeff;
        if (mode == MixMode::Weighted)
          coeff = w[r * K + k];
        else if (mode == MixMode::Mean)
          coeff = T(1) / T(K);
        else {
          if (winner[static_cast<size_t>(r)] != k) continue;
          coeff = w[r * K + k];
        }
        const T* erow = experts[static_cast<size_t>(k)].data<T>().data() + r * D;
        for (int64_t d = 0; d < D; ++d) orow[d] += coeff * erow[d];
      }
    }
  };
  dt == Dtype::F32 ? run(float{}) : run(double{});
  if (n->requires_grad)
    n->backward_fn = [mode, K, winner = std::move(winner)](TensorNode& self) {
      self.dtype == Dtype::F32 ? mix_rows_bw<float>(self, mode, K, winner)
                               : mix_rows_bw<double>(self, mode, K, winner);
    };
  return finish(n);
}

Tensor sum_all(const Tensor& x) {
  require_defined(x, "sum_all");
  auto n = result_node({1}, x.dtype(), "sum_all", {x.node()});
  if (x.dtype() == Dtype::F32)
    n->f32[0] = static_cast<float>(
        kernels::active().sum_f32(x.numel(), x.data<float>().data()));
  else
    n->f64[0] = kernels::active().sum_f64(x.numel(), x.data<double>().data());
  if (n->requires_grad)
    n->backward_fn = [](TensorNode& self) {
      self.dtype == Dtype::F32 ? sum_all_bw<float>(self) : sum_all_bw<double>(self);
    };
  return finish(n);
}

int64_t row_argmax(const Tensor& t, int64_t row) {
  expect_rank(t, 2, "row_argmax");
  if (row < 0 || row >= t.dim(0))
    throw ShapeError("row_argmax: row " + std::to_string(row) + " of " +
                     shape_str(t.shape()));
  int64_t C = t.dim(1), best = 0;
  if (t.dtype() == Dtype::F32) {
    const float* r = t.data<float>().data() + row * C;
    for (int64_t c = 1; c < C; ++c)
      if (r[c] > r[best]) best = c;
  } else {
    const double* r = t.data<double>().data() + row * C;
    for (int64_t c = 1; c < C; ++c)
      if (r[c] > r[best]) best = c;
  }
  return best;
}

}  // namespace omni
