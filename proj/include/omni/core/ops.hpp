#pragma once

#include <cstdint>
#include <vector>

#include "omni/core/tensor.hpp"

namespace omni {

// Differentiable op library. All ops build tape nodes when any input requires
// grad and detach into constants otherwise. Shapes are row-major; "rows"
// means the leading axis of a rank-2 tensor. Mixed-dtype inputs are an error.

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double alpha);
// x: [R x D], bias: [D], broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int64_t> shape);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int64_t lo, int64_t hi);
Tensor slice_cols(const Tensor& a, int64_t lo, int64_t hi);

Tensor gelu(const Tensor& x);  // exact erf form
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

// Valid (no padding) convolutions. x: [Ci x H x W], w: [Co x Ci x Kh x Kw],
// bias: [Co]; output [Co x Ho x Wo] with Ho = floor((H-Kh)/sh)+1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t sh,
              int64_t sw);
// x: [C x L], w: [Co x C x K]; output [Co x Lo].
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride);

Tensor embedding_rows(const Tensor& table, const std::vector<int32_t>& ids);

// Mean over masked rows of (logsumexp(row) - row[target]). Gradient flows to
// logits only.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int32_t>& targets,
                          const std::vector<uint8_t>& row_mask);

// x: [(G*S) x D] -> [G x D], max over each chunk of S consecutive rows.
// Ties resolve to the lowest row index.
Tensor segment_max(const Tensor& x, int64_t group_size);

// Row-wise combination of K same-shape expert outputs [N x D] under weights
// [N x K]. Weighted: full convex combination. ArgmaxOnly: per row keep only
// the highest-weight expert, scaled by its weight (ties -> lower index);
// gradients follow the kept path only. Mean: uniform 1/K average that ignores
// the weights entirely (they do not enter the graph).
enum class MixMode { Weighted, ArgmaxOnly, Mean };
Tensor mix_rows(const std::vector<Tensor>& experts, const Tensor& weights,
                MixMode mode);

Tensor sum_all(const Tensor& x);

// Non-differentiable helpers.
int64_t row_argmax(const Tensor& t, int64_t row);

}  // namespace omni
