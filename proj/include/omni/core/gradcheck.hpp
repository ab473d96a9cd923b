#pragma once

#include <functional>
#include <string>
#include <vector>

#include "omni/core/tensor.hpp"

namespace omni {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  std::string worst;  // "param#i[j]" of the largest error
};

// Central-difference check of reverse-mode gradients. `loss_fn` must rebuild
// the graph from the live values of `params` on every call (it is invoked
// 2 * coords + 1 times). Tensors should be f64; f32 round-off drowns an h of
// 1e-5. Per parameter at most `coords_per_param` coordinates are probed,
// chosen by `rng` (all of them when the tensor is small enough).
// rel_err = |a - n| / max(|a|, |n|, 1e-3).
GradCheckReport gradcheck(const std::function<Tensor()>& loss_fn,
                          const std::vector<Tensor>& params,
                          int64_t coords_per_param, Rng& rng, double h = 1e-5);

}  // namespace omni
