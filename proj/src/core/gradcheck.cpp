#include "omni/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace omni {

GradCheckReport gradcheck(const std::function<Tensor()>& loss_fn,
                          const std::vector<Tensor>& params,
                          int64_t coords_per_param, Rng& rng, double h) {
  for (const auto& p : params) {
    if (p.dtype() != Dtype::F64)
      throw ArgError("gradcheck: parameters must be f64, got " +
                     std::string(dtype_name(p.dtype())));
    if (!p.requires_grad())
      throw ArgError("gradcheck: parameter without requires_grad");
  }

  // One backward pass for the analytic gradients.
  for (auto p : params) p.zero_grad();
  Tensor loss = loss_fn();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad_tensor().to_vector());

  GradCheckReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    int64_t n = p.numel();
    std::vector<int64_t> coords;
    if (n <= coords_per_param) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      for (int64_t i = 0; i < coords_per_param; ++i)
        coords.push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    auto vals = p.data<double>();
    for (int64_t c : coords) {
      double orig = vals[static_cast<size_t>(c)];
      vals[static_cast<size_t>(c)] = orig + h;
      double lp = loss_fn().scalar();
      vals[static_cast<size_t>(c)] = orig - h;
      double lm = loss_fn().scalar();
      vals[static_cast<size_t>(c)] = orig;
      double numeric = (lp - lm) / (2.0 * h);
      double a = analytic[pi][static_cast<size_t>(c)];
      double rel = std::abs(a - numeric) /
                   std::max({std::abs(a), std::abs(numeric), 1e-3});
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "param#" + std::to_string(pi) + "[" + std::to_string(c) + "]";
      }
    }
  }
  return rep;
}

}  // namespace omni
