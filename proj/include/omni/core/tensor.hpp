#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "omni/core/error.hpp"
#include "omni/core/rng.hpp"

namespace omni {

enum class Dtype { F32, F64 };

inline const char* dtype_name(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

// One node of the reverse-mode tape. Tensors are shared handles to nodes; an
// op's output node keeps its inputs alive, so dropping the loss handle frees
// the whole step graph while leaf parameters survive in their modules.
struct TensorNode {
  std::vector<int64_t> shape;
  Dtype dtype = Dtype::F32;
  std::vector<float> f32;
  std::vector<double> f64;
  // Gradient storage, allocated (zero-filled) on first accumulation. Empty
  // means "never touched by backward", which callers read as exact zero.
  std::vector<float> gf32;
  std::vector<double> gf64;

  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void(TensorNode&)> backward_fn;

  int64_t numel() const { return shape_numel(shape); }

  template <typename T> std::span<T> data();
  template <typename T> std::span<const T> data() const;
  // Zero-filled on first use.
  template <typename T> std::span<T> grad();
  bool has_grad() const { return !gf32.empty() || !gf64.empty(); }
};

template <> inline std::span<float> TensorNode::data() { return f32; }
template <> inline std::span<double> TensorNode::data() { return f64; }
template <> inline std::span<const float> TensorNode::data() const { return f32; }
template <> inline std::span<const double> TensorNode::data() const { return f64; }

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, Dtype dt = Dtype::F32);
  static Tensor full(std::vector<int64_t> shape, double value, Dtype dt = Dtype::F32);
  static Tensor from_data(std::vector<int64_t> shape, const std::vector<double>& values,
                          Dtype dt = Dtype::F32);
  static Tensor randn(std::vector<int64_t> shape, Rng& rng, double stddev = 1.0,
                      Dtype dt = Dtype::F32);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int64_t>& shape() const { return check().shape; }
  int64_t dim(size_t axis) const;
  int64_t numel() const { return check().numel(); }
  Dtype dtype() const { return check().dtype; }

  template <typename T> std::span<T> data() { return check().data<T>(); }
  template <typename T> std::span<const T> data() const {
    return static_cast<const TensorNode&>(check()).data<T>();
  }

  // Element access as double regardless of dtype (tests, metrics, IO).
  double scalar() const;                       // requires numel == 1
  double at(std::initializer_list<int64_t> idx) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const { return check().requires_grad; }
  Tensor& set_requires_grad(bool v);
  // Copy of the accumulated gradient; zeros if backward never reached this
  // tensor. Defined for leaves and retained intermediates alike.
  Tensor grad_tensor() const;
  bool has_grad() const { return check().has_grad(); }
  void zero_grad();

  // Reverse pass from a scalar. Visits each reachable node exactly once.
  void backward();

  // Same values, fresh leaf, no history.
  Tensor detach() const;

  std::shared_ptr<TensorNode>& node() { return node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

 private:
  TensorNode& check() const {
    if (!node_) throw ShapeError("operation on undefined tensor");
    return *node_;
  }
  std::shared_ptr<TensorNode> node_;
};

// Throws NumericalError naming `op` if any value is NaN/Inf. Every op calls
// this on its output; training aborts rather than continuing on poison.
void check_finite(const TensorNode& n, const char* op);

}  // namespace omni
