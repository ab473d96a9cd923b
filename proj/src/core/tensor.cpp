#include "omni/core/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "omni/core/kernels.hpp"

namespace omni {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

template <> std::span<float> TensorNode::grad<float>() {
  if (gf32.empty()) gf32.assign(static_cast<size_t>(numel()), 0.0f);
  return gf32;
}
template <> std::span<double> TensorNode::grad<double>() {
  if (gf64.empty()) gf64.assign(static_cast<size_t>(numel()), 0.0);
  return gf64;
}

namespace {

std::shared_ptr<TensorNode> make_leaf(std::vector<int64_t> shape, Dtype dt) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->dtype = dt;
  size_t count = static_cast<size_t>(n->numel());
  if (dt == Dtype::F32)
    n->f32.assign(count, 0.0f);
  else
    n->f64.assign(count, 0.0);
  return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int64_t> shape, Dtype dt) {
  return Tensor(make_leaf(std::move(shape), dt));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, Dtype dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (dt == Dtype::F32)
    for (auto& v : t.node()->f32) v = static_cast<float>(value);
  else
    for (auto& v : t.node()->f64) v = value;
  return t;
}

Tensor Tensor::from_data(std::vector<int64_t> shape, const std::vector<double>& values,
                         Dtype dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (static_cast<int64_t>(values.size()) != t.numel())
    throw ShapeError("from_data: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(t.shape()));
  if (dt == Dtype::F32)
    for (size_t i = 0; i < values.size(); ++i)
      t.node()->f32[i] = static_cast<float>(values[i]);
  else
    t.node()->f64 = values;
  return t;
}

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, double stddev, Dtype dt) {
  Tensor t = zeros(std::move(shape), dt);
  int64_t n = t.numel();
  if (dt == Dtype::F32)
    for (int64_t i = 0; i < n; ++i)
      t.node()->f32[i] = static_cast<float>(rng.next_normal() * stddev);
  else
    for (int64_t i = 0; i < n; ++i) t.node()->f64[i] = rng.next_normal() * stddev;
  return t;
}

int64_t Tensor::dim(size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  return s[axis];
}

double Tensor::scalar() const {
  if (numel() != 1)
    throw ShapeError("scalar() on tensor of shape " + shape_str(shape()));
  return dtype() == Dtype::F32 ? static_cast<double>(node_->f32[0]) : node_->f64[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  const auto& s = shape();
  if (idx.size() != s.size())
    throw ShapeError("at(): " + std::to_string(idx.size()) + " indices for " +
                     shape_str(s));
  int64_t flat = 0;
  size_t a = 0;
  for (int64_t i : idx) {
    if (i < 0 || i >= s[a])
      throw ShapeError("at(): index " + std::to_string(i) + " out of range for " +
                       shape_str(s));
    flat = flat * s[a] + i;
    ++a;
  }
  return dtype() == Dtype::F32 ? static_cast<double>(node_->f32[flat])
                               : node_->f64[flat];
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<size_t>(numel()));
  if (dtype() == Dtype::F32)
    for (size_t i = 0; i < out.size(); ++i) out[i] = node_->f32[i];
  else
    out.assign(node_->f64.begin(), node_->f64.end());
  return out;
}

Tensor& Tensor::set_requires_grad(bool v) {
  TensorNode& n = check();
  if (!n.is_leaf && v)
    throw ArgError("set_requires_grad on non-leaf result of op '" +
                   std::string(n.op) + "'");
  n.requires_grad = v;
  return *this;
}

Tensor Tensor::grad_tensor() const {
  const TensorNode& n = check();
  Tensor g = zeros(n.shape, n.dtype);
  if (n.dtype == Dtype::F32) {
    if (!n.gf32.empty()) g.node()->f32 = n.gf32;
  } else {
    if (!n.gf64.empty()) g.node()->f64 = n.gf64;
  }
  return g;
}

void Tensor::zero_grad() {
  TensorNode& n = check();
  n.gf32.clear();
  n.gf64.clear();
}

void Tensor::backward() {
  TensorNode& root = check();
  if (root.numel() != 1)
    throw ShapeError("backward() requires a scalar, got " + shape_str(root.shape));
  if (!root.requires_grad) return;

  // Iterative post-order DFS; `visited` guarantees each node is expanded once
  // and appears once in the topological order.
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(&root, 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorNode* in = node->inputs[next++].get();
      if (in->requires_grad && !visited.count(in)) {
        visited.insert(in);
        stack.emplace_back(in, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  if (root.dtype == Dtype::F32)
    root.grad<float>()[0] += 1.0f;
  else
    root.grad<double>()[0] += 1.0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

Tensor Tensor::detach() const {
  const TensorNode& n = check();
  Tensor t = zeros(n.shape, n.dtype);
  t.node()->f32 = n.f32;
  t.node()->f64 = n.f64;
  return t;
}

void check_finite(const TensorNode& n, const char* op) {
  if (n.dtype == Dtype::F32) {
    for (float v : n.f32)
      if (!std::isfinite(v))
        throw NumericalError(std::string("non-finite value in output of '") + op +
                             "' " + shape_str(n.shape));
  } else {
    for (double v : n.f64)
      if (!std::isfinite(v))
        throw NumericalError(std::string("non-finite value in output of '") + op +
                             "' " + shape_str(n.shape));
  }
}

}  // namespace omni
