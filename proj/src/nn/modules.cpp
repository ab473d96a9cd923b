#include "omni/nn/modules.hpp"

#include <cmath>

#include "omni/core/hash.hpp"

namespace omni {

namespace {
constexpr double kInitStd = 0.02;
}

Parameter& ParamRegistry::add(std::string name, Tensor value, bool decay) {
  if (by_name_.count(name)) throw ArgError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = std::move(value);
  p->value.set_requires_grad(true);
  p->decay = decay;
  Parameter& ref = *p;
  by_name_[ref.name] = p.get();
  params_.push_back(std::move(p));
  return ref;
}

Parameter* ParamRegistry::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

Parameter& ParamRegistry::at(const std::string& name) {
  if (Parameter* p = find(name)) return *p;
  throw ArgError("no parameter named '" + name + "'");
}

std::vector<Parameter*> ParamRegistry::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_)
    if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
  return out;
}

int64_t ParamRegistry::count_values(bool trainable_only) const {
  int64_t n = 0;
  for (const auto& p : params_)
    if (!trainable_only || !p->frozen) n += p->value.numel();
  return n;
}

void ParamRegistry::set_frozen(const std::string& prefix, bool frozen) {
  bool any = false;
  for (auto& p : params_) {
    if (p->name.rfind(prefix, 0) != 0) continue;
    any = true;
    p->frozen = frozen;
    p->value.set_requires_grad(!frozen);
  }
  if (!any) throw ArgError("freeze prefix '" + prefix + "' matches no parameters");
}

void ParamRegistry::zero_grads() {
  for (auto& p : params_) p->value.zero_grad();
}

uint64_t ParamRegistry::content_hash(const std::string& prefix) const {
  uint64_t h = kFnvOffset;
  for (const auto& p : params_) {
    if (p->name.rfind(prefix, 0) != 0) continue;
    h = fnv1a(p->name, h);
    const auto& node = *p->value.node();
    if (node.dtype == Dtype::F32)
      h = fnv1a(node.f32.data(), node.f32.size() * sizeof(float), h);
    else
      h = fnv1a(node.f64.data(), node.f64.size() * sizeof(double), h);
  }
  return h;
}

// ---- layers -------------------------------------------------------------

Linear::Linear(ParamRegistry& reg, const std::string& name, int64_t in, int64_t out,
               Rng& rng, Dtype dt) {
  w = &reg.add(name + ".w", Tensor::randn({in, out}, rng, kInitStd, dt), true);
  b = &reg.add(name + ".b", Tensor::zeros({out}, dt), false);
}

Tensor Linear::forward(const Tensor& x) const {
  return add_bias(matmul(x, w->value), b->value);
}

LayerNorm::LayerNorm(ParamRegistry& reg, const std::string& name, int64_t dim,
                     Dtype dt) {
  gamma = &reg.add(name + ".gamma", Tensor::full({dim}, 1.0, dt), false);
  beta = &reg.add(name + ".beta", Tensor::zeros({dim}, dt), false);
}

Tensor LayerNorm::forward(const Tensor& x) const {
  return layer_norm_rows(x, gamma->value, beta->value);
}

Mlp::Mlp(ParamRegistry& reg, const std::string& name, int64_t dim, Rng& rng, Dtype dt)
    : fc1(reg, name + ".fc1", dim, 4 * dim, rng, dt),
      fc2(reg, name + ".fc2", 4 * dim, dim, rng, dt) {}

Tensor Mlp::forward(const Tensor& x) const {
  return fc2.forward(gelu(fc1.forward(x)));
}

MultiHeadAttention::MultiHeadAttention(ParamRegistry& reg, const std::string& name,
                                       int64_t dim, int64_t h, Rng& rng, Dtype dt)
    : wq(reg, name + ".wq", dim, dim, rng, dt),
      wk(reg, name + ".wk", dim, dim, rng, dt),
      wv(reg, name + ".wv", dim, dim, rng, dt),
      wo(reg, name + ".wo", dim, dim, rng, dt),
      heads(h) {
  if (h <= 0 || dim % h != 0)
    throw ArgError("attention heads (" + std::to_string(h) +
                   ") must divide model dim (" + std::to_string(dim) + ")");
}

Tensor MultiHeadAttention::forward(const Tensor& x, const Tensor* mask) const {
  int64_t D = x.dim(1), dh = D / heads;
  Tensor q = wq.forward(x), k = wk.forward(x), v = wv.forward(x);
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int64_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt);
    if (mask) scores = add(scores, *mask);
    outs.push_back(matmul(softmax_rows(scores), vh));
  }
  return wo.forward(concat_cols(outs));
}

TransformerBlock::TransformerBlock(ParamRegistry& reg, const std::string& name,
                                   int64_t dim, int64_t heads, Rng& rng, Dtype dt)
    : ln1(reg, name + ".ln1", dim, dt),
      ln2(reg, name + ".ln2", dim, dt),
      attn(reg, name + ".attn", dim, heads, rng, dt),
      mlp(reg, name + ".mlp", dim, rng, dt) {}

Tensor TransformerBlock::forward(const Tensor& x, const Tensor* mask) const {
  Tensor h = add(x, attn.forward(ln1.forward(x), mask));
  return add(h, mlp.forward(ln2.forward(h)));
}

Tensor causal_mask(int64_t T, Dtype dt) {
  Tensor m = Tensor::zeros({T, T}, dt);
  if (dt == Dtype::F32) {
    auto d = m.data<float>();
    for (int64_t i = 0; i < T; ++i)
      for (int64_t j = i + 1; j < T; ++j) d[static_cast<size_t>(i * T + j)] = -1e30f;
  } else {
    auto d = m.data<double>();
    for (int64_t i = 0; i < T; ++i)
      for (int64_t j = i + 1; j < T; ++j) d[static_cast<size_t>(i * T + j)] = -1e30;
  }
  return m;
}

}  // namespace omni
