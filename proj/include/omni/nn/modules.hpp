#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "omni/core/ops.hpp"
#include "omni/core/tensor.hpp"

namespace omni {

// A named leaf tensor. `frozen` mirrors value.requires_grad() == false and is
// what freeze policies, the optimizer and the checkpoint writer consult.
// `decay` is false for biases and norm scales (excluded from weight decay).
struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
  bool decay = true;
};

// Flat ordered registry of every parameter in a model. Registration order is
// stable and becomes the checkpoint entry order.
class ParamRegistry {
 public:
  Parameter& add(std::string name, Tensor value, bool decay = true);
  Parameter* find(const std::string& name);
  Parameter& at(const std::string& name);
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  std::vector<Parameter*> with_prefix(const std::string& prefix);

  int64_t count_values(bool trainable_only = false) const;
  // Freezes (or thaws) every parameter whose name starts with `prefix`;
  // "" touches everything. Keeps requires_grad in sync.
  void set_frozen(const std::string& prefix, bool frozen);
  void zero_grads();
  // Order-stable FNV over (name, raw value bytes) of matching parameters.
  uint64_t content_hash(const std::string& prefix = "") const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

// ---- layers -------------------------------------------------------------
// Layers store non-owning Parameter pointers into the registry, so modules
// can be wired once and freeze policy / checkpointing work by name.

struct Linear {
  Parameter* w = nullptr;  // [in x out]
  Parameter* b = nullptr;  // [out]
  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int64_t in, int64_t out,
         Rng& rng, Dtype dt);
  Tensor forward(const Tensor& x) const;
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  LayerNorm() = default;
  LayerNorm(ParamRegistry& reg, const std::string& name, int64_t dim, Dtype dt);
  Tensor forward(const Tensor& x) const;
};

struct Mlp {  // two-layer, 4x expansion, exact-erf gelu
  Linear fc1, fc2;
  Mlp() = default;
  Mlp(ParamRegistry& reg, const std::string& name, int64_t dim, Rng& rng, Dtype dt);
  Tensor forward(const Tensor& x) const;
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int64_t heads = 0;
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamRegistry& reg, const std::string& name, int64_t dim,
                     int64_t heads, Rng& rng, Dtype dt);
  // mask, when present, is an additive [T x T] tensor (0 keep, -1e30 drop).
  Tensor forward(const Tensor& x, const Tensor* mask) const;
};

// Pre-norm block: x + Attn(LN(x)), then + MLP(LN(.)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Mlp mlp;
  TransformerBlock() = default;
  TransformerBlock(ParamRegistry& reg, const std::string& name, int64_t dim,
                   int64_t heads, Rng& rng, Dtype dt);
  Tensor forward(const Tensor& x, const Tensor* mask) const;
};

// Additive causal mask: row i may attend to columns <= i. The -1e30 entries
// underflow to an exact 0 after softmax's max-subtracted exp, so causality is
// bit-exact, not approximate.
Tensor causal_mask(int64_t T, Dtype dt);

}  // namespace omni
