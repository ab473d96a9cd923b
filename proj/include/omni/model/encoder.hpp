#pragma once

#include <vector>

#include "omni/nn/modules.hpp"

namespace omni {

struct EncoderConfig {
  int64_t depth = 2;
  int64_t dim = 64;
  int64_t heads = 4;
  int64_t max_len = 64;  // positional table size; covers the longest tokenizer output
  bool frozen = true;    // thawed only by the trainable-encoder ablation
};

// Elementwise mean over same-shape frame features, pairwise-tree order so the
// result is permutation-stable to well under 1e-6 in f32.
Tensor average_frames(const std::vector<Tensor>& frames);

// Bidirectional pre-norm transformer applied identically to every modality's
// token sequence. When frozen, its parameters take no gradient but gradients
// still flow through it into the tokenizers.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, ParamRegistry& reg, Rng& rng,
          Dtype dt = Dtype::F32);

  Tensor encode(const Tensor& tokens) const;  // [L x dim] -> [L x dim]
  // Per-frame encode followed by token-wise averaging.
  Tensor encode_video(const std::vector<Tensor>& frames) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  Parameter* pos_ = nullptr;  // [max_len x dim]
  std::vector<TransformerBlock> blocks_;
};

}  // namespace omni
