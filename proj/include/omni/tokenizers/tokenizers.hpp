#pragma once

#include <cstdint>
#include <vector>

#include "omni/core/ops.hpp"
#include "omni/data/modality.hpp"
#include "omni/nn/modules.hpp"

namespace omni {

// Geometry of the eight modality tokenizers. Defaults are desk scale; the
// full-scale constants (patch 14 on 224x224, audio 1x128xW, point 8192/512/32,
// imu length 2000, fmri 15724) are reachable through the same fields.
struct TokenizerConfig {
  int64_t dim = 64;              // token width shared across modalities
  int64_t image_patch = 7;       // square patch edge (image/video/depth/normal)
  int64_t audio_kernel = 16;     // square spectrogram kernel
  int64_t audio_stride = 10;
  int64_t point_samples = 64;    // FPS sample count
  int64_t point_groups = 8;      // group count; first point_groups FPS picks are centers
  int64_t point_group_size = 8;  // points per group, center included
  int64_t imu_kernel = 10;
  int64_t imu_stride = 1;
  int64_t fmri_dim = 64;         // expected input vector length
  int64_t fmri_tokens = 4;       // output token count
};

// Greedy max-min selection over coordinates [P x C]. The first pick is
// `start`; each further pick maximizes its distance to the selected set,
// ties resolving to the lower index. Output is in selection order, so any
// prefix of the result is itself a valid smaller sample.
std::vector<int64_t> fps_sample(const Tensor& coords, int64_t n, int64_t start);

// points [P x 6] (xyz then rgb). Each group is its center followed by the
// group_size-1 nearest other points by xyz distance, ascending (distance,
// index). Returns row indices, centers.size() * group_size entries.
std::vector<int64_t> knn_group(const Tensor& points,
                               const std::vector<int64_t>& centers,
                               int64_t group_size);

// One learned front-end per modality, every one emitting a [L x dim] token
// sequence. Parameters are registered under "tok.<modality>." names. Signals
// are treated as data: gradients flow into the tokenizer weights, not into
// the raw inputs.
class TokenizerBank {
 public:
  TokenizerBank(const TokenizerConfig& cfg, ParamRegistry& reg, Rng& rng,
                Dtype dt = Dtype::F32);

  Tensor image(const Tensor& x) const;   // [3 x H x W]
  Tensor depth(const Tensor& x) const;   // [3 x H x W]
  Tensor normal(const Tensor& x) const;  // [3 x H x W]
  Tensor audio(const Tensor& x) const;   // [1 x H x W]
  Tensor point(const Tensor& x) const;   // [P x 6]
  Tensor imu(const Tensor& x) const;     // [6 x L]
  Tensor fmri(const Tensor& x) const;    // [F]
  // [T x 3 x H x W] -> one sequence per frame, via the image weights.
  std::vector<Tensor> video(const Tensor& x) const;

  // Dispatch for the single-sequence modalities. Video must go through
  // video() so the caller can average the per-frame encodings.
  Tensor tokenize(Modality m, const Tensor& signal) const;

  // Token count the active config yields for a signal of the given shape.
  int64_t token_count(Modality m, const std::vector<int64_t>& shape) const;

  const TokenizerConfig& config() const { return cfg_; }

 private:
  Tensor patch_tokens(const Parameter* w, const Parameter* b, const Tensor& x,
                      int64_t sh, int64_t sw) const;

  TokenizerConfig cfg_;
  Dtype dt_;
  Parameter* w_image_ = nullptr;
  Parameter* b_image_ = nullptr;
  Parameter* w_depth_ = nullptr;
  Parameter* b_depth_ = nullptr;
  Parameter* w_normal_ = nullptr;
  Parameter* b_normal_ = nullptr;
  Parameter* w_audio_ = nullptr;
  Parameter* b_audio_ = nullptr;
  Linear point_proj_;  // per-point 6 -> dim map, max-pooled per group
  Parameter* w_imu_ = nullptr;
  Parameter* b_imu_ = nullptr;
  Linear fmri_proj_;  // F -> fmri_tokens * dim, reshaped to tokens
};

}  // namespace omni
