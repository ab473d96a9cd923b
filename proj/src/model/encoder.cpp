#include "omni/model/encoder.hpp"

#include <string>

#include "omni/core/error.hpp"

namespace omni {

Tensor average_frames(const std::vector<Tensor>& frames) {
  if (frames.empty()) throw ArgError("average_frames: no frames");
  for (const Tensor& f : frames)
    if (f.shape() != frames[0].shape())
      throw ShapeError("average_frames: frames disagree on shape");
  std::vector<Tensor> level = frames;
  while (level.size() > 1) {
    std::vector<Tensor> next;
    for (size_t i = 0; i + 1 < level.size(); i += 2)
      next.push_back(add(level[i], level[i + 1]));
    if (level.size() % 2) next.push_back(level.back());
    level = std::move(next);
  }
  return scale(level[0], 1.0 / static_cast<double>(frames.size()));
}

Encoder::Encoder(const EncoderConfig& cfg, ParamRegistry& reg, Rng& rng, Dtype dt)
    : cfg_(cfg) {
  if (cfg.dim % cfg.heads != 0)
    throw ConfigError("encoder width must divide into heads");
  pos_ = &reg.add("enc.pos", Tensor::randn({cfg.max_len, cfg.dim}, rng, 0.02, dt));
  for (int64_t i = 0; i < cfg.depth; ++i)
    blocks_.emplace_back(reg, "enc.block" + std::to_string(i), cfg.dim, cfg.heads,
                         rng, dt);
  if (cfg.frozen) reg.set_frozen("enc.", true);
}

Tensor Encoder::encode(const Tensor& tokens) const {
  if (tokens.shape().size() != 2 || tokens.dim(1) != cfg_.dim)
    throw ConfigError("encoder wants [L x " + std::to_string(cfg_.dim) +
                      "] tokens, got " + shape_str(tokens.shape()));
  int64_t L = tokens.dim(0);
  if (L > cfg_.max_len)
    throw ShapeError("sequence length " + std::to_string(L) +
                     " exceeds encoder max_len " + std::to_string(cfg_.max_len));
  Tensor x = add(tokens, slice_rows(pos_->value, 0, L));
  for (const TransformerBlock& b : blocks_) x = b.forward(x, nullptr);
  return x;
}

Tensor Encoder::encode_video(const std::vector<Tensor>& frames) const {
  std::vector<Tensor> encoded;
  encoded.reserve(frames.size());
  for (const Tensor& f : frames) encoded.push_back(encode(f));
  return average_frames(encoded);
}

}  // namespace omni
