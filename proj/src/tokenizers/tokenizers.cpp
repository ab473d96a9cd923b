#include "omni/tokenizers/tokenizers.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include "omni/core/error.hpp"

namespace omni {

namespace {

void require_shape(bool ok, const std::string& what, const Tensor& got) {
  if (!ok)
    throw ShapeError(what + ", got " + shape_str(got.shape()));
}

int64_t conv_out(int64_t extent, int64_t k, int64_t s) {
  return (extent - k) / s + 1;
}

Parameter* add_conv_w(ParamRegistry& reg, const std::string& name,
                      std::vector<int64_t> shape, Rng& rng, Dtype dt) {
  return &reg.add(name, Tensor::randn(std::move(shape), rng, 0.02, dt), true);
}

Parameter* add_conv_b(ParamRegistry& reg, const std::string& name, int64_t n,
                      Dtype dt) {
  return &reg.add(name, Tensor::zeros({n}, dt), false);
}

}  // namespace

std::vector<int64_t> fps_sample(const Tensor& coords, int64_t n, int64_t start) {
  if (coords.shape().size() != 2)
    throw ShapeError("fps_sample wants [P x C] coordinates, got " +
                     shape_str(coords.shape()));
  int64_t P = coords.dim(0), C = coords.dim(1);
  if (n < 1 || n > P)
    throw ArgError("fps_sample: n=" + std::to_string(n) + " outside [1, " +
                   std::to_string(P) + "]");
  if (start < 0 || start >= P) throw ArgError("fps_sample: start out of range");

  std::vector<double> v = coords.to_vector();
  auto d2 = [&](int64_t a, int64_t b) {
    double acc = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      double d = v[a * C + c] - v[b * C + c];
      acc += d * d;
    }
    return acc;
  };

  std::vector<int64_t> picked;
  picked.reserve(n);
  picked.push_back(start);
  std::vector<double> best(P, std::numeric_limits<double>::infinity());
  best[start] = -1.0;  // picked entries sit strictly below any real distance
  for (int64_t step = 1; step < n; ++step) {
    int64_t last = picked.back();
    int64_t arg = -1;
    double far = -1.0;
    for (int64_t i = 0; i < P; ++i) {
      best[i] = std::min(best[i], d2(i, last));
      if (best[i] > far) {
        far = best[i];
        arg = i;
      }
    }
    picked.push_back(arg);
    best[arg] = -1.0;
  }
  return picked;
}

std::vector<int64_t> knn_group(const Tensor& points,
                               const std::vector<int64_t>& centers,
                               int64_t group_size) {
  require_shape(points.shape().size() == 2 && points.dim(1) == 6,
                "knn_group wants [P x 6] points", points);
  int64_t P = points.dim(0);
  if (group_size < 1 || group_size > P)
    throw ArgError("knn_group: group_size=" + std::to_string(group_size) +
                   " outside [1, " + std::to_string(P) + "]");

  std::vector<double> v = points.to_vector();
  std::vector<int64_t> out;
  out.reserve(centers.size() * static_cast<size_t>(group_size));
  std::vector<std::pair<double, int64_t>> order(P);
  for (int64_t c : centers) {
    if (c < 0 || c >= P) throw ArgError("knn_group: center index out of range");
    for (int64_t i = 0; i < P; ++i) {
      double acc = 0.0;
      for (int64_t k = 0; k < 3; ++k) {
        double d = v[i * 6 + k] - v[c * 6 + k];
        acc += d * d;
      }
      order[i] = {acc, i};
    }
    // center first regardless of distance ties, then ascending (d2, index)
    std::swap(order[0], order[c]);
    std::sort(order.begin() + 1, order.end());
    for (int64_t g = 0; g < group_size; ++g) out.push_back(order[g].second);
  }
  return out;
}

TokenizerBank::TokenizerBank(const TokenizerConfig& cfg, ParamRegistry& reg,
                             Rng& rng, Dtype dt)
    : cfg_(cfg), dt_(dt) {
  int64_t D = cfg.dim, p = cfg.image_patch, ak = cfg.audio_kernel;
  w_image_ = add_conv_w(reg, "tok.image.w", {D, 3, p, p}, rng, dt);
  b_image_ = add_conv_b(reg, "tok.image.b", D, dt);
  w_depth_ = add_conv_w(reg, "tok.depth.w", {D, 3, p, p}, rng, dt);
  b_depth_ = add_conv_b(reg, "tok.depth.b", D, dt);
  w_normal_ = add_conv_w(reg, "tok.normal.w", {D, 3, p, p}, rng, dt);
  b_normal_ = add_conv_b(reg, "tok.normal.b", D, dt);
  w_audio_ = add_conv_w(reg, "tok.audio.w", {D, 1, ak, ak}, rng, dt);
  b_audio_ = add_conv_b(reg, "tok.audio.b", D, dt);
  point_proj_ = Linear(reg, "tok.point", 6, D, rng, dt);
  w_imu_ = add_conv_w(reg, "tok.imu.w", {D, 6, cfg.imu_kernel}, rng, dt);
  b_imu_ = add_conv_b(reg, "tok.imu.b", D, dt);
  fmri_proj_ = Linear(reg, "tok.fmri", cfg.fmri_dim, cfg.fmri_tokens * D, rng, dt);
}

Tensor TokenizerBank::patch_tokens(const Parameter* w, const Parameter* b,
                                   const Tensor& x, int64_t sh, int64_t sw) const {
  Tensor grid = conv2d(x, w->value, b->value, sh, sw);  // [D x Ho x Wo]
  int64_t D = grid.dim(0), L = grid.dim(1) * grid.dim(2);
  return transpose2d(reshape(grid, {D, L}));  // row-major positions -> [L x D]
}

Tensor TokenizerBank::image(const Tensor& x) const {
  require_shape(x.shape().size() == 3 && x.dim(0) == 3 &&
                    x.dim(1) >= cfg_.image_patch && x.dim(2) >= cfg_.image_patch,
                "image tokenizer wants [3 x H x W] with H,W >= patch", x);
  int64_t p = cfg_.image_patch;
  return patch_tokens(w_image_, b_image_, x, p, p);
}

Tensor TokenizerBank::depth(const Tensor& x) const {
  require_shape(x.shape().size() == 3 && x.dim(0) == 3 &&
                    x.dim(1) >= cfg_.image_patch && x.dim(2) >= cfg_.image_patch,
                "depth tokenizer wants [3 x H x W] with H,W >= patch", x);
  int64_t p = cfg_.image_patch;
  return patch_tokens(w_depth_, b_depth_, x, p, p);
}

Tensor TokenizerBank::normal(const Tensor& x) const {
  require_shape(x.shape().size() == 3 && x.dim(0) == 3 &&
                    x.dim(1) >= cfg_.image_patch && x.dim(2) >= cfg_.image_patch,
                "normal tokenizer wants [3 x H x W] with H,W >= patch", x);
  int64_t p = cfg_.image_patch;
  return patch_tokens(w_normal_, b_normal_, x, p, p);
}

Tensor TokenizerBank::audio(const Tensor& x) const {
  require_shape(x.shape().size() == 3 && x.dim(0) == 1 &&
                    x.dim(1) >= cfg_.audio_kernel && x.dim(2) >= cfg_.audio_kernel,
                "audio tokenizer wants [1 x H x W] with H,W >= kernel", x);
  return patch_tokens(w_audio_, b_audio_, x, cfg_.audio_stride, cfg_.audio_stride);
}

Tensor TokenizerBank::point(const Tensor& x) const {
  require_shape(x.shape().size() == 2 && x.dim(1) == 6,
                "point tokenizer wants [P x 6] xyz+rgb", x);
  int64_t P = x.dim(0);
  if (P < cfg_.point_samples)
    throw ShapeError("point tokenizer wants >= " +
                     std::to_string(cfg_.point_samples) + " points, got " +
                     std::to_string(P));

  // Canonical order first so tokenization ignores input point order: sort by
  // the full 6-tuple (xyz dominates, rgb breaks exact-position duplicates).
  std::vector<double> raw = x.to_vector();
  std::vector<int64_t> order(P);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return std::lexicographical_compare(raw.begin() + a * 6, raw.begin() + a * 6 + 6,
                                        raw.begin() + b * 6, raw.begin() + b * 6 + 6);
  });
  std::vector<double> sorted(raw.size());
  for (int64_t i = 0; i < P; ++i)
    std::copy_n(raw.begin() + order[i] * 6, 6, sorted.begin() + i * 6);
  Tensor canon = Tensor::from_data({P, 6}, sorted, dt_);

  std::vector<double> xyz(P * 3);
  for (int64_t i = 0; i < P; ++i)
    std::copy_n(sorted.begin() + i * 6, 3, xyz.begin() + i * 3);
  std::vector<int64_t> fps =
      fps_sample(Tensor::from_data({P, 3}, xyz, dt_), cfg_.point_samples, 0);

  std::vector<double> samp(cfg_.point_samples * 6);
  for (int64_t i = 0; i < cfg_.point_samples; ++i)
    std::copy_n(sorted.begin() + fps[i] * 6, 6, samp.begin() + i * 6);
  Tensor sampled = Tensor::from_data({cfg_.point_samples, 6}, samp, dt_);

  // FPS emits picks in max-min order, so its first point_groups entries are
  // themselves a valid FPS sample; they serve as the group centers.
  std::vector<int64_t> centers(cfg_.point_groups);
  std::iota(centers.begin(), centers.end(), 0);
  std::vector<int64_t> rows = knn_group(sampled, centers, cfg_.point_group_size);

  std::vector<double> flat(rows.size() * 6);
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy_n(samp.begin() + rows[i] * 6, 6, flat.begin() + i * 6);
  Tensor grouped = Tensor::from_data(
      {static_cast<int64_t>(rows.size()), 6}, flat, dt_);

  Tensor per_point = point_proj_.forward(grouped);  // [(G*S) x D]
  return segment_max(per_point, cfg_.point_group_size);
}

Tensor TokenizerBank::imu(const Tensor& x) const {
  require_shape(x.shape().size() == 2 && x.dim(0) == 6 &&
                    x.dim(1) >= cfg_.imu_kernel,
                "imu tokenizer wants [6 x L] with L >= kernel", x);
  Tensor grid = conv1d(x, w_imu_->value, b_imu_->value, cfg_.imu_stride);
  return transpose2d(grid);  // [L x D]
}

Tensor TokenizerBank::fmri(const Tensor& x) const {
  require_shape(x.shape().size() == 1 && x.dim(0) == cfg_.fmri_dim,
                "fmri tokenizer wants [" + std::to_string(cfg_.fmri_dim) + "]", x);
  Tensor row = fmri_proj_.forward(reshape(x, {1, cfg_.fmri_dim}));
  return reshape(row, {cfg_.fmri_tokens, cfg_.dim});
}

std::vector<Tensor> TokenizerBank::video(const Tensor& x) const {
  require_shape(x.shape().size() == 4 && x.dim(0) >= 1 && x.dim(1) == 3 &&
                    x.dim(2) >= cfg_.image_patch && x.dim(3) >= cfg_.image_patch,
                "video tokenizer wants [T x 3 x H x W]", x);
  int64_t T = x.dim(0), frame_numel = x.dim(1) * x.dim(2) * x.dim(3);
  std::vector<double> v = x.to_vector();
  std::vector<Tensor> out;
  out.reserve(T);
  for (int64_t t = 0; t < T; ++t) {
    std::vector<double> frame(v.begin() + t * frame_numel,
                              v.begin() + (t + 1) * frame_numel);
    Tensor f = Tensor::from_data({x.dim(1), x.dim(2), x.dim(3)}, frame, dt_);
    out.push_back(image(f));
  }
  return out;
}

Tensor TokenizerBank::tokenize(Modality m, const Tensor& signal) const {
  switch (m) {
    case Modality::Image: return image(signal);
    case Modality::Audio: return audio(signal);
    case Modality::Point: return point(signal);
    case Modality::Depth: return depth(signal);
    case Modality::Normal: return normal(signal);
    case Modality::Imu: return imu(signal);
    case Modality::Fmri: return fmri(signal);
    case Modality::Video:
      throw ArgError("video yields one sequence per frame; use video()");
  }
  throw ArgError("unknown modality");
}

int64_t TokenizerBank::token_count(Modality m,
                                   const std::vector<int64_t>& shape) const {
  switch (m) {
    case Modality::Image:
    case Modality::Depth:
    case Modality::Normal:
      return conv_out(shape.at(1), cfg_.image_patch, cfg_.image_patch) *
             conv_out(shape.at(2), cfg_.image_patch, cfg_.image_patch);
    case Modality::Video:
      return conv_out(shape.at(2), cfg_.image_patch, cfg_.image_patch) *
             conv_out(shape.at(3), cfg_.image_patch, cfg_.image_patch);
    case Modality::Audio:
      return conv_out(shape.at(1), cfg_.audio_kernel, cfg_.audio_stride) *
             conv_out(shape.at(2), cfg_.audio_kernel, cfg_.audio_stride);
    case Modality::Point: return cfg_.point_groups;
    case Modality::Imu: return conv_out(shape.at(1), cfg_.imu_kernel, cfg_.imu_stride);
    case Modality::Fmri: return cfg_.fmri_tokens;
  }
  throw ArgError("unknown modality");
}

}  // namespace omni
