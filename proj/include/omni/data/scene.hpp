#pragma once

#include <string>
#include <vector>

#include "omni/core/tensor.hpp"
#include "omni/data/modality.hpp"

namespace omni {

// The synthetic world is a 3*3*2*3 = 54-cell grid. Every paired example in
// every modality is some rendering of one of these specs, which is what makes
// cross-modal alignment well-posed at desk scale.

enum class Shape : uint8_t { Square = 0, Circle = 1, Triangle = 2 };
enum class SizeTag : uint8_t { Small = 0, Large = 1 };
enum class ColorTag : uint8_t { Red = 0, Green = 1, Blue = 2 };

struct SceneSpec {
  Shape shape = Shape::Square;
  ColorTag color = ColorTag::Red;
  SizeTag size = SizeTag::Small;
  int count = 1;  // 1..3
  bool operator==(const SceneSpec&) const = default;
};

inline constexpr int kNumScenes = 54;

// Canonical shape-major enumeration of the grid.
int scene_index(const SceneSpec& s);
SceneSpec scene_from_index(int idx);
SceneSpec generate_scene(Rng& rng);  // uniform over the grid

const char* shape_word(Shape s);
const char* color_word(ColorTag c);
const char* size_word(SizeTag s);
const char* count_word(int count);  // "one".."three"

// "a small red square" / "two large blue circles" / ...
std::string caption_for(const SceneSpec& s);

struct QaItem {
  std::string question;
  std::string answer;  // always a single word from answer_vocab()
};
// One question per attribute, fixed order: shape, color, count, size.
std::vector<QaItem> qa_pairs_for(const SceneSpec& s);
// The 11-word closed answer vocabulary.
const std::vector<std::string>& answer_vocab();

// Signal geometry shared by the renderers and the tokenizers.
struct RenderGeom {
  int64_t image_hw = 28;
  int64_t audio_bins = 32;
  int64_t audio_frames = 64;
  int64_t point_raw = 96;  // points emitted per cloud
  int64_t imu_len = 64;
  int64_t fmri_dim = 64;
};

// Renderers are deterministic in (spec, rng state). The spec controls the
// coarse structure; the rng only adds small jitter, so the 54 classes stay
// linearly separable. All values lie in [0, 1] give or take noise.
Tensor render_image(const SceneSpec& s, Rng& rng, const RenderGeom& g);   // [3,H,W]
Tensor render_video(const SceneSpec& s, Rng& rng, const RenderGeom& g);   // [T,3,H,W], T=count+1
Tensor render_audio(const SceneSpec& s, Rng& rng, const RenderGeom& g);   // [1,B,F]
Tensor render_point(const SceneSpec& s, Rng& rng, const RenderGeom& g);   // [P,6]
Tensor render_depth(const SceneSpec& s, Rng& rng, const RenderGeom& g);   // [3,H,W]
Tensor render_normal(const SceneSpec& s, Rng& rng, const RenderGeom& g);  // [3,H,W]
Tensor render_imu(const SceneSpec& s, Rng& rng, const RenderGeom& g);     // [6,L]
Tensor render_fmri(const SceneSpec& s, Rng& rng, const RenderGeom& g);    // [F]

Tensor render_signal(Modality m, const SceneSpec& s, Rng& rng, const RenderGeom& g);

// One paired example: a raw signal plus its text annotations.
struct SceneItem {
  Modality modality = Modality::Image;
  SceneSpec spec;
  uint64_t item_seed = 0;
  Tensor signal;
  std::string caption;
  std::vector<QaItem> qa;
};

// Deterministic item factory: (data_seed, split, index) fully determine the
// item, independent of generation order. Distinct splits draw from disjoint
// derived streams.
SceneItem make_item(Modality m, uint64_t data_seed, const std::string& split,
                    uint64_t index, const RenderGeom& g);

}  // namespace omni
