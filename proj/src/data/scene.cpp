#include "omni/data/scene.hpp"

#include <cmath>
#include <numbers>

namespace omni {

namespace {

constexpr double kPi = std::numbers::pi;

struct Pt {
  double x, y;
};

// Instance anchor layout per count, in normalized [0,1] coordinates.
std::vector<Pt> anchors(int count) {
  switch (count) {
    case 1: return {{0.50, 0.50}};
    case 2: return {{0.30, 0.32}, {0.70, 0.68}};
    case 3: return {{0.50, 0.26}, {0.28, 0.72}, {0.72, 0.72}};
    default: throw ArgError("scene count must be 1..3, got " + std::to_string(count));
  }
}

double shape_radius(SizeTag s) { return s == SizeTag::Small ? 0.12 : 0.21; }

bool inside_shape(Shape sh, double px, double py, double cx, double cy, double r) {
  double dx = px - cx, dy = py - cy;
  switch (sh) {
    case Shape::Square: return std::abs(dx) <= r && std::abs(dy) <= r;
    case Shape::Circle: return dx * dx + dy * dy <= r * r;
    case Shape::Triangle: {
      // apex up: vertices (cx, cy-r), (cx-r, cy+r), (cx+r, cy+r)
      if (dy < -r || dy > r) return false;
      double half = (dy + r) / 2.0;  // width grows linearly toward the base
      return std::abs(dx) <= half;
    }
  }
  return false;
}

// Per-instance jittered centers; consumed in a fixed order.
std::vector<Pt> jittered_centers(const SceneSpec& s, Rng& rng) {
  auto pts = anchors(s.count);
  for (auto& p : pts) {
    p.x += (rng.next_double() - 0.5) * 0.04;
    p.y += (rng.next_double() - 0.5) * 0.04;
  }
  return pts;
}

Tensor raster(const SceneSpec& s, const std::vector<Pt>& centers, Rng& rng,
              int64_t hw, double bg[3], double fg[3]) {
  Tensor out = Tensor::zeros({3, hw, hw});
  auto d = out.data<float>();
  double r = shape_radius(s.size);
  for (int64_t y = 0; y < hw; ++y)
    for (int64_t x = 0; x < hw; ++x) {
      double px = (static_cast<double>(x) + 0.5) / static_cast<double>(hw);
      double py = (static_cast<double>(y) + 0.5) / static_cast<double>(hw);
      bool in = false;
      for (const auto& c : centers)
        in = in || inside_shape(s.shape, px, py, c.x, c.y, r);
      double noise = rng.next_double() * 0.02;
      for (int64_t ch = 0; ch < 3; ++ch)
        d[static_cast<size_t>((ch * hw + y) * hw + x)] =
            static_cast<float>((in ? fg[ch] : bg[ch]) + noise);
    }
  return out;
}

}  // namespace

int scene_index(const SceneSpec& s) {
  if (s.count < 1 || s.count > 3)
    throw ArgError("scene count must be 1..3, got " + std::to_string(s.count));
  return ((static_cast<int>(s.shape) * 3 + static_cast<int>(s.color)) * 2 +
          static_cast<int>(s.size)) *
             3 +
         (s.count - 1);
}

SceneSpec scene_from_index(int idx) {
  if (idx < 0 || idx >= kNumScenes)
    throw ArgError("scene index out of range: " + std::to_string(idx));
  SceneSpec s;
  s.count = idx % 3 + 1;
  idx /= 3;
  s.size = static_cast<SizeTag>(idx % 2);
  idx /= 2;
  s.color = static_cast<ColorTag>(idx % 3);
  idx /= 3;
  s.shape = static_cast<Shape>(idx);
  return s;
}

SceneSpec generate_scene(Rng& rng) {
  return scene_from_index(static_cast<int>(rng.next_below(kNumScenes)));
}

const char* shape_word(Shape s) {
  switch (s) {
    case Shape::Square: return "square";
    case Shape::Circle: return "circle";
    case Shape::Triangle: return "triangle";
  }
  throw ArgError("bad shape tag");
}

const char* color_word(ColorTag c) {
  switch (c) {
    case ColorTag::Red: return "red";
    case ColorTag::Green: return "green";
    case ColorTag::Blue: return "blue";
  }
  throw ArgError("bad color tag");
}

const char* size_word(SizeTag s) { return s == SizeTag::Small ? "small" : "large"; }

const char* count_word(int count) {
  switch (count) {
    case 1: return "one";
    case 2: return "two";
    case 3: return "three";
    default: throw ArgError("scene count must be 1..3, got " + std::to_string(count));
  }
}

std::string caption_for(const SceneSpec& s) {
  std::string attrs = std::string(size_word(s.size)) + " " + color_word(s.color) +
                      " " + shape_word(s.shape);
  if (s.count == 1) return "a " + attrs;
  return std::string(count_word(s.count)) + " " + attrs + "s";
}

std::vector<QaItem> qa_pairs_for(const SceneSpec& s) {
  return {
      {"what shape is shown?", shape_word(s.shape)},
      {"what color is the shape?", color_word(s.color)},
      {"how many shapes are there?", count_word(s.count)},
      {"what size is the shape?", size_word(s.size)},
  };
}

const std::vector<std::string>& answer_vocab() {
  static const std::vector<std::string> v = {
      "square", "circle", "triangle", "red",   "green", "blue",
      "small",  "large",  "one",      "two",   "three",
  };
  return v;
}

// ---- renderers ----------------------------------------------------------

Tensor render_image(const SceneSpec& s, Rng& rng, const RenderGeom& g) {
  double bg[3] = {0.08, 0.08, 0.08};
  double fg[3] = {0.15, 0.15, 0.15};
  fg[static_cast<int>(s.color)] = 0.90;
  auto centers = jittered_centers(s, rng);
  return raster(s, centers, rng, g.image_hw, bg, fg);
}

Tensor render_video(const SceneSpec& s, Rng& rng, const RenderGeom& g) {
  int64_t T = s.count + 1;
  int64_t hw = g.image_hw;
  double bg[3] = {0.08, 0.08, 0.08};
  double fg[3] = {0.15, 0.15, 0.15};
  fg[static_cast<int>(s.color)] = 0.90;
  auto base = jittered_centers(s, rng);
  Tensor out = Tensor::zeros({T, 3, hw, hw});
  auto d = out.data<float>();
  int64_t frame_sz = 3 * hw * hw;
  for (int64_t t = 0; t < T; ++t) {
    auto centers = base;
    // constant drift makes motion direction a frame-order signal
    for (auto& c : centers) {
      c.x += 0.035 * static_cast<double>(t);
      c.y += 0.012 * static_cast<double>(t);
    }
    Tensor frame = raster(s, centers, rng, hw, bg, fg);
    std::copy_n(frame.data<float>().data(), frame_sz, d.data() + t * frame_sz);
  }
  return out;
}

Tensor render_audio(const SceneSpec& s, Rng& rng, const RenderGeom& g) {
  int64_t B = g.audio_bins, F = g.audio_frames;
  Tensor out = Tensor::zeros({1, B, F});
  auto d = out.data<float>();
  double f0 = 4.0 + 5.0 * static_cast<double>(s.shape);       // fundamental bin
  double sigma = s.size == SizeTag::Small ? 0.8 : 2.0;        // band width
  double mod_rate = 1.0 + static_cast<double>(s.color);       // tremolo speed
  int bursts = s.count;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t t = 0; t < F; ++t) {
      double tt = static_cast<double>(t) / static_cast<double>(F);
      double env = 0.0;
      for (int k = 0; k < bursts; ++k) {
        double center = (static_cast<double>(k) + 0.5) / static_cast<double>(bursts);
        double w = 0.5 / (2.0 * static_cast<double>(bursts));
        env += std::exp(-(tt - center) * (tt - center) / (2.0 * w * w));
      }
      double tone = 0.0;
      for (int h = 1; h <= 2; ++h) {
        double fb = f0 * static_cast<double>(h);
        tone += std::exp(-(static_cast<double>(b) - fb) * (static_cast<double>(b) - fb) /
                         (2.0 * sigma * sigma));
      }
      double mod = 0.6 + 0.4 * std::sin(2.0 * kPi * mod_rate * tt);
      d[static_cast<size_t>(b * F + t)] = static_cast<float>(
          0.05 + 0.85 * env * tone * mod + rng.next_double() * 0.02);
    }
  return out;
}

Tensor render_point(const SceneSpec& s, Rng& rng, const RenderGeom& g) {
  int64_t P = g.point_raw;
  Tensor out = Tensor::zeros({P, 6});
  auto d = out.data<float>();
  double r = shape_radius(s.size) * 1.5;
  double rgb[3] = {0.1, 0.1, 0.1};
  rgb[static_cast<int>(s.color)] = 0.9;
  auto cls = anchors(s.count);
  for (int64_t i = 0; i < P; ++i) {
    int cluster = static_cast<int>(i % static_cast<int64_t>(cls.size()));
    double u = rng.next_double();  // position along the outline
    double x = 0, y = 0;
    switch (s.shape) {
      case Shape::Circle:
        x = r * std::cos(2.0 * kPi * u);
        y = r * std::sin(2.0 * kPi * u);
        break;
      case Shape::Square: {
        double t4 = u * 4.0;
        int side = static_cast<int>(t4);
        double f = t4 - side;
        if (side == 0) { x = -r + 2 * r * f; y = -r; }
        else if (side == 1) { x = r; y = -r + 2 * r * f; }
        else if (side == 2) { x = r - 2 * r * f; y = r; }
        else { x = -r; y = r - 2 * r * f; }
        break;
      }
      case Shape::Triangle: {
        double t3 = u * 3.0;
        int side = static_cast<int>(t3);
        double f = t3 - side;
        Pt v0{0, -r}, v1{-r, r}, v2{r, r};
        Pt a = side == 0 ? v0 : side == 1 ? v1 : v2;
        Pt b = side == 0 ? v1 : side == 1 ? v2 : v0;
        x = a.x + (b.x - a.x) * f;
        y = a.y + (b.y - a.y) * f;
        break;
      }
    }
    double jx = (rng.next_double() - 0.5) * 0.02;
    double jy = (rng.next_double() - 0.5) * 0.02;
    double jz = (rng.next_double() - 0.5) * 0.02;
    d[static_cast<size_t>(i * 6 + 0)] = static_cast<float>(cls[static_cast<size_t>(cluster)].x + x + jx);
    d[static_cast<size_t>(i * 6 + 1)] = static_cast<float>(cls[static_cast<size_t>(cluster)].y + y + jy);
    d[static_cast<size_t>(i * 6 + 2)] = static_cast<float>(0.5 + jz);
    d[static_cast<size_t>(i * 6 + 3)] = static_cast<float>(rgb[0]);
    d[static_cast<size_t>(i * 6 + 4)] = static_cast<float>(rgb[1]);
    d[static_cast<size_t>(i * 6 + 5)] = static_cast<float>(rgb[2]);
  }
  return out;
}

Tensor render_depth(const SceneSpec& s, Rng& rng, const RenderGeom& g) {
  // Depth has no chroma, so color is encoded as a deliberate offset in both
  // the background plane and the object depth; the grid stays injective.
  double base = s.size == SizeTag::Small ? 0.55 : 0.25;
  double tint = 0.04 * static_cast<double>(s.color);
  double bgv = 0.88 + tint, fgv = base + tint;
  double bg[3] = {bgv, bgv, bgv};
  double fg[3] = {fgv, fgv, fgv};
  auto centers = jittered_centers(s, rng);
  return raster(s, centers, rng, g.image_hw, bg, fg);
}

Tensor render_normal(const SceneSpec& s, Rng& rng, const RenderGeom& g) {
  // Background faces the camera; objects are planes tilted toward a
  // color-dependent direction with a size-dependent slant.
  double ang = 2.0 * kPi * static_cast<double>(s.color) / 3.0;
  double slant = s.size == SizeTag::Small ? 0.25 : 0.45;
  double bg[3] = {0.5, 0.5, 1.0};
  double fg[3] = {0.5 + slant * std::cos(ang), 0.5 + slant * std::sin(ang),
                  1.0 - slant};
  auto centers = jittered_centers(s, rng);
  return raster(s, centers, rng, g.image_hw, bg, fg);
}

Tensor render_imu(const SceneSpec& s, Rng& rng, const RenderGeom& g) {
  int64_t L = g.imu_len;
  Tensor out = Tensor::zeros({6, L});
  auto d = out.data<float>();
  double freq = 2.0 + 2.0 * static_cast<double>(s.shape);
  double phase = 2.0 * kPi * static_cast<double>(s.color) / 3.0;
  double amp = s.size == SizeTag::Small ? 0.4 : 0.9;
  int bursts = s.count;
  for (int64_t c = 0; c < 6; ++c)
    for (int64_t t = 0; t < L; ++t) {
      double tt = static_cast<double>(t) / static_cast<double>(L);
      double env = 0.0;
      for (int k = 0; k < bursts; ++k) {
        double center = (static_cast<double>(k) + 0.5) / static_cast<double>(bursts);
        double w = 0.4 / (2.0 * static_cast<double>(bursts));
        env += std::exp(-(tt - center) * (tt - center) / (2.0 * w * w));
      }
      double carrier = c < 3 ? std::sin(2.0 * kPi * freq * tt + phase +
                                        static_cast<double>(c) * kPi / 7.0)
                             : std::cos(2.0 * kPi * freq * tt + phase +
                                        static_cast<double>(c) * kPi / 7.0);
      d[static_cast<size_t>(c * L + t)] = static_cast<float>(
          amp * env * carrier + (rng.next_double() - 0.5) * 0.04);
    }
  return out;
}

Tensor render_fmri(const SceneSpec& s, Rng& rng, const RenderGeom& g) {
  int64_t F = g.fmri_dim;
  if (F < 16) throw ArgError("fmri_dim must be >= 16");
  Tensor out = Tensor::zeros({F});
  auto d = out.data<float>();
  int64_t block = F / 4;
  auto bump = [&](int64_t b0, double center, double width) {
    for (int64_t i = 0; i < block; ++i) {
      double x = static_cast<double>(i);
      d[static_cast<size_t>(b0 + i)] +=
          static_cast<float>(std::exp(-(x - center) * (x - center) / (2.0 * width * width)));
    }
  };
  double unit = static_cast<double>(block) / 8.0;
  bump(0 * block, (1.0 + 2.5 * static_cast<double>(s.shape)) * unit, unit * 0.7);
  bump(1 * block, (1.0 + 2.5 * static_cast<double>(s.color)) * unit, unit * 0.7);
  bump(2 * block, (1.5 + 4.0 * static_cast<double>(s.size)) * unit, unit * 0.7);
  bump(3 * block, (1.0 + 2.5 * static_cast<double>(s.count - 1)) * unit, unit * 0.7);
  for (int64_t i = 0; i < F; ++i)
    d[static_cast<size_t>(i)] += static_cast<float>((rng.next_double() - 0.5) * 0.04);
  return out;
}

Tensor render_signal(Modality m, const SceneSpec& s, Rng& rng, const RenderGeom& g) {
  switch (m) {
    case Modality::Image: return render_image(s, rng, g);
    case Modality::Video: return render_video(s, rng, g);
    case Modality::Audio: return render_audio(s, rng, g);
    case Modality::Point: return render_point(s, rng, g);
    case Modality::Depth: return render_depth(s, rng, g);
    case Modality::Normal: return render_normal(s, rng, g);
    case Modality::Imu: return render_imu(s, rng, g);
    case Modality::Fmri: return render_fmri(s, rng, g);
  }
  throw ArgError("bad modality tag");
}

SceneItem make_item(Modality m, uint64_t data_seed, const std::string& split,
                    uint64_t index, const RenderGeom& g) {
  SceneItem item;
  item.modality = m;
  // one derived stream per (split, modality, index); order-independent
  std::string purpose = std::string("item/") + split + "/" + modality_name(m);
  Rng rng = derive_rng(data_seed, purpose, index);
  item.item_seed = rng.state();
  item.spec = generate_scene(rng);
  item.signal = render_signal(m, item.spec, rng, g);
  item.caption = caption_for(item.spec);
  item.qa = qa_pairs_for(item.spec);
  return item;
}

}  // namespace omni
