#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "omni/core/gradcheck.hpp"
#include "omni/model/model.hpp"

using namespace omni;

namespace {

ModelConfig small_cfg() {
  ModelConfig cfg;  // defaults are the full small setup
  return cfg;
}

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.tok.dim = 8;
  cfg.enc.dim = 8;
  cfg.enc.heads = 2;
  cfg.enc.depth = 1;
  cfg.enc.max_len = 24;
  cfg.upm.dim = 8;
  cfg.upm.heads = 2;
  cfg.upm.experts = 2;
  cfg.upm.expert_depth = 1;
  cfg.upm.num_tokens = 2;
  cfg.upm.lm_dim = 8;
  cfg.dec.dim = 8;
  cfg.dec.heads = 2;
  cfg.dec.depth = 1;
  cfg.dec.max_seq = 32;
  return cfg;
}

}  // namespace

TEST_CASE("mismatched component widths are rejected") {
  ModelConfig cfg = small_cfg();
  cfg.tok.dim = 32;
  CHECK_THROWS_AS(Model(cfg, 1), ConfigError);
  cfg = small_cfg();
  cfg.upm.lm_dim = 32;
  CHECK_THROWS_AS(Model(cfg, 1), ConfigError);
}

TEST_CASE("every modality flows through to prefix tokens") {
  Model model(small_cfg(), 11);
  Rng rng(42);
  struct Case {
    Modality m;
    std::vector<int64_t> shape;
    int64_t tokens;
  };
  std::vector<Case> cases = {
      {Modality::Image, {3, 28, 28}, 16},  {Modality::Video, {3, 3, 28, 28}, 16},
      {Modality::Audio, {1, 32, 64}, 10},  {Modality::Point, {96, 6}, 8},
      {Modality::Depth, {3, 28, 28}, 16},  {Modality::Normal, {3, 28, 28}, 16},
      {Modality::Imu, {6, 64}, 55},        {Modality::Fmri, {64}, 4},
  };
  for (const auto& c : cases) {
    CAPTURE(modality_name(c.m));
    Tensor sig = Tensor::randn(c.shape, rng, 1.0);
    Tensor emb = model.embed(c.m, sig);
    REQUIRE(emb.dim(0) == c.tokens);
    REQUIRE(emb.dim(1) == 64);
    ProjectorOutput out = model.project(c.m, sig);
    REQUIRE(out.tokens.dim(0) == 4);
    REQUIRE(out.tokens.dim(1) == 64);
    REQUIRE(out.weights.dim(0) == 4);
    REQUIRE(out.weights.dim(1) == 3);
    for (int64_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int64_t k = 0; k < 3; ++k) s += out.weights.at({r, k});
      CHECK(s == Catch::Approx(1.0).margin(1e-5));
    }
  }
}

TEST_CASE("single-frame video embeds exactly like the still image") {
  Model model(small_cfg(), 12);
  Rng rng(5);
  Tensor vid = Tensor::randn({1, 3, 28, 28}, rng, 1.0);
  Tensor img = reshape(vid, {3, 28, 28});
  Tensor ev = model.embed(Modality::Video, vid);
  Tensor ei = model.embed(Modality::Image, img);
  auto a = ev.data<float>(), b = ei.data<float>();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("seeded construction is reproducible") {
  Model a(small_cfg(), 77), b(small_cfg(), 77), c(small_cfg(), 78);
  CHECK(a.params().content_hash("") == b.params().content_hash(""));
  CHECK(a.params().content_hash("") != c.params().content_hash(""));
  // component prefixes all present
  for (const char* pfx : {"tok.", "enc.", "upm.", "dec."})
    CHECK(a.params().with_prefix(pfx).size() > 0);
}

TEST_CASE("alignment freeze policy: gradients stop at encoder and decoder") {
  Model model(small_cfg(), 13);  // encoder frozen by default
  model.params().set_frozen("dec.", true);
  Rng rng(6);
  Tensor sig = Tensor::randn({3, 28, 28}, rng, 1.0);
  Tensor loss = model.alignment_loss(Modality::Image, sig, "a dot");
  CHECK(std::isfinite(loss.scalar()));
  CHECK(loss.scalar() == Catch::Approx(std::log(259.0)).margin(0.5));
  loss.backward();
  // the image path plus all shared projection weights must receive gradients;
  // frozen prefixes and the seven unused modality branches must not
  auto on_image_path = [](const std::string& n) {
    for (const char* pfx : {"tok.image", "upm.q.image", "upm.router.image",
                            "upm.expert", "upm.adapter"})
      if (n.rfind(pfx, 0) == 0) return true;
    return false;
  };
  for (auto& p : model.params().all()) {
    CAPTURE(p->name);
    if (p->value.has_grad()) {
      CHECK_FALSE(p->frozen);
      CHECK(on_image_path(p->name));
    } else {
      CHECK((p->frozen || !on_image_path(p->name)));
    }
  }
}

TEST_CASE("instruction loss runs over mixed-modality prompts") {
  Model model(small_cfg(), 14);
  Rng rng(7);
  Tensor img = Tensor::randn({3, 28, 28}, rng, 1.0);
  Tensor pts = Tensor::randn({96, 6}, rng, 1.0);
  Tensor loss = model.instruction_loss(
      {{Modality::Image, img}, {Modality::Point, pts}}, "answer briefly",
      {{"what shape?", "circle"}, {"how many?", "two"}});
  CHECK(std::isfinite(loss.scalar()));
  CHECK(loss.scalar() == Catch::Approx(std::log(259.0)).margin(0.5));
}

TEST_CASE("generation and option scoring are deterministic and sane") {
  Model model(small_cfg(), 15);
  Rng rng(8);
  Tensor sig = Tensor::randn({1, 32, 64}, rng, 1.0);
  std::string c1 = model.caption(Modality::Audio, sig, 8);
  std::string c2 = model.caption(Modality::Audio, sig, 8);
  CHECK(c1 == c2);
  CHECK(c1.size() <= 8);
  double lp = model.option_logprob({{Modality::Audio, sig}}, "pick a letter",
                                   "which? A or B", "A");
  CHECK(std::isfinite(lp));
  CHECK(lp < 0.0);
  CHECK_THROWS_AS(model.option_logprob({}, "s", "q", "A"), ArgError);
}

TEST_CASE("composite gradients agree with finite differences") {
  ModelConfig cfg = tiny_cfg();
  cfg.enc.frozen = false;  // check every parameter, nothing skipped
  Model model(cfg, 21, Dtype::F64);
  Rng rng(9);
  Tensor img = Tensor::randn({3, 28, 28}, rng, 1.0, Dtype::F64);
  Tensor pts = Tensor::randn({96, 6}, rng, 1.0, Dtype::F64);
  Tensor fm = Tensor::randn({64}, rng, 1.0, Dtype::F64);
  auto loss = [&]() {
    Tensor l = model.alignment_loss(Modality::Image, img, "dot");
    l = add(l, model.alignment_loss(Modality::Point, pts, "two"));
    return add(l, model.alignment_loss(Modality::Fmri, fm, "up"));
  };
  std::vector<Tensor> params;
  for (auto& p : model.params().all()) params.push_back(p->value);
  Rng pick(10);
  auto rep = gradcheck(loss, params, 2, pick);
  INFO("worst " << rep.worst << " over " << rep.coords_checked << " coords");
  CHECK(rep.max_rel_err < 1e-6);
}
