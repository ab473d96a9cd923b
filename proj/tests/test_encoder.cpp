#include <catch2/catch_amalgamated.hpp>

#include "omni/core/gradcheck.hpp"
#include "omni/model/encoder.hpp"

using namespace omni;

namespace {

Encoder make_encoder(ParamRegistry& reg, bool frozen, Dtype dt = Dtype::F32,
                     uint64_t seed = 5) {
  EncoderConfig cfg;
  cfg.depth = 2;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.max_len = 12;
  cfg.frozen = frozen;
  Rng rng(seed);
  return Encoder(cfg, reg, rng, dt);
}

}  // namespace

TEST_CASE("encode preserves sequence length and width") {
  ParamRegistry reg;
  Encoder enc = make_encoder(reg, true);
  Rng rng(1);
  for (int64_t L : {1, 3, 7, 12}) {
    Tensor x = Tensor::randn({L, 16}, rng, 1.0);
    CHECK(enc.encode(x).shape() == std::vector<int64_t>{L, 16});
  }
  CHECK_THROWS_AS(enc.encode(Tensor::randn({13, 16}, rng, 1.0)), ShapeError);
  CHECK_THROWS_AS(enc.encode(Tensor::randn({4, 8}, rng, 1.0)), ConfigError);
}

TEST_CASE("encoding is deterministic") {
  ParamRegistry reg;
  Encoder enc = make_encoder(reg, true);
  Rng rng(2);
  Tensor x = Tensor::randn({5, 16}, rng, 1.0);
  Tensor a = enc.encode(x);
  Tensor b = enc.encode(x);
  auto pa = a.data<float>();
  auto pb = b.data<float>();
  for (size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i] == pb[i]);
}

TEST_CASE("frozen encoder takes no gradient but passes it upstream") {
  ParamRegistry reg;
  Rng rng(3);
  Linear up(reg, "up", 16, 16, rng, Dtype::F32);
  Encoder enc = make_encoder(reg, true);
  CHECK(reg.at("enc.pos").frozen);
  CHECK(reg.at("enc.block1.mlp.fc2.w").frozen);
  CHECK_FALSE(reg.at("enc.pos").value.requires_grad());

  Tensor x = Tensor::randn({4, 16}, rng, 1.0);
  Tensor loss = sum_all(enc.encode(up.forward(x)));
  loss.backward();
  CHECK_FALSE(reg.at("enc.pos").value.has_grad());
  CHECK_FALSE(reg.at("enc.block0.attn.wq.w").value.has_grad());
  REQUIRE(up.w->value.has_grad());
  double mag = 0;
  for (double g : up.w->value.grad_tensor().to_vector()) mag += std::abs(g);
  CHECK(mag > 0);
}

TEST_CASE("thawed encoder takes gradient") {
  ParamRegistry reg;
  Encoder enc = make_encoder(reg, false);
  Rng rng(4);
  Tensor x = Tensor::randn({4, 16}, rng, 1.0);
  sum_all(enc.encode(x)).backward();
  CHECK(reg.at("enc.pos").value.has_grad());
  CHECK(reg.at("enc.block0.attn.wo.w").value.has_grad());
}

TEST_CASE("zeroed blocks make encode an identity plus positions") {
  ParamRegistry reg;
  Encoder enc = make_encoder(reg, false);
  for (auto& p : reg.all()) {
    if (p->name.rfind("enc.block", 0) != 0) continue;
    auto d = p->value.data<float>();
    // keep layer norms at their neutral init; zero the linear maps
    if (p->name.find(".ln") == std::string::npos)
      std::fill(d.begin(), d.end(), 0.0f);
  }
  Rng rng(6);
  Tensor x = Tensor::randn({3, 16}, rng, 1.0);
  Tensor y = enc.encode(x);
  Tensor pos = reg.at("enc.pos").value;
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 16; ++j)
      REQUIRE(y.at({i, j}) == Catch::Approx(x.at({i, j}) + pos.at({i, j})).margin(1e-6));
}

TEST_CASE("frame averaging") {
  Rng rng(7);
  std::vector<Tensor> frames;
  for (int t = 0; t < 5; ++t) frames.push_back(Tensor::randn({6, 8}, rng, 1.0));

  SECTION("matches a per-element f64 oracle") {
    Tensor avg = average_frames(frames);
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t j = 0; j < 8; ++j) {
        double want = 0;
        for (auto& f : frames) want += f.at({i, j});
        want /= 5;
        REQUIRE(avg.at({i, j}) == Catch::Approx(want).margin(1e-6));
      }
  }
  SECTION("identical frames collapse to the frame") {
    std::vector<Tensor> same(4, frames[0]);
    Tensor avg = average_frames(same);
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t j = 0; j < 8; ++j)
        REQUIRE(avg.at({i, j}) == Catch::Approx(frames[0].at({i, j})).margin(1e-6));
  }
  SECTION("permutation moves the mean by less than 1e-6") {
    Tensor a = average_frames(frames);
    std::vector<Tensor> rev(frames.rbegin(), frames.rend());
    Tensor b = average_frames(rev);
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t j = 0; j < 8; ++j)
        REQUIRE(std::abs(a.at({i, j}) - b.at({i, j})) < 1e-6);
  }
  SECTION("empty input throws") {
    CHECK_THROWS_AS(average_frames({}), ArgError);
  }
  SECTION("shape mismatch throws") {
    std::vector<Tensor> bad{frames[0], Tensor::zeros({5, 8})};
    CHECK_THROWS_AS(average_frames(bad), ShapeError);
  }
}

TEST_CASE("video encoding equals the mean of per-frame encodings") {
  ParamRegistry reg;
  Encoder enc = make_encoder(reg, true);
  Rng rng(8);
  std::vector<Tensor> frames;
  for (int t = 0; t < 3; ++t) frames.push_back(Tensor::randn({5, 16}, rng, 1.0));
  Tensor joint = enc.encode_video(frames);
  std::vector<Tensor> each;
  for (auto& f : frames) each.push_back(enc.encode(f));
  Tensor manual = average_frames(each);
  auto a = joint.data<float>();
  auto b = manual.data<float>();
  for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("encoder gradients agree with finite differences") {
  ParamRegistry reg;
  Encoder enc = make_encoder(reg, false, Dtype::F64, 11);
  Rng rng(9);
  Tensor x = Tensor::randn({4, 16}, rng, 1.0, Dtype::F64);
  Tensor coeffs = Tensor::randn({4, 16}, rng, 1.0, Dtype::F64);
  std::vector<Tensor> params;
  for (auto& p : reg.all()) params.push_back(p->value);
  auto loss = [&]() { return sum_all(mul(enc.encode(x), coeffs)); };
  Rng pick(10);
  auto rep = gradcheck(loss, params, 4, pick);
  INFO("worst " << rep.worst);
  CHECK(rep.max_rel_err < 1e-6);
}
