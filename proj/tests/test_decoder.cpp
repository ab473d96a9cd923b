#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "omni/core/gradcheck.hpp"
#include "omni/core/kernels.hpp"
#include "omni/model/decoder.hpp"

using namespace omni;

namespace {

DecoderConfig tiny_cfg() {
  DecoderConfig cfg;
  cfg.depth = 1;
  cfg.dim = 32;
  cfg.heads = 2;
  cfg.max_seq = 48;
  return cfg;
}

// Minimal Adam loop over a registry, enough for overfit oracles.
struct TestAdam {
  std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> mv;
  int64_t t = 0;
  void step(ParamRegistry& reg, double lr) {
    ++t;
    double b1 = 0.9, b2 = 0.95;
    double c1 = 1.0 / (1.0 - std::pow(b1, static_cast<double>(t)));
    double c2 = 1.0 / (1.0 - std::pow(b2, static_cast<double>(t)));
    for (auto& p : reg.all()) {
      if (p->frozen || !p->value.has_grad()) continue;
      auto& [m, v] = mv[p->name];
      size_t n = static_cast<size_t>(p->value.numel());
      m.resize(n, 0.0f);
      v.resize(n, 0.0f);
      Tensor g = p->value.grad_tensor();
      kernels::active().adamw_f32(n, p->value.data<float>().data(),
                                  g.data<float>().data(), m.data(), v.data(), lr,
                                  b1, b2, 1e-8, 0.0, c1, c2);
    }
    reg.zero_grads();
  }
};

}  // namespace

TEST_CASE("byte text round-trips exactly") {
  std::string s = "hello \x01\xff\x00 world";
  s.push_back('\0');
  CHECK(decode_text(encode_text(s)) == s);
  CHECK(encode_text("").empty());
  // specials vanish on decode
  CHECK(decode_text({kBos, 'h', 'i', kEos, kPad}) == "hi");
}

TEST_CASE("alignment assembly shapes and masks") {
  ParamRegistry reg;
  Rng rng(1);
  Decoder dec(tiny_cfg(), reg, rng);
  Tensor prefix = Tensor::randn({4, 32}, rng, 1.0);
  auto seq = dec.assemble_alignment(prefix, Modality::Image, "cats!");
  CHECK(seq.prefix.dim(0) == 4);
  REQUIRE(seq.ids.size() == 7);  // BOS + 5 bytes + EOS
  CHECK(seq.ids.front() == kBos);
  CHECK(seq.ids.back() == kEos);
  CHECK(seq.loss_mask == std::vector<uint8_t>{0, 1, 1, 1, 1, 1, 1});
  CHECK(seq.order == std::vector<Modality>{Modality::Image});
  CHECK_FALSE(seq.truncated);

  CHECK_THROWS_AS(dec.assemble_alignment(prefix, Modality::Image, ""), ArgError);

  // long captions are cut to fit, flagged
  std::string longcap(200, 'x');
  auto cut = dec.assemble_alignment(prefix, Modality::Image, longcap);
  CHECK(cut.truncated);
  CHECK(static_cast<int64_t>(cut.ids.size()) + 4 <= tiny_cfg().max_seq);
}

TEST_CASE("instruction assembly") {
  ParamRegistry reg;
  Rng rng(2);
  Decoder dec(tiny_cfg(), reg, rng);
  Tensor qv = Tensor::randn({4, 32}, rng, 1.0);
  Tensor qa = Tensor::randn({4, 32}, rng, 1.0);

  auto seq = dec.assemble_instruction({{Modality::Video, qv}, {Modality::Audio, qa}},
                                      "sys:", {{"what?", "blue"}});
  CHECK(seq.prefix.dim(0) == 8);
  CHECK(seq.order == std::vector<Modality>{Modality::Video, Modality::Audio});
  // video block occupies the first rows
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 32; ++j)
      REQUIRE(seq.prefix.at({i, j}) == qv.at({i, j}));

  // loss covers exactly len(ans)+1 positions (answer bytes + final EOS)
  int64_t masked = 0;
  for (uint8_t b : seq.loss_mask) masked += b;
  CHECK(masked == 5);
  // BOS + "sys:" + "what?" are maskless
  for (size_t i = 0; i < 1 + 4 + 5; ++i) CHECK(seq.loss_mask[i] == 0);

  auto nosys = dec.assemble_instruction({{Modality::Imu, qv}}, "", {{"q", "a"}});
  CHECK(nosys.ids[1] == 'q');

  CHECK_THROWS_AS(dec.assemble_instruction({}, "s", {{"q", "a"}}), ArgError);
  CHECK_THROWS_AS(dec.assemble_instruction({{Modality::Imu, qv}}, "s", {}), ArgError);
}

TEST_CASE("untrained loss sits near the uniform baseline") {
  ParamRegistry reg;
  Rng rng(3);
  Decoder dec(tiny_cfg(), reg, rng);
  Tensor prefix = Tensor::randn({4, 32}, rng, 0.02);
  auto seq = dec.assemble_alignment(prefix, Modality::Audio, "a large red circle");
  double l = dec.loss(seq).scalar();
  CHECK(l == Catch::Approx(std::log(259.0)).margin(0.2));
}

TEST_CASE("causality: future edits never touch earlier logits") {
  ParamRegistry reg;
  Rng rng(4);
  Decoder dec(tiny_cfg(), reg, rng);
  Tensor prefix = Tensor::randn({3, 32}, rng, 1.0);
  auto a = dec.assemble_alignment(prefix, Modality::Depth, "abcdef");
  auto b = a;
  b.ids[5] = 'Z';  // byte 4 of the caption
  b.ids[6] = 'Q';
  Tensor la = dec.logits(a);
  Tensor lb = dec.logits(b);
  // rows 0 .. (3 + 5 - 1) - 1 see identical context
  for (int64_t r = 0; r < 3 + 5 - 1; ++r)
    for (int64_t v = 0; v < kVocabSize; ++v)
      REQUIRE(static_cast<float>(la.at({r, v})) ==
              static_cast<float>(lb.at({r, v})));
}

TEST_CASE("masked padding leaves the loss bit-identical") {
  ParamRegistry reg;
  Rng rng(5);
  Decoder dec(tiny_cfg(), reg, rng);
  Tensor prefix = Tensor::randn({2, 32}, rng, 1.0);
  auto seq = dec.assemble_alignment(prefix, Modality::Point, "dots");
  float base = static_cast<float>(dec.loss(seq).scalar());
  auto padded = seq;
  for (int i = 0; i < 6; ++i) {
    padded.ids.push_back(kPad);
    padded.loss_mask.push_back(0);
  }
  CHECK(static_cast<float>(dec.loss(padded).scalar()) == base);
}

TEST_CASE("loss guards") {
  ParamRegistry reg;
  Rng rng(6);
  Decoder dec(tiny_cfg(), reg, rng);
  AssembledSequence seq;
  seq.prefix = Tensor::randn({2, 32}, rng, 1.0);
  seq.ids = {kBos, 'h', 'i', kEos};
  seq.loss_mask = {0, 0, 0, 0};
  CHECK_THROWS_AS(dec.loss(seq), ArgError);
  seq.loss_mask = {0, 0, 0};
  CHECK_THROWS_AS(dec.loss(seq), ArgError);
  AssembledSequence big;
  big.prefix = Tensor::randn({47, 32}, rng, 1.0);
  big.ids = {kBos, 'x', kEos};
  big.loss_mask = {0, 1, 1};
  CHECK_THROWS_AS(dec.loss(big), ShapeError);
}

TEST_CASE("an overfit decoder reproduces its training answer") {
  ParamRegistry reg;
  Rng rng(7);
  Decoder dec(tiny_cfg(), reg, rng);
  Tensor prefix = Tensor::randn({2, 32}, rng, 1.0);
  auto seq = dec.assemble_alignment(prefix, Modality::Image, "a red dot");

  TestAdam opt;
  double last = 1e9;
  for (int step = 0; step < 400; ++step) {
    Tensor l = dec.loss(seq);
    last = l.scalar();
    if (last < 0.02) break;
    reg.zero_grads();
    l.backward();
    opt.step(reg, 3e-3);
  }
  CHECK(last < 0.05);

  AssembledSequence prompt;
  prompt.prefix = prefix;
  prompt.ids = {kBos};
  prompt.loss_mask = {0};
  CHECK(dec.generate(prompt, 32) == "a red dot");

  // determinism of generation
  CHECK(dec.generate(prompt, 32) == dec.generate(prompt, 32));

  // exactly one token on a unit budget
  auto one = dec.generate_ids(prompt, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 'a');

  // trained continuation scores far above a wrong one
  double good = dec.continuation_logprob(prompt, "a red dot", true);
  double bad = dec.continuation_logprob(prompt, "a blue cat", true);
  CHECK(good > bad + 5.0);

  // total NLL equals the masked loss times the masked count
  double nll = -dec.continuation_logprob(prompt, "a red dot", true);
  double per_tok = dec.loss(seq).scalar();
  CHECK(nll / 10.0 == Catch::Approx(per_tok).margin(1e-3));
}

TEST_CASE("decoder gradients agree with finite differences") {
  DecoderConfig cfg;
  cfg.depth = 1;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.max_seq = 16;
  ParamRegistry reg;
  Rng rng(8);
  Decoder dec(cfg, reg, rng, Dtype::F64);
  Tensor prefix = Tensor::randn({2, 8}, rng, 1.0, Dtype::F64).set_requires_grad(true);
  auto loss = [&]() {
    return dec.loss(dec.assemble_alignment(prefix, Modality::Fmri, "ok"));
  };
  std::vector<Tensor> params{prefix};
  for (auto& p : reg.all()) params.push_back(p->value);
  Rng pick(9);
  auto rep = gradcheck(loss, params, 4, pick);
  INFO("worst " << rep.worst);
  CHECK(rep.max_rel_err < 1e-6);
}
