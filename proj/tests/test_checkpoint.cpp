#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "omni/checkpoint/checkpoint.hpp"
#include "omni/core/bytes.hpp"
#include "omni/model/model.hpp"

using namespace omni;

namespace {

struct TmpDir {
  std::filesystem::path path;
  TmpDir() {
    path = std::filesystem::temp_directory_path() /
           ("olmc_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TmpDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

ModelConfig tiny_cfg(int experts = 2) {
  ModelConfig cfg;
  cfg.tok.dim = 8;
  cfg.enc.dim = 8;
  cfg.enc.heads = 2;
  cfg.enc.depth = 1;
  cfg.enc.max_len = 24;
  cfg.upm.dim = 8;
  cfg.upm.heads = 2;
  cfg.upm.experts = experts;
  cfg.upm.expert_depth = 1;
  cfg.upm.num_tokens = 2;
  cfg.upm.lm_dim = 8;
  cfg.dec.dim = 8;
  cfg.dec.heads = 2;
  cfg.dec.depth = 1;
  cfg.dec.max_seq = 32;
  return cfg;
}

void corrupt_byte(const std::string& p, size_t offset) {
  std::string data = read_file(p);
  REQUIRE(offset < data.size());
  data[offset] = static_cast<char>(data[offset] ^ 0x5a);
  std::ofstream(p, std::ios::binary).write(data.data(), data.size());
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
  if (a.dtype() == Dtype::F32) {
    auto x = a.data<float>(), y = b.data<float>();
    return std::memcmp(x.data(), y.data(), x.size() * 4) == 0;
  }
  auto x = a.data<double>(), y = b.data<double>();
  return std::memcmp(x.data(), y.data(), x.size() * 8) == 0;
}

}  // namespace

TEST_CASE("path convention") {
  CHECK(checkpoint_path("runs/foo", 500) == "runs/foo/ckpt_500.olmc");
}

TEST_CASE("save/load/save byte identity with optimizer state") {
  TmpDir tmp;
  Model a(tiny_cfg(), 31);
  a.params().set_frozen("dec.", true);

  OptState opt;
  opt.step = 7;
  for (auto& p : a.params().all()) {
    if (p->frozen) continue;
    OptSlot& s = opt.slots[p->name];
    size_t n = static_cast<size_t>(p->value.numel());
    s.m.assign(n, 0.125f);
    s.v.assign(n, 0.0625f);
  }
  CheckpointMeta meta{"stageI", 123, 0xabcdefull, 999};
  std::string p1 = tmp.file("ckpt_123.olmc");
  save_checkpoint(p1, meta, a.params(), &opt);

  Model b(tiny_cfg(), 32);  // different init, flags at defaults
  REQUIRE_FALSE(bitwise_equal(a.params().at("tok.image.w").value,
                              b.params().at("tok.image.w").value));
  OptState opt2;
  LoadReport rep = load_checkpoint(p1, b.params(), &opt2);
  CHECK(rep.meta.phase == "stageI");
  CHECK(rep.meta.step == 123);
  CHECK(rep.meta.config_hash == 0xabcdefull);
  CHECK(rep.meta.rng_state == 999);
  CHECK(rep.loaded.size() == a.params().all().size());
  CHECK(rep.skipped.empty());
  CHECK(rep.missing.empty());

  for (auto& pa : a.params().all()) {
    auto& pb = b.params().at(pa->name);
    REQUIRE(bitwise_equal(pa->value, pb.value));
    REQUIRE(pa->frozen == pb.frozen);
  }
  CHECK(b.params().at("dec.embed").frozen);
  CHECK(opt2.step == 7);
  REQUIRE(opt2.slots.size() == opt.slots.size());
  for (auto& [name, s] : opt.slots) {
    REQUIRE(opt2.slots.count(name) == 1);
    CHECK(opt2.slots[name].m == s.m);
    CHECK(opt2.slots[name].v == s.v);
  }

  std::string p2 = tmp.file("again.olmc");
  save_checkpoint(p2, rep.meta, b.params(), &opt2);
  CHECK(read_file(p1) == read_file(p2));
}

TEST_CASE("forward outputs identical after reload") {
  TmpDir tmp;
  Model a(tiny_cfg(), 41);
  Rng rng(1);
  Tensor sig = Tensor::randn({3, 28, 28}, rng, 1.0);
  Tensor ya = a.project(Modality::Image, sig).tokens;
  save_checkpoint(tmp.file("m.olmc"), {"eval", 0, 0, 0}, a.params(), nullptr);

  Model b(tiny_cfg(), 42);
  load_checkpoint(tmp.file("m.olmc"), b.params());
  Tensor yb = b.project(Modality::Image, sig).tokens;
  CHECK(bitwise_equal(ya.detach(), yb.detach()));
}

TEST_CASE("expert expansion: partial load then broadcast") {
  TmpDir tmp;
  Model small(tiny_cfg(1), 51);
  std::string path = tmp.file("stage1.olmc");
  save_checkpoint(path, {"stageI", 10, 0, 0}, small.params(), nullptr);

  Model big(tiny_cfg(3), 52);
  // strict load trips on the router head, whose width tracks the expert count
  CHECK_THROWS_AS(load_checkpoint(path, big.params()), ShapeError);

  // expansion: routers start fresh (they saw no gradient with one expert),
  // everything else is adopted, new experts are reported missing
  LoadReport rep =
      load_checkpoint(path, big.params(), nullptr, {"upm.router"}, true);
  CHECK(rep.missing.size() > 0);
  for (const auto& n : rep.missing) CHECK(n.rfind("upm.expert", 0) == 0);
  CHECK(bitwise_equal(small.params().at("upm.expert0.block0.attn.wq.w").value,
                      big.params().at("upm.expert0.block0.attn.wq.w").value));

  big.projector().broadcast_expert_weights(0);
  CHECK(bitwise_equal(small.params().at("upm.expert0.block0.attn.wq.w").value,
                      big.params().at("upm.expert2.block0.attn.wq.w").value));

  // random-init path: experts keep their fresh values
  Model rnd(tiny_cfg(3), 53);
  Tensor fresh = rnd.params().at("upm.expert0.block0.attn.wq.w").value.detach();
  LoadReport r2 = load_checkpoint(path, rnd.params(), nullptr,
                                  {"upm.expert", "upm.router"}, true);
  CHECK(bitwise_equal(fresh, rnd.params().at("upm.expert0.block0.attn.wq.w").value));
  for (const auto& n : r2.loaded) CHECK(n.rfind("upm.expert", 0) != 0);
  // everything outside the excluded prefix was still adopted
  CHECK(bitwise_equal(small.params().at("upm.adapter.w").value,
                      rnd.params().at("upm.adapter.w").value));
}

TEST_CASE("error taxonomy") {
  TmpDir tmp;
  Model a(tiny_cfg(), 61);
  std::string path = tmp.file("c.olmc");
  save_checkpoint(path, {"stageI", 1, 0, 0}, a.params(), nullptr);

  CHECK_THROWS_AS(load_checkpoint(tmp.file("absent.olmc"), a.params()),
                  PreconditionError);

  SECTION("magic") {
    corrupt_byte(path, 0);
    try {
      load_checkpoint(path, a.params());
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.kind == FormatError::Kind::BadMagic);
    }
  }
  SECTION("version") {
    corrupt_byte(path, 4);
    try {
      load_checkpoint(path, a.params());
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.kind == FormatError::Kind::BadVersion);
    }
  }
  SECTION("payload corruption") {
    corrupt_byte(path, read_file(path).size() / 2);
    try {
      load_checkpoint(path, a.params());
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.kind == FormatError::Kind::BadHash);
    }
  }
  SECTION("truncation") {
    std::string data = read_file(path);
    std::ofstream(path, std::ios::binary).write(data.data(), data.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(path, a.params()), FormatError);
    // parameters must be untouched by the failed load
    Model ref(tiny_cfg(), 61);
    for (auto& p : ref.params().all())
      REQUIRE(bitwise_equal(p->value, a.params().at(p->name).value));
  }
  SECTION("peek shares the checks") {
    corrupt_byte(path, read_file(path).size() - 1);
    CHECK_THROWS_AS(peek_checkpoint(path), FormatError);
  }
}

TEST_CASE("shape mismatch names the offending parameter") {
  TmpDir tmp;
  Model a(tiny_cfg(), 71);
  std::string path = tmp.file("c.olmc");
  save_checkpoint(path, {"stageI", 1, 0, 0}, a.params(), nullptr);

  ModelConfig wide = tiny_cfg();
  wide.tok.dim = 16;
  wide.enc.dim = 16;
  wide.upm.dim = 16;
  wide.upm.lm_dim = 16;
  wide.dec.dim = 16;
  Model b(wide, 72);
  try {
    load_checkpoint(path, b.params());
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("tok.") != std::string::npos);
    CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
  }
}

TEST_CASE("f64 and mixed registries round-trip bitwise") {
  TmpDir tmp;
  ParamRegistry reg;
  Rng rng(5);
  reg.add("a", Tensor::randn({3, 4}, rng, 1.0, Dtype::F64));
  reg.add("b", Tensor::randn({7}, rng, 1.0, Dtype::F32), false);
  reg.add("c", Tensor::full({2, 2}, -0.0, Dtype::F64));  // signed zero survives
  std::string path = tmp.file("mixed.olmc");
  save_checkpoint(path, {"x", 0, 0, 0}, reg, nullptr);

  ParamRegistry reg2;
  Rng rng2(6);
  reg2.add("a", Tensor::randn({3, 4}, rng2, 1.0, Dtype::F64));
  reg2.add("b", Tensor::randn({7}, rng2, 1.0, Dtype::F32), false);
  reg2.add("c", Tensor::zeros({2, 2}, Dtype::F64));
  load_checkpoint(path, reg2);
  for (auto& p : reg.all())
    REQUIRE(bitwise_equal(p->value, reg2.at(p->name).value));

  // dtype flip is rejected with the parameter named
  ParamRegistry reg3;
  Rng rng3(7);
  reg3.add("a", Tensor::randn({3, 4}, rng3, 1.0, Dtype::F32));
  reg3.add("b", Tensor::randn({7}, rng3, 1.0, Dtype::F32), false);
  reg3.add("c", Tensor::zeros({2, 2}, Dtype::F64));
  try {
    load_checkpoint(path, reg3);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
  }
}

TEST_CASE("peek reads metadata only") {
  TmpDir tmp;
  Model a(tiny_cfg(), 81);
  std::string path = tmp.file("c.olmc");
  save_checkpoint(path, {"stageII", 456, 12, 34}, a.params(), nullptr);
  CheckpointMeta m = peek_checkpoint(path);
  CHECK(m.phase == "stageII");
  CHECK(m.step == 456);
  CHECK(m.config_hash == 12);
  CHECK(m.rng_state == 34);
  CHECK_THROWS_AS(peek_checkpoint(tmp.file("nope.olmc")), PreconditionError);
}
