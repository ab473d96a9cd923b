#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "omni/core/gradcheck.hpp"
#include "omni/core/ops.hpp"

using namespace omni;

namespace {

Tensor randn64(std::vector<int64_t> shape, Rng& rng, double std = 1.0) {
  return Tensor::randn(std::move(shape), rng, std, Dtype::F64).set_requires_grad(true);
}

// Independent direct convolution, no im2col.
std::vector<double> conv2d_oracle(const Tensor& x, const Tensor& w,
                                  const Tensor& b, int64_t sh, int64_t sw) {
  int64_t Ci = x.dim(0), H = x.dim(1), W = x.dim(2);
  int64_t Co = w.dim(0), Kh = w.dim(2), Kw = w.dim(3);
  int64_t Ho = (H - Kh) / sh + 1, Wo = (W - Kw) / sw + 1;
  std::vector<double> out(static_cast<size_t>(Co * Ho * Wo));
  for (int64_t co = 0; co < Co; ++co)
    for (int64_t ho = 0; ho < Ho; ++ho)
      for (int64_t wo = 0; wo < Wo; ++wo) {
        double acc = b.at({co});
        for (int64_t ci = 0; ci < Ci; ++ci)
          for (int64_t kh = 0; kh < Kh; ++kh)
            for (int64_t kw = 0; kw < Kw; ++kw)
              acc += x.at({ci, ho * sh + kh, wo * sw + kw}) * w.at({co, ci, kh, kw});
        out[static_cast<size_t>((co * Ho + ho) * Wo + wo)] = acc;
      }
  return out;
}

}  // namespace

TEST_CASE("softmax rows normalize and match the closed form") {
  Tensor x = Tensor::from_data({1, 3}, {1, 2, 3});
  Tensor y = softmax_rows(x);
  CHECK_THAT(y.at({0, 0}), Catch::Matchers::WithinAbs(0.0900, 1e-4));
  CHECK_THAT(y.at({0, 1}), Catch::Matchers::WithinAbs(0.2447, 1e-4));
  CHECK_THAT(y.at({0, 2}), Catch::Matchers::WithinAbs(0.6652, 1e-4));

  // independent oracle: exp-normalize in double
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i)
    CHECK_THAT(y.at({0, i}),
               Catch::Matchers::WithinAbs(std::exp(1.0 + i) / z, 1e-6));

  double sum = y.at({0, 0}) + y.at({0, 1}) + y.at({0, 2});
  CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("softmax is shift-invariant and survives large inputs") {
  Tensor a = Tensor::from_data({1, 4}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({1, 4}, {1001, 1002, 1003, 1004});
  auto ya = softmax_rows(a).to_vector();
  auto yb = softmax_rows(b).to_vector();
  for (size_t i = 0; i < 4; ++i)
    CHECK_THAT(ya[i], Catch::Matchers::WithinAbs(yb[i], 1e-6));

  // an additive -1e30 mask zeroes a slot exactly after exponentiation
  Tensor m = Tensor::from_data({1, 3}, {0.5, -1e30, 1.0});
  auto ym = softmax_rows(m).to_vector();
  CHECK(ym[1] == 0.0);
  CHECK_THAT(ym[0] + ym[2], Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("matmul matches hand values and rejects bad shapes") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == std::vector<int64_t>({2, 1}));
  CHECK(c.at({0, 0}) == 3.0);
  CHECK(c.at({1, 0}) == 7.0);
  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("conv2d agrees with the direct-sum oracle") {
  Rng rng(17);
  Tensor x = Tensor::randn({3, 9, 11}, rng, 1.0, Dtype::F64);
  Tensor w = Tensor::randn({5, 3, 3, 4}, rng, 1.0, Dtype::F64);
  Tensor b = Tensor::randn({5}, rng, 1.0, Dtype::F64);
  for (auto [sh, sw] : {std::pair<int64_t, int64_t>{1, 1}, {2, 3}, {3, 2}}) {
    Tensor out = conv2d(x, w, b, sh, sw);
    int64_t Ho = (9 - 3) / sh + 1, Wo = (11 - 4) / sw + 1;
    REQUIRE(out.shape() == std::vector<int64_t>({5, Ho, Wo}));
    auto expect = conv2d_oracle(x, w, b, sh, sw);
    auto got = out.to_vector();
    for (size_t i = 0; i < expect.size(); ++i)
      CHECK_THAT(got[i], Catch::Matchers::WithinAbs(expect[i], 1e-9));
  }
}

TEST_CASE("conv2d output size follows floor((X-K)/S)+1") {
  Rng rng(1);
  Tensor w = Tensor::randn({1, 1, 2, 2}, rng);
  Tensor b = Tensor::zeros({1});
  Tensor x = Tensor::randn({1, 5, 7}, rng);
  Tensor out = conv2d(x, w, b, 2, 3);
  CHECK(out.shape() == std::vector<int64_t>({1, 2, 2}));
  // kernel larger than input is an error, not a zero-size result
  CHECK_THROWS_AS(conv2d(Tensor::randn({1, 1, 1}, rng), w, b, 1, 1), ShapeError);
}

TEST_CASE("conv1d is conv2d on a height-1 image") {
  Rng rng(23);
  Tensor x = Tensor::randn({6, 64}, rng, 1.0, Dtype::F64);
  Tensor w = Tensor::randn({8, 6, 10}, rng, 1.0, Dtype::F64);
  Tensor b = Tensor::randn({8}, rng, 1.0, Dtype::F64);
  Tensor out = conv1d(x, w, b, 1);
  REQUIRE(out.shape() == std::vector<int64_t>({8, 55}));
  // oracle through the 2d direct sum
  Tensor x3 = reshape(x, {6, 1, 64});
  Tensor w4 = reshape(w, {8, 6, 1, 10});
  auto expect = conv2d_oracle(x3, w4, b, 1, 1);
  auto got = out.to_vector();
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK_THAT(got[i], Catch::Matchers::WithinAbs(expect[i], 1e-9));
}

TEST_CASE("layer_norm output rows have zero mean and unit variance") {
  Rng rng(9);
  Tensor x = Tensor::randn({4, 16}, rng, 3.0, Dtype::F64);
  Tensor gamma = Tensor::full({16}, 1.0, Dtype::F64);
  Tensor beta = Tensor::zeros({16}, Dtype::F64);
  Tensor y = layer_norm_rows(x, gamma, beta);
  for (int64_t r = 0; r < 4; ++r) {
    double mean = 0, var = 0;
    for (int64_t d = 0; d < 16; ++d) mean += y.at({r, d});
    mean /= 16;
    for (int64_t d = 0; d < 16; ++d) var += (y.at({r, d}) - mean) * (y.at({r, d}) - mean);
    var /= 16;
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.0, 1e-9));
    CHECK_THAT(var, Catch::Matchers::WithinAbs(1.0, 1e-4));
  }
}

TEST_CASE("gelu matches the erf closed form at pinned points") {
  Tensor x = Tensor::from_data({5}, {-2, -1, 0, 1, 2}, Dtype::F64);
  auto y = gelu(x).to_vector();
  auto ref = [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); };
  CHECK(y[2] == 0.0);
  for (size_t i = 0; i < 5; ++i)
    CHECK_THAT(y[i], Catch::Matchers::WithinAbs(ref(-2.0 + static_cast<double>(i)), 1e-12));
}

TEST_CASE("embedding_rows copies table rows and bounds-checks ids") {
  Tensor table = Tensor::from_data({3, 2}, {0, 1, 10, 11, 20, 21});
  Tensor out = embedding_rows(table, {2, 0, 2});
  CHECK(out.to_vector() == std::vector<double>({20, 21, 0, 1, 20, 21}));
  CHECK_THROWS_AS(embedding_rows(table, {3}), ShapeError);
  CHECK_THROWS_AS(embedding_rows(table, {-1}), ShapeError);
}

TEST_CASE("cross entropy of uniform logits is ln(V)") {
  int64_t V = 259;
  Tensor logits = Tensor::zeros({4, V});
  Tensor loss = cross_entropy_rows(logits, {0, 5, 17, 258}, {1, 1, 1, 1});
  CHECK_THAT(loss.scalar(), Catch::Matchers::WithinAbs(std::log(259.0), 1e-5));

  // only masked rows count
  Tensor l2 = Tensor::from_data({2, 2}, {100, 0, 0, 0});
  Tensor loss2 = cross_entropy_rows(l2, {0, 0}, {1, 0});
  CHECK_THAT(loss2.scalar(), Catch::Matchers::WithinAbs(0.0, 1e-6));
  CHECK_THROWS_AS(cross_entropy_rows(l2, {0, 0}, {0, 0}), ArgError);
}

TEST_CASE("segment_max keeps per-column maxima with low-index ties") {
  Tensor x = Tensor::from_data({4, 2}, {1, 5, 3, 2, 7, 7, 7, 9});
  Tensor y = segment_max(x, 2);
  REQUIRE(y.shape() == std::vector<int64_t>({2, 2}));
  CHECK(y.to_vector() == std::vector<double>({3, 5, 7, 9}));

  // tie in column 0 of group 1: gradient goes to the first of the equal rows
  Tensor xg = Tensor::from_data({4, 2}, {1, 5, 3, 2, 7, 7, 7, 9}).set_requires_grad(true);
  sum_all(segment_max(xg, 2)).backward();
  auto g = xg.grad_tensor().to_vector();
  CHECK(g == std::vector<double>({0, 1, 1, 0, 1, 0, 0, 1}));
}

TEST_CASE("mix_rows implements weighted, argmax-only and mean combination") {
  Tensor e0 = Tensor::from_data({2, 2}, {1, 1, 1, 1});
  Tensor e1 = Tensor::from_data({2, 2}, {2, 2, 2, 2});
  Tensor w = Tensor::from_data({2, 2}, {0.25, 0.75, 0.5, 0.5});

  auto weighted = mix_rows({e0, e1}, w, MixMode::Weighted).to_vector();
  CHECK(weighted == std::vector<double>({1.75, 1.75, 1.5, 1.5}));

  // argmax keeps the winner scaled by its own weight; row-1 tie -> expert 0
  auto arg = mix_rows({e0, e1}, w, MixMode::ArgmaxOnly).to_vector();
  CHECK(arg == std::vector<double>({1.5, 1.5, 0.5, 0.5}));

  auto mean = mix_rows({e0, e1}, w, MixMode::Mean).to_vector();
  CHECK(mean == std::vector<double>({1.5, 1.5, 1.5, 1.5}));

  // Mean ignores the weights: perturbing them changes nothing
  Tensor w2 = Tensor::from_data({2, 2}, {9, -9, 3, 100});
  CHECK(mix_rows({e0, e1}, w2, MixMode::Mean).to_vector() == mean);
}

TEST_CASE("slice and concat round-trip") {
  Tensor a = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor top = slice_rows(a, 0, 1);
  Tensor rest = slice_rows(a, 1, 3);
  CHECK(concat_rows({top, rest}).to_vector() == a.to_vector());
  Tensor left = slice_cols(a, 0, 1);
  Tensor right = slice_cols(a, 1, 2);
  CHECK(concat_cols({left, right}).to_vector() == a.to_vector());
  CHECK(transpose2d(transpose2d(a)).to_vector() == a.to_vector());
}

TEST_CASE("every op passes a central-difference gradient check") {
  Rng rng(31);
  Rng pick(77);

  SECTION("add, mul, scale, bias") {
    Tensor a = randn64({3, 4}, rng), b = randn64({3, 4}, rng), c = randn64({4}, rng);
    auto loss = [&] { return sum_all(mul(add_bias(add(a, b), c), scale(b, 0.5))); };
    auto rep = gradcheck(loss, {a, b, c}, 64, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }

  SECTION("matmul and transpose") {
    Tensor a = randn64({3, 5}, rng), b = randn64({5, 2}, rng);
    auto loss = [&] { return sum_all(mul(matmul(a, b), matmul(a, b))); };
    auto rep = gradcheck(loss, {a, b}, 64, pick);
    CHECK(rep.max_rel_err < 1e-6);

    auto loss2 = [&] { return sum_all(matmul(transpose2d(b), transpose2d(a))); };
    rep = gradcheck(loss2, {a, b}, 64, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }

  SECTION("softmax") {
    Tensor a = randn64({4, 6}, rng);
    Tensor pickw = Tensor::randn({4, 6}, rng, 1.0, Dtype::F64);
    auto loss = [&] { return sum_all(mul(softmax_rows(a), pickw)); };
    auto rep = gradcheck(loss, {a}, 64, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }

  SECTION("layer_norm") {
    Tensor x = randn64({3, 8}, rng), g = randn64({8}, rng), b = randn64({8}, rng);
    Tensor pickw = Tensor::randn({3, 8}, rng, 1.0, Dtype::F64);
    auto loss = [&] { return sum_all(mul(layer_norm_rows(x, g, b), pickw)); };
    auto rep = gradcheck(loss, {x, g, b}, 96, pick);
    CHECK(rep.max_rel_err < 1e-5);
  }

  SECTION("gelu") {
    Tensor a = randn64({5, 5}, rng);
    auto loss = [&] { return sum_all(gelu(a)); };
    auto rep = gradcheck(loss, {a}, 32, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }

  SECTION("conv2d") {
    Tensor x = randn64({2, 6, 7}, rng), w = randn64({3, 2, 2, 3}, rng), b = randn64({3}, rng);
    auto loss = [&] { return sum_all(mul(conv2d(x, w, b, 2, 2), conv2d(x, w, b, 2, 2))); };
    auto rep = gradcheck(loss, {x, w, b}, 48, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }

  SECTION("conv1d") {
    Tensor x = randn64({3, 12}, rng), w = randn64({4, 3, 5}, rng), b = randn64({4}, rng);
    auto loss = [&] { return sum_all(conv1d(x, w, b, 2)); };
    auto rep = gradcheck(loss, {x, w, b}, 48, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }

  SECTION("embedding and cross entropy") {
    Tensor table = randn64({7, 4}, rng);
    Tensor proj = randn64({4, 7}, rng);
    std::vector<int32_t> ids = {3, 0, 6, 3};
    std::vector<int32_t> tg = {1, 2, 0, 5};
    std::vector<uint8_t> mask = {1, 0, 1, 1};
    auto loss = [&] {
      return cross_entropy_rows(matmul(embedding_rows(table, ids), proj), tg, mask);
    };
    auto rep = gradcheck(loss, {table, proj}, 64, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }

  SECTION("segment_max") {
    Tensor x = randn64({8, 3}, rng);
    auto loss = [&] { return sum_all(mul(segment_max(x, 4), segment_max(x, 4))); };
    auto rep = gradcheck(loss, {x}, 32, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }

  SECTION("mix_rows weighted") {
    Tensor e0 = randn64({3, 4}, rng), e1 = randn64({3, 4}, rng), e2 = randn64({3, 4}, rng);
    Tensor wl = randn64({3, 3}, rng);
    auto loss = [&] {
      Tensor w = softmax_rows(wl);
      return sum_all(mul(mix_rows({e0, e1, e2}, w, MixMode::Weighted),
                         mix_rows({e0, e1, e2}, w, MixMode::Weighted)));
    };
    auto rep = gradcheck(loss, {e0, e1, e2, wl}, 48, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }

  SECTION("mix_rows mean") {
    Tensor e0 = randn64({3, 4}, rng), e1 = randn64({3, 4}, rng);
    auto loss = [&] {
      return sum_all(mul(mix_rows({e0, e1}, Tensor(), MixMode::Mean),
                         mix_rows({e0, e1}, Tensor(), MixMode::Mean)));
    };
    auto rep = gradcheck(loss, {e0, e1}, 32, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }

  SECTION("reshape, slice, concat") {
    Tensor a = randn64({4, 6}, rng);
    auto loss = [&] {
      Tensor r = reshape(a, {6, 4});
      Tensor s = concat_rows({slice_rows(r, 0, 2), slice_rows(r, 2, 6)});
      Tensor c = concat_cols({slice_cols(s, 0, 1), slice_cols(s, 1, 4)});
      return sum_all(mul(c, c));
    };
    auto rep = gradcheck(loss, {a}, 24, pick);
    CHECK(rep.max_rel_err < 1e-6);
  }
}

TEST_CASE("argmax-only mixing routes gradients along the kept path only") {
  Tensor e0 = Tensor::from_data({1, 2}, {1, 1}, Dtype::F64).set_requires_grad(true);
  Tensor e1 = Tensor::from_data({1, 2}, {2, 2}, Dtype::F64).set_requires_grad(true);
  Tensor w = Tensor::from_data({1, 2}, {0.3, 0.7}, Dtype::F64).set_requires_grad(true);
  sum_all(mix_rows({e0, e1}, w, MixMode::ArgmaxOnly)).backward();
  CHECK_FALSE(e0.has_grad());  // loser gets nothing at all
  CHECK(e1.grad_tensor().to_vector() == std::vector<double>({0.7, 0.7}));
  auto gw = w.grad_tensor().to_vector();
  CHECK(gw[0] == 0.0);
  CHECK_THAT(gw[1], Catch::Matchers::WithinAbs(4.0, 1e-12));
}
