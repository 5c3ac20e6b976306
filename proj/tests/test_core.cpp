#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gradcheck.hpp"
#include "him/nn.hpp"
#include "him/ops.hpp"

using namespace him;

TEST_CASE("tensor basics") {
  Tensor a = Tensor::zeros({2, 3});
  CHECK(a.numel() == 6);
  CHECK(a.sum() == 0.0);

  Tensor b = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor c = b.clone();
  c[0] = 9.0;
  CHECK(b[0] == 1.0);  // clone is deep

  Tensor d = b.reshaped({4});
  d[1] = 7.0;
  CHECK(b[1] == 7.0);  // reshaped shares storage

  CHECK_THROWS_AS(Tensor::from({2}, {1.0}), ShapeError);
  CHECK_THROWS_AS(b.reshaped({3}), ShapeError);
  CHECK(b.at(1, 0) == 3.0);
}

TEST_CASE("rng determinism and ranges") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng r(7);
  double mn = 1.0, mx = 0.0, sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    mn = std::min(mn, u);
    mx = std::max(mx, u);
    sum += u;
  }
  CHECK(mn >= 0.0);
  CHECK(mx < 1.0);
  CHECK(sum / 10000.0 == doctest::Approx(0.5).epsilon(0.05));
  for (int i = 0; i < 100; ++i) {
    int v = r.uniform_int(3, 5);
    CHECK(v >= 3);
    CHECK(v <= 5);
  }
  Rng f1 = Rng(9).fork(1), f2 = Rng(9).fork(2);
  CHECK(f1.next_u64() != f2.next_u64());
}

TEST_CASE("backward accumulates and matches hand gradient") {
  Var a(Tensor::from({3}, {1.0, 2.0, 3.0}), true);
  Var b(Tensor::from({3}, {4.0, 5.0, 6.0}), true);
  Var loss = ops::sum_all(ops::mul(a, b));
  backward(loss);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.grad()[i] == b.val()[i]);
    CHECK(b.grad()[i] == a.val()[i]);
  }
  // a fresh forward graph over the same leaves accumulates into their grads
  Var loss2 = ops::sum_all(ops::mul(a, b));
  backward(loss2);
  for (int i = 0; i < 3; ++i) CHECK(a.grad()[i] == 2.0 * b.val()[i]);
}

TEST_CASE("no-grad mode detaches results") {
  Var a(Tensor::from({2}, {1.0, 2.0}), true);
  NoGradGuard ng;
  Var y = ops::scale(a, 2.0);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("shape violations throw") {
  Var a(Tensor::zeros({2, 3}), true);
  Var b(Tensor::zeros({3, 2}), true);
  CHECK_THROWS_AS(ops::add(a, b), ShapeError);
  CHECK_THROWS_AS(ops::mm(a, a), ShapeError);
  CHECK_THROWS_AS(ops::rows(a, 1, 1), ShapeError);
  CHECK_THROWS_AS(ops::cols(a, 0, 4), ShapeError);
  Var x(Tensor::zeros({2, 4, 4}), true);
  Var w(Tensor::zeros({3, 3, 3, 3}), true);
  CHECK_THROWS_AS(ops::conv2d(x, w, Var(), 1, 1), ShapeError);
}

namespace {

// gradcheck driver for a unary/n-ary op builder over fixed random inputs
void check_op(const std::function<Var(const std::vector<Var>&)>& build,
              const std::vector<std::vector<int>>& shapes, uint64_t seed,
              double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<Var> inputs;
  for (const auto& s : shapes)
    inputs.emplace_back(random_tensor(s, rng, lo, hi), true);
  auto res = gradcheck([&] { return ops::mean_all(build(inputs)); }, inputs);
  INFO(res.worst);
  CHECK(res.ok);
  CHECK(res.checked > 0);
}

}  // namespace

TEST_CASE("gradcheck elementwise and structure ops") {
  check_op([](const std::vector<Var>& v) { return ops::add(v[0], v[1]); },
           {{3, 4}, {3, 4}}, 1);
  check_op([](const std::vector<Var>& v) { return ops::sub(v[0], v[1]); },
           {{3, 4}, {3, 4}}, 2);
  check_op([](const std::vector<Var>& v) { return ops::mul(v[0], v[1]); },
           {{3, 4}, {3, 4}}, 3);
  check_op([](const std::vector<Var>& v) { return ops::scale(v[0], -1.7); },
           {{5}}, 4);
  check_op([](const std::vector<Var>& v) { return ops::add_scalar(v[0], 0.3); },
           {{5}}, 5);
  check_op([](const std::vector<Var>& v) { return ops::add_colvec(v[0], v[1]); },
           {{3, 4}, {3}}, 6);
  check_op([](const std::vector<Var>& v) { return ops::mul_rowvec(v[0], v[1]); },
           {{3, 4}, {4}}, 7);
  check_op([](const std::vector<Var>& v) { return ops::reshape(v[0], {6, 2}); },
           {{3, 4}}, 8);
  check_op([](const std::vector<Var>& v) { return ops::transpose(v[0]); },
           {{3, 4}}, 9);
  check_op([](const std::vector<Var>& v) { return ops::rows(v[0], 1, 3); },
           {{4, 2}}, 10);
  check_op([](const std::vector<Var>& v) { return ops::cols(v[0], 1, 3); },
           {{2, 4}}, 11);
  check_op([](const std::vector<Var>& v) { return ops::concat0({v[0], v[1]}); },
           {{2, 3}, {4, 3}}, 12);
  check_op(
      [](const std::vector<Var>& v) { return ops::concat_cols({v[0], v[1]}); },
      {{3, 2}, {3, 4}}, 13);
  Rng crng(14);
  Tensor c = random_tensor({3, 3}, crng);
  check_op([&](const std::vector<Var>& v) { return ops::mul_const(v[0], c); },
           {{3, 3}}, 15);
  check_op([&](const std::vector<Var>& v) { return ops::add_const(v[0], c); },
           {{3, 3}}, 16);
}

TEST_CASE("gradcheck activations") {
  check_op([](const std::vector<Var>& v) { return ops::gelu(v[0]); }, {{4, 4}},
           20, -2.0, 2.0);
  check_op([](const std::vector<Var>& v) { return ops::sigmoid(v[0]); },
           {{4, 4}}, 21, -3.0, 3.0);
  // keep clamp inputs away from the 0/1 kinks
  check_op([](const std::vector<Var>& v) { return ops::clamp01(v[0]); },
           {{4, 4}}, 22, 0.1, 0.9);
  check_op([](const std::vector<Var>& v) { return ops::clamp01(v[0]); },
           {{4, 4}}, 23, 1.1, 1.9);
}

TEST_CASE("gradcheck matmul family") {
  check_op([](const std::vector<Var>& v) { return ops::mm(v[0], v[1]); },
           {{3, 4}, {4, 5}}, 30);
  check_op([](const std::vector<Var>& v) { return ops::mm_tn(v[0], v[1]); },
           {{4, 3}, {4, 5}}, 31);
  check_op([](const std::vector<Var>& v) { return ops::mm_nt(v[0], v[1]); },
           {{3, 4}, {5, 4}}, 32);
  check_op(
      [](const std::vector<Var>& v) { return ops::linear(v[0], v[1], v[2]); },
      {{3, 4}, {5, 4}, {5}}, 33);
  check_op(
      [](const std::vector<Var>& v) { return ops::linear(v[0], v[1], Var()); },
      {{3, 4}, {5, 4}}, 34);
}

TEST_CASE("mm matches hand-computed product") {
  Var a(Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0}));
  Var b(Tensor::from({2, 2}, {5.0, 6.0, 7.0, 8.0}));
  Tensor y = ops::mm(a, b).val();
  CHECK(y.at(0, 0) == 19.0);
  CHECK(y.at(0, 1) == 22.0);
  CHECK(y.at(1, 0) == 43.0);
  CHECK(y.at(1, 1) == 50.0);
}

TEST_CASE("gradcheck normalization and softmax") {
  check_op(
      [](const std::vector<Var>& v) {
        return ops::group_norm(v[0], v[1], v[2], 2);
      },
      {{4, 3, 3}, {4}, {4}}, 40);
  check_op(
      [](const std::vector<Var>& v) {
        return ops::layer_norm_rows(v[0], v[1], v[2]);
      },
      {{3, 6}, {6}, {6}}, 41);
  check_op([](const std::vector<Var>& v) { return ops::softmax_rows(v[0]); },
           {{3, 5}}, 42, -2.0, 2.0);
  check_op([](const std::vector<Var>& v) { return ops::softmax_dim0(v[0]); },
           {{5, 3}}, 43, -2.0, 2.0);
}

TEST_CASE("softmax normalization sums to one") {
  Rng rng(44);
  Var x(random_tensor({6, 9}, rng, -4.0, 4.0));
  Tensor yr = ops::softmax_rows(x).val();
  for (int i = 0; i < 6; ++i) {
    double s = 0.0;
    for (int j = 0; j < 9; ++j) s += yr.at(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  Tensor yc = ops::softmax_dim0(x).val();
  for (int j = 0; j < 9; ++j) {
    double s = 0.0;
    for (int i = 0; i < 6; ++i) s += yc.at(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gradcheck conv2d variants") {
  check_op(
      [](const std::vector<Var>& v) { return ops::conv2d(v[0], v[1], v[2], 1, 1); },
      {{2, 5, 5}, {3, 2, 3, 3}, {3}}, 50);
  check_op(
      [](const std::vector<Var>& v) { return ops::conv2d(v[0], v[1], v[2], 2, 1); },
      {{2, 6, 6}, {3, 2, 3, 3}, {3}}, 51);
  check_op(
      [](const std::vector<Var>& v) { return ops::conv2d(v[0], v[1], Var(), 1, 0); },
      {{3, 4, 4}, {2, 3, 1, 1}}, 52);
}

TEST_CASE("conv2d output shapes") {
  Var x(Tensor::zeros({2, 8, 10}));
  Var w(Tensor::zeros({4, 2, 3, 3}));
  CHECK(ops::conv2d(x, w, Var(), 1, 1).val().shape() == std::vector<int>{4, 8, 10});
  CHECK(ops::conv2d(x, w, Var(), 2, 1).val().shape() == std::vector<int>{4, 4, 5});
  Var w1(Tensor::zeros({4, 2, 1, 1}));
  CHECK(ops::conv2d(x, w1, Var(), 1, 0).val().shape() == std::vector<int>{4, 8, 10});
}

TEST_CASE("gradcheck upsampling") {
  check_op(
      [](const std::vector<Var>& v) { return ops::upsample_nearest2x(v[0]); },
      {{2, 3, 4}}, 60);
  check_op(
      [](const std::vector<Var>& v) { return ops::upsample_bilinear2x(v[0]); },
      {{2, 3, 4}}, 61);
}

TEST_CASE("upsample values") {
  Var x(Tensor::from({1, 2, 2}, {1.0, 2.0, 3.0, 4.0}));
  Tensor yn = ops::upsample_nearest2x(x).val();
  CHECK(yn.shape() == std::vector<int>{1, 4, 4});
  CHECK(yn.at(0, 0, 0) == 1.0);
  CHECK(yn.at(0, 0, 3) == 2.0);
  CHECK(yn.at(0, 3, 3) == 4.0);
  Tensor yb = ops::upsample_bilinear2x(x).val();
  // interior sample mixes the four neighbours with 0.75/0.25 weights
  CHECK(yb.at(0, 0, 0) == 1.0);                            // corner clamps
  CHECK(yb.at(0, 1, 1) == doctest::Approx(0.75 * (0.75 * 1 + 0.25 * 2) +
                                          0.25 * (0.75 * 3 + 0.25 * 4)));
}

TEST_CASE("gradcheck loss ops") {
  Rng rng(70);
  Tensor tgt = Tensor::zeros({3, 4});
  for (int64_t i = 0; i < tgt.numel(); ++i) tgt[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  check_op(
      [&](const std::vector<Var>& v) {
        return ops::focal_bce_logits(v[0], tgt, 2.0);
      },
      {{3, 4}}, 71, -2.0, 2.0);
  check_op(
      [&](const std::vector<Var>& v) {
        return ops::focal_bce_logits(v[0], tgt, 0.0);
      },
      {{3, 4}}, 72, -2.0, 2.0);
  check_op(
      [&](const std::vector<Var>& v) { return ops::dice_loss(v[0], tgt); },
      {{3, 4}}, 73, 0.05, 0.95);

  std::vector<int> labels = {0, 1, 1, 0};
  std::vector<double> weights = {1.0, 0.1, 1.0, 0.1};
  check_op(
      [&](const std::vector<Var>& v) {
        return ops::ce_rows(v[0], labels, weights, 4.0);
      },
      {{4, 2}}, 74, -2.0, 2.0);

  Tensor lab3 = Tensor::from({5}, {0.0, 2.0, 1.0, 1.0, 2.0});
  check_op(
      [&](const std::vector<Var>& v) {
        return ops::focal_ce_multi(v[0], lab3, 2.0);
      },
      {{3, 5}}, 75, -2.0, 2.0);

  Rng mr(76);
  Tensor target = random_tensor({3, 4}, mr, 2.0, 3.0);  // keep |pred-target| > 0
  Tensor mask = Tensor::zeros({3, 4});
  for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = mr.bernoulli(0.6) ? 1.0 : 0.0;
  check_op(
      [&](const std::vector<Var>& v) {
        return ops::masked_abs_sum(v[0], target, mask);
      },
      {{3, 4}}, 77, -1.0, 1.0);
}

TEST_CASE("loss scalar values match direct formulas") {
  // dice of identical maps with eps=1 -> 1 - (2s+1)/(2s+1) = 0
  Tensor t = Tensor::from({2, 2}, {1.0, 0.0, 1.0, 1.0});
  Var p(t.clone());
  CHECK(ops::dice_loss(p, t).scalar() == doctest::Approx(0.0).epsilon(1e-12));

  // ce_rows with uniform logits = w * log(K) / norm
  Var logits(Tensor::zeros({2, 3}));
  double l = ops::ce_rows(logits, {0, 2}, {1.0, 1.0}, 2.0).scalar();
  CHECK(l == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  // focal with gamma=0 reduces to plain BCE (up to the eps inside the log)
  Var z(Tensor::from({1}, {0.0}));
  Tensor one = Tensor::from({1}, {1.0});
  CHECK(ops::focal_bce_logits(z, one, 0.0).scalar() ==
        doctest::Approx(-std::log(0.5 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("gradcheck nn building blocks") {
  using namespace him::nn;
  Rng rng(80);

  SUBCASE("mlp") {
    ParamSet ps;
    Rng init(81);
    Mlp m = mlp(ps, "m", init, 4, 6, 3);
    Var x(random_tensor({2, 4}, rng), true);
    std::vector<Var> inputs = {x};
    for (const auto& [name, v] : ps.items()) inputs.push_back(v);
    auto res = gradcheck([&] { return ops::mean_all(m(x)); }, inputs);
    INFO(res.worst);
    CHECK(res.ok);
  }

  SUBCASE("attention") {
    ParamSet ps;
    Rng init(82);
    Attention a = attention(ps, "a", init, 8, 2);
    Var q(random_tensor({3, 8}, rng), true);
    Var kv(random_tensor({5, 8}, rng), true);
    std::vector<Var> inputs = {q, kv};
    for (const auto& [name, v] : ps.items()) inputs.push_back(v);
    auto res = gradcheck([&] { return ops::mean_all(a(q, kv, kv)); }, inputs);
    INFO(res.worst);
    CHECK(res.ok);
  }

  SUBCASE("encoder layer") {
    ParamSet ps;
    Rng init(83);
    EncoderLayer enc = encoder_layer(ps, "e", init, 8, 2, 16);
    Tensor pos = nn::sine_position_embedding(8, 2, 3);
    Var x(random_tensor({6, 8}, rng), true);
    std::vector<Var> inputs = {x};
    for (const auto& [name, v] : ps.items()) inputs.push_back(v);
    auto res = gradcheck([&] { return ops::mean_all(enc(x, pos)); }, inputs);
    INFO(res.worst);
    CHECK(res.ok);
  }

  SUBCASE("decoder layer") {
    ParamSet ps;
    Rng init(84);
    DecoderLayer dec = decoder_layer(ps, "d", init, 8, 2, 16);
    Tensor mem_pos = nn::sine_position_embedding(8, 2, 2);
    Var x(random_tensor({3, 8}, rng), true);
    Var qpos(random_tensor({3, 8}, rng), true);
    Var mem(random_tensor({4, 8}, rng), true);
    std::vector<Var> inputs = {x, qpos, mem};
    for (const auto& [name, v] : ps.items()) inputs.push_back(v);
    auto res =
        gradcheck([&] { return ops::mean_all(dec(x, qpos, mem, mem_pos)); }, inputs);
    INFO(res.worst);
    CHECK(res.ok);
  }

  SUBCASE("conv block") {
    ParamSet ps;
    Rng init(85);
    ConvBlock cb = conv_block(ps, "c", init, 3, 4, 3, 2, 2);
    Var x(random_tensor({3, 6, 6}, rng), true);
    std::vector<Var> inputs = {x};
    for (const auto& [name, v] : ps.items()) inputs.push_back(v);
    auto res = gradcheck([&] { return ops::mean_all(cb(x)); }, inputs);
    INFO(res.worst);
    CHECK(res.ok);
  }
}

TEST_CASE("param set bookkeeping") {
  nn::ParamSet ps;
  Rng rng(90);
  nn::linear(ps, "a", rng, 2, 3);
  CHECK(ps.total_params() == 2 * 3 + 3);
  CHECK(ps.items()[0].first == "a.w");
  CHECK(ps.items()[1].first == "a.b");
  CHECK_THROWS_AS(ps.add("a.w", Tensor::zeros({1})), ConfigError);
  CHECK_THROWS_AS(ps.find("nope"), ConfigError);
  Var w = ps.find("a.w");
  w.grad()[0] = 5.0;
  ps.zero_grads();
  CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("sine position embedding") {
  Tensor pe = nn::sine_position_embedding(8, 3, 4);
  CHECK(pe.shape() == std::vector<int>{12, 8});
  CHECK(pe.all_finite());
  CHECK(pe.abs_max() <= 1.0 + 1e-12);
  CHECK_THROWS_AS(nn::sine_position_embedding(6, 2, 2), ShapeError);
  // two different grid positions get different codes
  bool differ = false;
  for (int c = 0; c < 8; ++c)
    if (pe.at(0, c) != pe.at(7, c)) differ = true;
  CHECK(differ);
}
