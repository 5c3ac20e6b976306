#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "him/perception.hpp"

using namespace him;

namespace {

NetworkConfig micro_config() {
  NetworkConfig cfg;
  cfg.channels = 8;
  cfg.queries = 3;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 2;
  cfg.heads = 2;
  cfg.group_norm_groups = 2;
  cfg.stem_channels = 4;
  cfg.matting_channels = 4;
  cfg.alpha_channels = 4;
  cfg.trimap_channels = 4;
  cfg.ffn_mult = 2;
  return cfg;
}

bool tensor_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("network config validation") {
  NetworkConfig cfg;
  CHECK_NOTHROW(cfg.validate());

  NetworkConfig bad = cfg;
  bad.channels = 60;  // not divisible by heads=4? 60%4==0; break gn instead
  bad.heads = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.channels = 62;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.queries = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.backbone = "resnet50";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.stem_channels = 30;  // not divisible by group_norm_groups=8
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.decoder_layers = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("encoder output shapes and input validation") {
  NetworkConfig cfg;  // C=64 defaults
  nn::ParamSet ps;
  Rng rng(1);
  PerceptionNet net(cfg, ps, rng);
  NoGradGuard ng;

  Rng irng(2);
  Tensor img = random_tensor({3, 128, 128}, irng, 0.0, 1.0);
  EncoderFeatures f = net.encode(img);
  CHECK(f.stem.val().shape() == std::vector<int>{32, 32, 32});
  CHECK(f.backbone8.val().shape() == std::vector<int>{64, 16, 16});
  CHECK(f.backbone.val().shape() == std::vector<int>{128, 8, 8});
  CHECK(f.context.val().shape() == std::vector<int>{64, 8, 8});
  CHECK(f.pos.shape() == std::vector<int>{64, 64});
  for (int64_t i = 0; i < f.context.val().numel(); ++i)
    CHECK(std::isfinite(f.context.val()[i]));

  CHECK_THROWS_AS(net.encode(random_tensor({3, 120, 128}, irng)), ShapeError);
  CHECK_THROWS_AS(net.encode(random_tensor({1, 128, 128}, irng)), ShapeError);

  // deterministic forward
  EncoderFeatures f2 = net.encode(img);
  CHECK(tensor_equal(f.context.val(), f2.context.val()));

  // constant channel offset must not collapse to identical context features
  Tensor shifted = img.clone();
  for (int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += 0.1;
  EncoderFeatures f3 = net.encode(shifted);
  CHECK(max_abs_diff(f.context.val(), f3.context.val()) > 1e-6);
}

TEST_CASE("query decoding shapes and memory permutation equivariance") {
  NetworkConfig cfg = micro_config();
  nn::ParamSet ps;
  Rng rng(3);
  PerceptionNet net(cfg, ps, rng);
  NoGradGuard ng;

  Rng irng(4);
  Tensor img = random_tensor({3, 64, 64}, irng, 0.0, 1.0);
  EncoderFeatures f = net.encode(img);
  LatentCodes lc = net.decode_queries(f);
  CHECK(lc.x.val().shape() == std::vector<int>{3, 8});
  CHECK(lc.query_embedding.val().shape() == std::vector<int>{3, 8});

  // N=1 network
  NetworkConfig c1 = cfg;
  c1.queries = 1;
  nn::ParamSet ps1;
  Rng rng1(3);
  PerceptionNet net1(c1, ps1, rng1);
  CHECK(net1.decode_queries(net1.encode(img)).x.val().shape() ==
        std::vector<int>{1, 8});

  // permuting memory rows together with their position encodings leaves the
  // latent codes unchanged (attention is a set operation over tokens)
  const int p = 16;
  Tensor mem = random_tensor({p, 8}, irng, -1.0, 1.0);
  Tensor pos = random_tensor({p, 8}, irng, -1.0, 1.0);
  Var x0 = net.decode_queries_from(Var(mem), pos);

  Rng prng(5);
  std::vector<int> perm(p);
  for (int i = 0; i < p; ++i) perm[i] = i;
  for (int i = p - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)],
              perm[static_cast<size_t>(prng.uniform_int(0, i))]);
  Tensor mem_p = Tensor::zeros({p, 8});
  Tensor pos_p = Tensor::zeros({p, 8});
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < 8; ++j) {
      mem_p.at(i, j) = mem.at(perm[static_cast<size_t>(i)], j);
      pos_p.at(i, j) = pos.at(perm[static_cast<size_t>(i)], j);
    }
  Var x1 = net.decode_queries_from(Var(mem_p), pos_p);
  CHECK(max_abs_diff(x0.val(), x1.val()) < 1e-9);
}

TEST_CASE("feature decoding fuses backbone detail with context") {
  NetworkConfig cfg = micro_config();
  nn::ParamSet ps;
  Rng rng(6);
  PerceptionNet net(cfg, ps, rng);
  NoGradGuard ng;

  Rng irng(7);
  Tensor img = random_tensor({3, 64, 64}, irng, 0.0, 1.0);
  EncoderFeatures f = net.encode(img);
  Var f_dc = net.feature_decode(f);
  CHECK(f_dc.val().shape() == std::vector<int>{8, 8, 8});

  // zeroing the context features must change the output
  EncoderFeatures zeroed = f;
  zeroed.context = Var(Tensor::zeros(f.context.val().shape()));
  Var f_dc0 = net.feature_decode(zeroed);
  CHECK(max_abs_diff(f_dc.val(), f_dc0.val()) > 1e-8);
}

TEST_CASE("mask head applies dynamic kernels exactly") {
  NoGradGuard ng;
  // bias-only path: zero features reproduce the biases as constant channels
  Tensor zero_f = Tensor::zeros({4, 3, 5});
  Tensor k = Tensor::zeros({2, 4});
  Tensor b = Tensor::from({2, 1}, {0.3, -0.1});
  Var m = mask_from_kernels(Var(k), Var(b), Var(zero_f));
  CHECK(m.val().shape() == std::vector<int>{2, 3, 5});
  for (int64_t i = 0; i < 15; ++i) {
    CHECK(m.val()[i] == doctest::Approx(0.3));
    CHECK(m.val()[15 + i] == doctest::Approx(-0.1));
  }

  // first-basis-vector kernel copies the first feature channel through
  Tensor f = Tensor::zeros({4, 3, 5});
  for (int64_t i = 0; i < 15; ++i) f[i] = static_cast<double>(i) / 14.0;
  Tensor k1 = Tensor::zeros({1, 4});
  k1[0] = 1.0;
  Var ramp = mask_from_kernels(Var(k1), Var(Tensor::zeros({1, 1})), Var(f));
  for (int64_t i = 0; i < 15; ++i)
    CHECK(ramp.val()[i] == doctest::Approx(static_cast<double>(i) / 14.0));

  CHECK_THROWS_AS(
      mask_from_kernels(Var(Tensor::zeros({2, 3})), Var(b), Var(zero_f)),
      ShapeError);
}

TEST_CASE("aux head output shapes") {
  NetworkConfig cfg = micro_config();
  nn::ParamSet ps;
  Rng rng(8);
  PerceptionNet net(cfg, ps, rng);
  NoGradGuard ng;
  Rng irng(9);
  Tensor img = random_tensor({3, 64, 64}, irng, 0.0, 1.0);
  EncoderFeatures f = net.encode(img);
  LatentCodes lc = net.decode_queries(f);
  Var f_dc = net.feature_decode(f);
  AuxOutputs aux = net.aux_heads(lc.x, f_dc);
  CHECK(aux.mask_logits.val().shape() == std::vector<int>{3, 8, 8});
  CHECK(aux.class_logits.val().shape() == std::vector<int>{3, 2});
}

TEST_CASE("declared shapes hold across the supported size grid") {
  NoGradGuard ng;
  Rng irng(10);
  for (int n : {8, 20})
    for (int c : {32, 64, 256}) {
      NetworkConfig cfg;
      cfg.queries = n;
      cfg.channels = c;
      cfg.heads = 4;
      nn::ParamSet ps;
      Rng rng(11);
      PerceptionNet net(cfg, ps, rng);
      for (int hw : {64, 128, 640}) {
        Tensor img = random_tensor({3, hw, hw}, irng, 0.0, 1.0);
        EncoderFeatures f = net.encode(img);
        CHECK(f.context.val().shape() ==
              std::vector<int>{c, hw / 16, hw / 16});
        CHECK(f.backbone.val().shape() ==
              std::vector<int>{2 * c, hw / 16, hw / 16});
        Var f_dc = net.feature_decode(f);
        CHECK(f_dc.val().shape() == std::vector<int>{c, hw / 8, hw / 8});
        LatentCodes lc = net.decode_queries(f);
        CHECK(lc.x.val().shape() == std::vector<int>{n, c});
        for (int64_t i = 0; i < lc.x.val().numel(); ++i)
          CHECK(std::isfinite(lc.x.val()[i]));
        AuxOutputs aux = net.aux_heads(lc.x, f_dc);
        CHECK(aux.mask_logits.val().shape() ==
              std::vector<int>{n, hw / 8, hw / 8});
        CHECK(aux.class_logits.val().shape() == std::vector<int>{n, 2});
      }
    }
}

TEST_CASE("gradients reach every parameter group from the mask logits") {
  NetworkConfig cfg = micro_config();
  nn::ParamSet ps;
  Rng rng(12);
  PerceptionNet net(cfg, ps, rng);
  Rng irng(13);
  Tensor img = random_tensor({3, 64, 64}, irng, 0.0, 1.0);

  EncoderFeatures f = net.encode(img);
  LatentCodes lc = net.decode_queries(f);
  Var f_dc = net.feature_decode(f);
  AuxOutputs aux = net.aux_heads(lc.x, f_dc);
  Var loss = ops::add(ops::sum_all(aux.mask_logits),
                      ops::sum_all(aux.class_logits));
  backward(loss);

  std::vector<std::string> groups = {
      "perception.stem1", "perception.stem2",  "perception.stem3",
      "perception.stage1", "perception.stage2", "perception.proj",
      "perception.enc0",  "perception.query_embed", "perception.dec0",
      "perception.dec1",  "perception.fuse1",  "perception.fuse2",
      "perception.k_seg", "perception.b_seg",  "perception.cls"};
  for (const std::string& g : groups) {
    double mx = 0.0;
    for (const auto& [name, v] : ps.items())
      if (name.rfind(g, 0) == 0)
        for (int64_t i = 0; i < v.grad().numel(); ++i)
          mx = std::max(mx, std::abs(v.grad()[i]));
    INFO(g);
    CHECK(mx > 0.0);
  }
}

TEST_CASE("finite differences confirm gradients through the network") {
  NetworkConfig cfg = micro_config();
  cfg.decoder_layers = 1;
  nn::ParamSet ps;
  Rng rng(14);
  PerceptionNet net(cfg, ps, rng);
  Rng irng(15);
  Tensor img = random_tensor({3, 32, 32}, irng, 0.0, 1.0);

  auto fn = [&] {
    EncoderFeatures f = net.encode(img);
    LatentCodes lc = net.decode_queries(f);
    Var f_dc = net.feature_decode(f);
    AuxOutputs aux = net.aux_heads(lc.x, f_dc);
    Var m = ops::mean_all(aux.mask_logits);
    return ops::add(m, ops::mean_all(aux.class_logits));
  };
  // a spread of parameters across the depth of the network
  std::vector<Var> probes = {
      ps.find("perception.stem1.conv.w"), ps.find("perception.stage1.c1.w"),
      ps.find("perception.enc0.attn.q.w"), ps.find("perception.query_embed"),
      ps.find("perception.dec0.cross.v.w"), ps.find("perception.fuse1.conv.w"),
      ps.find("perception.k_seg.l1.w"), ps.find("perception.cls.l3.b")};
  auto res = gradcheck(fn, probes, 1e-5, 1e-7, 1e-4);
  INFO(res.worst);
  CHECK(res.ok);
}
