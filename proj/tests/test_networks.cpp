#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "s2p/checkpoint.hpp"
#include "s2p/hashing.hpp"
#include "s2p/networks.hpp"
#include "test_util.hpp"

using namespace s2p;

namespace {

NetConfig small_cfg(int res = 64) {
  NetConfig c;
  c.resolution = res;
  c.base_width = 8;
  c.max_width = 32;
  return c;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * size_t(a.size())) == 0;
}

}  // namespace

TEST_CASE("generator output shape and range contract") {
  Generator g(small_cfg(), 6, 3, "g", 1);
  Rng rng(2);
  FTape t;
  const int x = t.leaf(testutil::random_ftensor(Shape(2, 6, 64, 64), rng));
  const GeneratorOutput out = g.forward(t, x, {64, 1.0f});
  const Shape& s = t.val(out.image).shape();
  CHECK(s == Shape(2, 3, 64, 64));
  for (std::int64_t i = 0; i < t.val(out.image).size(); ++i) {
    CHECK(t.val(out.image)[i] >= -1.0f);
    CHECK(t.val(out.image)[i] <= 1.0f);
  }
  // bounded even for wild inputs
  FTape t2;
  const int wild = t2.leaf(testutil::random_ftensor(Shape(2, 6, 64, 64), rng, 1e6f));
  const GeneratorOutput out2 = g.forward(t2, wild, {64, 1.0f});
  for (std::int64_t i = 0; i < t2.val(out2.image).size(); ++i) {
    CHECK(t2.val(out2.image)[i] >= -1.0f);
    CHECK(t2.val(out2.image)[i] <= 1.0f);
  }
  // resolution mismatch is an argument error
  FTape t3;
  const int small = t3.leaf(Tensor(Shape(1, 6, 32, 32)));
  CHECK_THROWS_AS(g.forward(t3, small, {64, 1.0f}), ArgumentError);
}

TEST_CASE("encoder taps follow the halving chain") {
  Generator g(small_cfg(), 6, 3, "g", 3);
  Rng rng(4);
  FTape t;
  const int x = t.leaf(testutil::random_ftensor(Shape(1, 6, 64, 64), rng));
  const GeneratorOutput out = g.forward(t, x, {64, 1.0f}, /*want_taps=*/true);
  REQUIRE(out.encoder_taps.size() == 3);
  CHECK(t.val(out.encoder_taps[0]).shape().h == 32);
  CHECK(t.val(out.encoder_taps[1]).shape().h == 16);
  CHECK(t.val(out.encoder_taps[2]).shape().h == 8);
}

TEST_CASE("fade-in endpoints match single-path outputs bit-for-bit") {
  Generator g(small_cfg(), 6, 3, "g", 5);
  Rng rng(6);
  const Tensor input64 = testutil::random_ftensor(Shape(2, 6, 64, 64), rng);

  // alpha = 1 equals running without any blend branch: by construction the
  // alpha >= 1 path is the plain single-path forward; check determinism too
  FTape ta, tb;
  const Tensor a = ta.val(g.forward(ta, ta.leaf(input64), {64, 1.0f}).image);
  const Tensor b = tb.val(g.forward(tb, tb.leaf(input64), {64, 1.0f}).image);
  CHECK(same_bits(a, b));

  // alpha = 0 equals the previous-resolution network on the pooled input,
  // upsampled
  FTape t0;
  const Tensor out0 = t0.val(g.forward(t0, t0.leaf(input64), {64, 0.0f}).image);
  FTape t1;
  const int pooled = t1.avg_pool2(t1.leaf(input64));
  const int prev = g.forward(t1, pooled, {32, 1.0f}).image;
  const Tensor up = t1.val(t1.upsample2(prev));
  CHECK(same_bits(out0, up));
}

TEST_CASE("fade-in is Lipschitz in alpha") {
  Generator g(small_cfg(), 8, 1, "g", 7);
  Rng rng(8);
  const Tensor input = testutil::random_ftensor(Shape(1, 8, 64, 64), rng);
  auto worst_delta = [&](float alpha, float delta) {
    FTape ta, tb;
    const Tensor ya = ta.val(g.forward(ta, ta.leaf(input), {64, alpha}).image);
    const Tensor yb = tb.val(g.forward(tb, tb.leaf(input), {64, alpha + delta}).image);
    float worst = 0;
    for (std::int64_t i = 0; i < ya.size(); ++i)
      worst = std::max(worst, std::abs(ya[i] - yb[i]));
    return worst;
  };
  // the encoder blend propagates through the decoder, so the constant is
  // architecture-dependent; check boundedness and decay as delta -> 0
  const float d3 = worst_delta(0.5f, 1e-3f);
  const float d4 = worst_delta(0.5f, 1e-4f);
  CHECK(d3 <= 0.1f);
  CHECK(d4 <= 0.15f * d3 + 1e-6f);
}

TEST_CASE("discriminator contract: heads, determinism, batch minimum") {
  Discriminator d(small_cfg(), 3, "d", 9);
  Rng rng(10);
  const Tensor batch = testutil::random_ftensor(Shape(3, 3, 64, 64), rng);

  FTape t;
  const DiscriminatorOutput o1 = d.forward(t, t.leaf(batch), {64, 1.0f});
  CHECK(t.val(o1.score).shape() == Shape(3, 1, 1, 1));
  CHECK(t.val(o1.attr_logits).shape() == Shape(3, 5, 1, 1));
  for (std::int64_t i = 0; i < t.val(o1.score).size(); ++i)
    CHECK(std::isfinite(t.val(o1.score)[i]));

  // identical calls with frozen parameters agree exactly
  FTape t2;
  const DiscriminatorOutput o2 = d.forward(t2, t2.leaf(batch), {64, 1.0f});
  CHECK(same_bits(t.val(o1.score), t2.val(o2.score)));
  CHECK(same_bits(t.val(o1.attr_logits), t2.val(o2.attr_logits)));

  // permuting the batch permutes outputs identically (3-sample brute force)
  Tensor permuted(batch.shape());
  const int perm[3] = {2, 0, 1};
  for (int n = 0; n < 3; ++n)
    std::memcpy(permuted.sample(n), batch.sample(perm[n]),
                sizeof(float) * size_t(batch.sample_size()));
  FTape t3;
  const DiscriminatorOutput o3 = d.forward(t3, t3.leaf(permuted), {64, 1.0f});
  for (int n = 0; n < 3; ++n)
    CHECK(t3.val(o3.score).at(n, 0, 0, 0) == t.val(o1.score).at(perm[n], 0, 0, 0));

  // logits finite at range extremes
  FTape t4;
  Tensor extremes(Shape(2, 3, 64, 64), 1.0f);
  for (std::int64_t i = 0; i < extremes.sample_size(); ++i) extremes.sample(1)[i] = -1.0f;
  const DiscriminatorOutput o4 = d.forward(t4, t4.leaf(extremes), {64, 1.0f});
  for (std::int64_t i = 0; i < t4.val(o4.attr_logits).size(); ++i)
    CHECK(std::isfinite(t4.val(o4.attr_logits)[i]));

  // batch of 1 violates the minibatch-stddev precondition
  FTape t5;
  CHECK_THROWS_AS(d.forward(t5, t5.leaf(Tensor(Shape(1, 3, 64, 64))), {64, 1.0f}),
                  ArgumentError);
}

TEST_CASE("quality encoder aliases the generator encoder storage") {
  Generator gx(small_cfg(), 6, 3, "gx", 11);
  QualityEncoder ex(gx, 8, "ex", 12);

  // write through the generator handle, observe through the shared block
  const auto& shared = ex.shared_blocks();
  REQUIRE_FALSE(shared.empty());
  const auto& gen_params = gx.params();
  bool found = false;
  for (const auto& [res, layer] : shared) {
    for (const auto& p : gen_params)
      if (p.get() == layer.w.get()) found = true;
  }
  CHECK(found);

  const auto& first = shared.begin()->second;
  const float before = first.w->value[0];
  first.w->value[0] = before + 1.0f;
  for (const auto& p : gen_params)
    if (p->name == first.w->name) CHECK(p->value[0] == before + 1.0f);
  first.w->value[0] = before;

  // identical tap features on the same input when weights are cloned
  Rng rng(13);
  const Tensor photo_cond = testutil::random_ftensor(Shape(1, 8, 64, 64), rng);
  FTape t;
  const auto taps = ex.forward_taps(t, t.leaf(photo_cond), {64, 1.0f});
  CHECK(taps.size() == 3);
}

TEST_CASE("identity embedder: unit norm, determinism, channel check, frozen hash") {
  IdentityNet phi("phi", 21, 64, 64, 5);
  Rng rng(22);
  const Tensor photos = testutil::random_ftensor(Shape(3, 3, 64, 64), rng);

  FTape t;
  const int e = phi.embed(t, t.leaf(photos));
  CHECK(t.val(e).shape() == Shape(3, 64, 1, 1));
  for (int n = 0; n < 3; ++n) {
    double nrm = 0;
    for (int c = 0; c < 64; ++c) nrm += double(t.val(e).at(n, c, 0, 0)) * t.val(e).at(n, c, 0, 0);
    CHECK(std::abs(std::sqrt(nrm) - 1.0) < 1e-5);
  }
  FTape t2;
  CHECK(same_bits(t.val(e), t2.val(phi.embed(t2, t2.leaf(photos)))));

  FTape t3;
  CHECK_THROWS_AS(phi.embed(t3, t3.leaf(Tensor(Shape(1, 1, 64, 64)))), ArgumentError);

  // frozen: gradients flow to the image but parameters never change
  phi.freeze();
  const std::string h0 = phi.param_hash();
  FTape t4;
  const int img = t4.input(photos);
  const int emb = phi.embed(t4, img);
  t4.backward(t4.mean_all(t4.mul(emb, emb)));
  CHECK(t4.has_grad(img));
  for (const auto& p : phi.params()) {
    float gsum = 0;
    for (std::int64_t i = 0; i < p->grad.size(); ++i) gsum += std::abs(p->grad[i]);
    CHECK(gsum == 0.0f);
  }
  CHECK(phi.param_hash() == h0);
}

TEST_CASE("perceptual extractor taps and feature head") {
  PerceptualNet p("p", 31, 64);
  Rng rng(32);
  FTape t;
  const int img = t.leaf(testutil::random_ftensor(Shape(2, 3, 64, 64), rng));
  const auto taps = p.forward_taps(t, img);
  REQUIRE(taps.size() == 4);
  CHECK(t.val(taps[0]).shape().h == 64);
  CHECK(t.val(taps[3]).shape().h == 8);
  CHECK(t.val(p.features(t, img)).shape() == Shape(2, 128, 1, 1));
  CHECK(t.val(p.logits(t, img)).shape() == Shape(2, 5, 1, 1));
}

TEST_CASE("checkpoint round trip restores forward outputs exactly") {
  const std::string dir = testutil::scratch_dir("ckpt_nets");
  Generator g(small_cfg(), 6, 3, "g", 41);
  Rng rng(42);
  const Tensor probe = testutil::random_ftensor(Shape(1, 6, 64, 64), rng);
  FTape t;
  const Tensor before = t.val(g.forward(t, t.leaf(probe), {64, 1.0f}).image);

  save_params(dir + "/g.bin", g.params());
  Generator g2(small_cfg(), 6, 3, "g", 999);  // different init
  load_params(dir + "/g.bin", g2.params());
  FTape t2;
  const Tensor after = t2.val(g2.forward(t2, t2.leaf(probe), {64, 1.0f}).image);
  CHECK(same_bits(before, after));

  // shape mismatch is a data error naming the parameter
  Generator g3(small_cfg(32), 6, 3, "g", 7);
  CHECK_THROWS_AS(load_params(dir + "/g.bin", g3.params()), DataError);
}

TEST_CASE("params digest is order- and value-sensitive") {
  Generator g(small_cfg(), 6, 3, "g", 51);
  const std::string h = params_digest(g.params());
  g.params()[0]->value[0] += 1.0f;
  CHECK(params_digest(g.params()) != h);
}
