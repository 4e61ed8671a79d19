#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "s2p/hashing.hpp"
#include "s2p/tape.hpp"
#include "test_util.hpp"

using namespace s2p;
using testutil::GradCheck;
using testutil::random_tensor;

TEST_CASE("tensor shape and indexing") {
  Tensor t(Shape(2, 3, 4, 5));
  CHECK(t.size() == 120);
  t.at(1, 2, 3, 4) = 7.0f;
  CHECK(t[t.size() - 1] == 7.0f);
  CHECK_THROWS_AS(Tensor(Shape(0, 1, 1, 1)), ArgumentError);
}

TEST_CASE("sha256 known vector") {
  // FIPS 180-2 test vector for "abc"
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("pixel_norm value and unit mean square") {
  FTape t;
  Tensor in(Shape(1, 2, 1, 1));
  in[0] = 3.0f;
  in[1] = 4.0f;
  const int out = t.pixel_norm(t.leaf(in), 1e-8);
  CHECK(t.val(out)[0] == doctest::Approx(0.848528137).epsilon(1e-6));
  CHECK(t.val(out)[1] == doctest::Approx(1.131370850).epsilon(1e-6));

  // all-zero input stays zero
  FTape t2;
  const int z = t2.pixel_norm(t2.leaf(Tensor(Shape(2, 3, 2, 2))), 1e-8);
  for (std::int64_t i = 0; i < t2.val(z).size(); ++i) CHECK(t2.val(z)[i] == 0.0f);

  // equal channels map to ~sign(v)
  FTape t3;
  Tensor c(Shape(1, 4, 1, 1), -2.5f);
  const int s = t3.pixel_norm(t3.leaf(c), 1e-8);
  for (int i = 0; i < 4; ++i) CHECK(t3.val(s)[i] == doctest::Approx(-1.0).epsilon(1e-6));

  // mean over channels of squared output is 1 for nonzero pixels
  Rng rng(11);
  FTape t4;
  Tensor r = testutil::random_ftensor(Shape(2, 5, 3, 3), rng);
  const int y = t4.pixel_norm(t4.leaf(r), 1e-8);
  for (int n = 0; n < 2; ++n)
    for (int yy = 0; yy < 3; ++yy)
      for (int xx = 0; xx < 3; ++xx) {
        double acc = 0;
        for (int cpos = 0; cpos < 5; ++cpos) {
          const double v = t4.val(y).at(n, cpos, yy, xx);
          acc += v * v;
        }
        CHECK(acc / 5.0 == doctest::Approx(1.0).epsilon(1e-4));
      }
}

TEST_CASE("minibatch_stddev values") {
  // identical samples -> zero channel
  FTape t;
  Tensor same(Shape(3, 2, 2, 2), 0.37f);
  const int out = t.minibatch_stddev(t.leaf(same));
  CHECK(t.val(out).shape().c == 3);
  for (int n = 0; n < 3; ++n)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) CHECK(t.val(out).at(n, 2, y, x) == 0.0f);

  // two samples, features 0 and 2 -> population stddev 1 everywhere
  FTape t2;
  Tensor two(Shape(2, 1, 2, 2));
  for (int i = 0; i < 4; ++i) two.sample(1)[i] = 2.0f;
  const int o2 = t2.minibatch_stddev(t2.leaf(two));
  for (int n = 0; n < 2; ++n) CHECK(t2.val(o2).at(n, 1, 0, 0) == doctest::Approx(1.0));

  CHECK_THROWS_AS((void)t2.minibatch_stddev(t2.leaf(Tensor(Shape(1, 2, 2, 2)))),
                  ArgumentError);
}

TEST_CASE("pixel_norm gradient matches finite differences") {
  Rng rng(42);
  GradCheck gc;
  const bool ok = gc.run({random_tensor(Shape(2, 4, 3, 3), rng)},
                         [](DTape& t, const std::vector<int>& in) {
                           // weighted sum makes the scalar sensitive to every entry
                           DTensor w(Shape(2, 4, 3, 3));
                           Rng wr(5);
                           for (std::int64_t i = 0; i < w.size(); ++i) w[i] = wr.normal();
                           return t.sum_all(t.mul(t.pixel_norm(in[0], 1e-8), t.leaf(w)));
                         });
  INFO("max rel err ", gc.max_rel_err);
  CHECK(ok);
}

TEST_CASE("minibatch_stddev gradient matches finite differences") {
  Rng rng(43);
  GradCheck gc;
  const bool ok = gc.run({random_tensor(Shape(2, 4, 4, 4), rng)},
                         [](DTape& t, const std::vector<int>& in) {
                           DTensor w(Shape(2, 5, 4, 4));
                           Rng wr(6);
                           for (std::int64_t i = 0; i < w.size(); ++i) w[i] = wr.normal();
                           return t.sum_all(t.mul(t.minibatch_stddev(in[0]), t.leaf(w)));
                         });
  INFO("max rel err ", gc.max_rel_err);
  CHECK(ok);
}

TEST_CASE("conv, pool, upsample, gram gradients") {
  Rng rng(44);
  GradCheck gc;
  DTensor w = random_tensor(Shape(3, 2, 3, 3), rng, 0.5);
  DTensor b = random_tensor(Shape(3, 1, 1, 1), rng, 0.1);
  const bool ok =
      gc.run({random_tensor(Shape(2, 2, 4, 4), rng), w, b},
             [](DTape& t, const std::vector<int>& in) {
               int c = t.conv2d(in[0], in[1], in[2], 1);
               int u = t.upsample2(t.avg_pool2(t.leaky_relu(c, 0.2)));
               return t.mean_all(t.gram(u));
             });
  INFO("max rel err ", gc.max_rel_err);
  CHECK(ok);
}

TEST_CASE("linear, softmax, l2norm, select, concat gradients") {
  Rng rng(45);
  GradCheck gc;
  DTensor w = random_tensor(Shape(4, 8, 1, 1), rng, 0.5);
  DTensor b = random_tensor(Shape(4, 1, 1, 1), rng, 0.1);
  const bool ok = gc.run(
      {random_tensor(Shape(3, 2, 2, 2), rng), w, b},
      [](DTape& t, const std::vector<int>& in) {
        int f = t.flatten(in[0]);
        int y = t.linear(f, in[1], in[2]);
        int a = t.mean_all(t.log_softmax_c(y));
        int n = t.l2norm_rows(y);
        int sel = t.select_rows(n, {2, 0});
        int cat2 = t.concat_n(n, sel);
        int d = t.sum_c(t.mul(cat2, cat2));
        return t.add(a, t.mean_all(t.sqrt_op(t.add_scalar(d, 0.5))));
      });
  INFO("max rel err ", gc.max_rel_err);
  CHECK(ok);
}

TEST_CASE("weight-sharing through params: one storage, two tape entries") {
  auto p = std::make_shared<Param>("shared.w", Tensor(Shape(1, 1, 1, 1), 2.0f));
  FTape t;
  const int a = t.param(p);
  const int b = t.param(p);
  const int loss = t.mean_all(t.mul(a, b));  // p^2
  t.backward(loss);
  CHECK(p->grad[0] == doctest::Approx(4.0));  // d(p^2)/dp = 2p accumulated via both entries
  p->value[0] = 5.0f;
  FTape t2;
  CHECK(t2.val(t2.param(p))[0] == 5.0f);  // mutation observable through the shared pointer
}

TEST_CASE("detach blocks gradients") {
  FTape t;
  const int x = t.input(Tensor(Shape(1, 1, 1, 1), 3.0f));
  const int d = t.detach(x);
  const int loss = t.mean_all(t.mul(d, d));
  t.backward(loss);
  CHECK_FALSE(t.has_grad(x));
}
