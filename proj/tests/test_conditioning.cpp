#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "s2p/attributes.hpp"
#include "test_util.hpp"

using namespace s2p;

TEST_CASE("replicate_labels values and shape") {
  AttributeVector v;
  v[0] = 1;
  v[3] = 1;
  v[4] = 1;  // [1,0,0,1,1]
  const Tensor planes = replicate_labels(v, 2, 2);
  CHECK(planes.shape().c == kNumAttributes);
  CHECK(planes.shape().h == 2);
  const float expect[5] = {1, -1, -1, 1, 1};
  for (int p = 0; p < 5; ++p)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) CHECK(planes.at(0, p, y, x) == expect[p]);

  // all-zero bits -> five all-(-1) planes
  const Tensor zeros = replicate_labels(AttributeVector{}, 3, 5);
  for (std::int64_t i = 0; i < zeros.size(); ++i) CHECK(zeros[i] == -1.0f);

  // plane count independent of size
  CHECK(replicate_labels(v, 16, 8).shape().c == 5);
  CHECK_THROWS_AS(replicate_labels(v, 0, 4), ArgumentError);
}

TEST_CASE("plane-mean readout recovers the bits exactly") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    AttributeVector v = AttributeVector::make(rng.uniform_int(0, 2),
                                              rng.uniform_int(0, 1) != 0,
                                              rng.uniform_int(0, 1) != 0);
    const Tensor planes = replicate_labels(v, 4, 4);
    for (int p = 0; p < 5; ++p) {
      double mean = 0;
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) mean += planes.at(0, p, y, x);
      mean /= 16.0;
      CHECK(int((mean + 1.0) / 2.0) == v[p]);
    }
  }
}

TEST_CASE("concat_condition channel counts and bit-exact image preservation") {
  Rng rng(5);
  const Tensor photo = testutil::random_ftensor(Shape(2, 3, 64, 64), rng);
  const AttributeVector a = AttributeVector::make(0, true, true);
  const AttributeVector b = AttributeVector::make(2, false, false);
  const ConditionedInput ci = concat_condition(photo, {a, b});
  CHECK(ci.tensor.shape().c == 8);  // 3 + 5
  CHECK(ci.tensor.shape().h == 64);

  const Tensor sketch = testutil::random_ftensor(Shape(1, 1, 32, 32), rng);
  const ConditionedInput cs = concat_condition(sketch, {a});
  CHECK(cs.tensor.shape().c == 6);  // 1 + 5

  // slicing the image channels back reproduces the input bit-exactly
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          CHECK(ci.tensor.at(n, c, y, x) == photo.at(n, c, y, x));

  CHECK_THROWS_AS(concat_condition(photo, {a}), ArgumentError);  // count mismatch
}

TEST_CASE("sample_target_attrs differs from the original and is deterministic") {
  const AttributeVector orig = AttributeVector::make(0, true, true);  // black, young

  const AttributeVector t1 = sample_target_attrs(orig, 99);
  const AttributeVector t2 = sample_target_attrs(orig, 99);
  CHECK(t1 == t2);
  t1.validate();
  CHECK(t1[4] == 0);  // translation pass

  // never returns the original semantic bits
  for (int s = 0; s < 500; ++s) {
    const AttributeVector t = sample_target_attrs(orig, std::uint64_t(s));
    const bool same = t.hair_index() == orig.hair_index() && t[3] == orig[3];
    CHECK_FALSE(same);
  }
}

TEST_CASE("sample_target_attrs covers every distinct (hair, young) combination") {
  const AttributeVector orig = AttributeVector::make(1, false, true);

  // brute-force enumeration of the 3x2 label lattice minus the original
  std::set<std::pair<int, int>> expected;
  for (int hair = 0; hair < 3; ++hair)
    for (int young = 0; young <= 1; ++young)
      if (!(hair == orig.hair_index() && young == orig[3])) expected.insert({hair, young});
  CHECK(expected.size() == 5);

  std::set<std::pair<int, int>> seen;
  for (int s = 0; s < 10000; ++s) {
    const AttributeVector t = sample_target_attrs(orig, derive_seed(4242, 1, std::uint64_t(s)));
    seen.insert({t.hair_index(), int(t[3])});
  }
  CHECK(seen == expected);
}

TEST_CASE("ground-truth validation demands exactly one hair bit") {
  AttributeVector v;
  CHECK_THROWS_AS(v.validate(), ArgumentError);  // zero hair bits
  v[0] = 1;
  v[1] = 1;
  CHECK_THROWS_AS(v.validate(), ArgumentError);  // two hair bits
  v[1] = 0;
  CHECK_NOTHROW(v.validate());
}
