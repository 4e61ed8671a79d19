#include "s2p/attributes.hpp"

#include "s2p/rng.hpp"

namespace s2p {

const std::array<std::string, kNumAttributes> kAttributeNames = {
    "black_hair", "blond_hair", "brown_hair", "young", "rec"};

int AttributeVector::hair_index() const {
  for (int i = 0; i < kNumHair; ++i)
    if (bits[size_t(i)]) return i;
  return -1;
}

void AttributeVector::validate() const {
  int hair = 0;
  for (int i = 0; i < kNumAttributes; ++i)
    check_arg(bits[size_t(i)] <= 1, "attribute bit ", kAttributeNames[size_t(i)],
              " must be 0 or 1");
  for (int i = 0; i < kNumHair; ++i) hair += bits[size_t(i)];
  check_arg(hair == 1, "exactly one hair bit must be set, got ", hair);
}

std::string AttributeVector::str() const {
  std::string s;
  for (int i = 0; i < kNumAttributes; ++i) s += bits[size_t(i)] ? '1' : '0';
  return s;
}

AttributeVector AttributeVector::make(int hair, bool young, bool rec) {
  check_arg(hair >= 0 && hair < kNumHair, "hair index out of range: ", hair);
  AttributeVector v;
  v.bits[size_t(hair)] = 1;
  v.bits[3] = young ? 1 : 0;
  v.bits[4] = rec ? 1 : 0;
  return v;
}

Tensor replicate_labels(const AttributeVector& attrs, int height, int width) {
  check_arg(height > 0 && width > 0, "replicate_labels: size must be positive");
  Tensor planes(Shape(1, kNumAttributes, height, width));
  for (int i = 0; i < kNumAttributes; ++i) {
    const float v = 2.0f * float(attrs[i]) - 1.0f;
    float* p = planes.data() + std::int64_t(i) * height * width;
    for (std::int64_t j = 0; j < std::int64_t(height) * width; ++j) p[j] = v;
  }
  return planes;
}

namespace {

Tensor label_planes_batch(const std::vector<AttributeVector>& attrs, int h, int w) {
  Tensor planes(Shape(int(attrs.size()), kNumAttributes, h, w));
  const std::int64_t plane = std::int64_t(h) * w;
  for (size_t n = 0; n < attrs.size(); ++n) {
    float* base = planes.sample(int(n));
    for (int i = 0; i < kNumAttributes; ++i) {
      const float v = 2.0f * float(attrs[n][i]) - 1.0f;
      for (std::int64_t j = 0; j < plane; ++j) base[i * plane + j] = v;
    }
  }
  return planes;
}

}  // namespace

ConditionedInput concat_condition(const Tensor& image,
                                  const std::vector<AttributeVector>& attrs) {
  const Shape& s = image.shape();
  check_arg(int(attrs.size()) == s.n, "concat_condition: batch has ", s.n,
            " images but ", attrs.size(), " attribute vectors");
  ConditionedInput out;
  out.source_attrs = attrs;
  out.tensor = Tensor(Shape(s.n, s.c + kNumAttributes, s.h, s.w));
  Tensor planes = label_planes_batch(attrs, s.h, s.w);
  const std::int64_t img_block = std::int64_t(s.c) * s.h * s.w;
  const std::int64_t lbl_block = std::int64_t(kNumAttributes) * s.h * s.w;
  for (int n = 0; n < s.n; ++n) {
    std::copy(image.sample(n), image.sample(n) + img_block, out.tensor.sample(n));
    std::copy(planes.sample(n), planes.sample(n) + lbl_block,
              out.tensor.sample(n) + img_block);
  }
  return out;
}

int concat_condition_node(FTape& tape, int image,
                          const std::vector<AttributeVector>& attrs) {
  const Shape& s = tape.val(image).shape();
  check_arg(int(attrs.size()) == s.n, "concat_condition: batch has ", s.n,
            " images but ", attrs.size(), " attribute vectors");
  int planes = tape.leaf(label_planes_batch(attrs, s.h, s.w));
  return tape.concat_c(image, planes);
}

AttributeVector sample_target_attrs(const AttributeVector& original, std::uint64_t rng_seed) {
  original.validate();
  const int orig_hair = original.hair_index();
  const int orig_young = original[3];
  // enumerate the hair x young lattice minus the original combination
  std::vector<std::pair<int, int>> candidates;
  for (int hair = 0; hair < kNumHair; ++hair)
    for (int young = 0; young <= 1; ++young)
      if (hair != orig_hair || young != orig_young) candidates.emplace_back(hair, young);
  Rng rng(rng_seed);
  const auto& pick = candidates[size_t(rng.uniform_int(0, int(candidates.size()) - 1))];
  return AttributeVector::make(pick.first, pick.second != 0, /*rec=*/false);
}

}  // namespace s2p
