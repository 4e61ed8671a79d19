#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "s2p/tape.hpp"
#include "s2p/tensor.hpp"

namespace s2p {

// Frozen attribute vocabulary. The order below is the contract everywhere:
// manifest CSV columns, label planes, classifier logits, checkpoint metadata.
inline constexpr int kNumAttributes = 5;
inline constexpr int kNumHair = 3;
extern const std::array<std::string, kNumAttributes> kAttributeNames;

// Binary attribute labels [black_hair, blond_hair, brown_hair, young, rec].
struct AttributeVector {
  std::array<std::uint8_t, kNumAttributes> bits{};

  std::uint8_t& operator[](int i) { return bits[size_t(i)]; }
  std::uint8_t operator[](int i) const { return bits[size_t(i)]; }

  int hair_index() const;           // argmax over the hair group; -1 if none set
  bool operator==(const AttributeVector& o) const { return bits == o.bits; }

  // Ground-truth validity: every bit binary, exactly one hair bit set.
  void validate() const;
  std::string str() const;

  static AttributeVector make(int hair, bool young, bool rec);
};

// Spatially replicate the label bits into constant image planes, bit b
// mapped to 2b - 1 so labels live on the same scale as image values.
// Returns shape (1, 5, H, W).
Tensor replicate_labels(const AttributeVector& attrs, int height, int width);

// Image batch + per-sample label planes, channel count = image channels + 5.
struct ConditionedInput {
  Tensor tensor;
  std::vector<AttributeVector> source_attrs;
};

ConditionedInput concat_condition(const Tensor& image,
                                  const std::vector<AttributeVector>& attrs);

// Tape-side conditioning for training: appends constant label planes.
int concat_condition_node(FTape& tape, int image,
                          const std::vector<AttributeVector>& attrs);

// Draw target attributes for a translation pass: uniformly among the valid
// (hair, young) combinations distinct from the original's. The rec bit of the
// result is 0 (translation pass). Deterministic in the seed.
AttributeVector sample_target_attrs(const AttributeVector& original, std::uint64_t rng_seed);

}  // namespace s2p
