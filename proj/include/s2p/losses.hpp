#pragma once

#include <vector>

#include "s2p/attributes.hpp"
#include "s2p/tape.hpp"

namespace s2p {

// Lagrangian coefficients of the combined objective plus the contrastive
// margin and pixel-norm epsilon. The wiring is:
//   total_G = adv_G + l1*rec + l2*contrastive(cycle pairs)
//           + l3*(content + style) + l4*quality + l5*cls_fake
//           + l6*contrastive(translated pairs)
//   total_D = adv_D + l5*cls_real
struct LossWeights {
  double lambda1 = 10.0;  // cycle reconstruction
  double lambda2 = 1.0;   // contrastive identity, cycle pairs
  double lambda3 = 1.0;   // style transfer (content + style)
  double lambda4 = 1.0;   // quality-guided feature matching
  double lambda5 = 1.0;   // attribute classification
  double lambda6 = 1.0;   // contrastive identity, translated pairs
  double margin_m = 1.0;
  double pixelnorm_eps = 1e-8;

  void validate() const {
    check_arg(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && lambda4 >= 0 &&
                  lambda5 >= 0 && lambda6 >= 0,
              "loss weights must be non-negative");
    check_arg(margin_m > 0, "contrastive margin must be positive");
    check_arg(pixelnorm_eps > 0, "pixelnorm_eps must be positive");
  }
};

// --- adversarial (cross-entropy GAN, scores are pre-sigmoid) --------------
// D maximizes log D(real) + log(1 - D(fake)); G uses the non-saturating
// -log D(fake). Lists carry one score node per discriminator scale.

template <typename T>
int adversarial_loss_d(Tape<T>& t, const std::vector<int>& real_scores,
                       const std::vector<int>& fake_scores) {
  check_arg(!real_scores.empty() && real_scores.size() == fake_scores.size(),
            "adversarial_loss_d: score lists must be non-empty and equal length");
  int total = -1;
  for (size_t i = 0; i < real_scores.size(); ++i) {
    int term = t.add(t.mean_all(t.softplus(t.scale(real_scores[i], -1.0))),
                     t.mean_all(t.softplus(fake_scores[i])));
    total = total < 0 ? term : t.add(total, term);
  }
  return total;
}

template <typename T>
int adversarial_loss_g(Tape<T>& t, const std::vector<int>& fake_scores) {
  check_arg(!fake_scores.empty(), "adversarial_loss_g: empty score list");
  int total = -1;
  for (int s : fake_scores) {
    int term = t.mean_all(t.softplus(t.scale(s, -1.0)));
    total = total < 0 ? term : t.add(total, term);
  }
  return total;
}

// --- quality-guided feature matching ---------------------------------------
// Mean over taps of the mean squared difference between the quality encoder's
// features on real inputs and the generator encoder's features on fakes.
template <typename T>
int quality_feature_loss(Tape<T>& t, const std::vector<int>& taps_real,
                         const std::vector<int>& taps_fake) {
  check_arg(!taps_real.empty() && taps_real.size() == taps_fake.size(),
            "quality_feature_loss: tap lists must be non-empty and equal length");
  int total = -1;
  for (size_t i = 0; i < taps_real.size(); ++i) {
    check_arg(t.val(taps_real[i]).shape() == t.val(taps_fake[i]).shape(),
              "quality_feature_loss: tap ", i, " shape mismatch");
    int d = t.sub(taps_real[i], taps_fake[i]);
    int term = t.mean_all(t.mul(d, d));
    total = total < 0 ? term : t.add(total, term);
  }
  return t.scale(total, 1.0 / double(taps_real.size()));
}

// --- contrastive identity ---------------------------------------------------
// Per pair: (1-Y) * D^2/2 + Y * max(0, m - D)^2 / 2 with D the Euclidean
// distance between embeddings; batch value is the mean over pairs.
template <typename T>
int contrastive_loss(Tape<T>& t, int emb_a, int emb_b, const std::vector<int>& labels,
                     double margin) {
  const Shape& sa = t.val(emb_a).shape();
  check_arg(sa == t.val(emb_b).shape(), "contrastive_loss: embedding shape mismatch");
  check_arg(sa.h == 1 && sa.w == 1, "contrastive_loss: expects (N,D,1,1) embeddings");
  check_arg(int(labels.size()) == sa.n, "contrastive_loss: need one label per pair");
  check_arg(margin > 0, "contrastive_loss: margin must be positive");

  TensorT<T> genuine(Shape(sa.n, 1, 1, 1)), impostor(Shape(sa.n, 1, 1, 1));
  for (int i = 0; i < sa.n; ++i) {
    check_arg(labels[size_t(i)] == 0 || labels[size_t(i)] == 1,
              "contrastive_loss: labels must be 0 or 1");
    genuine[i] = labels[size_t(i)] == 0 ? T(1) : T(0);
    impostor[i] = T(1) - genuine[i];
  }
  int diff = t.sub(emb_a, emb_b);
  int d2 = t.sum_c(t.mul(diff, diff));                       // (N,1,1,1)
  int dist = t.sqrt_op(d2);
  int hinge = t.relu(t.add_scalar(t.scale(dist, -1.0), margin));
  int imp = t.scale(t.mul(hinge, hinge), 0.5);
  int gen = t.scale(d2, 0.5);
  int per_pair = t.add(t.mul(gen, t.leaf(std::move(genuine))),
                       t.mul(imp, t.leaf(std::move(impostor))));
  return t.scale(t.sum_all(per_pair), 1.0 / double(sa.n));
}

// --- perceptual content / style ---------------------------------------------
// Content: per layer, L1 normalized by the layer size, summed over layers.
template <typename T>
int content_loss(Tape<T>& t, const std::vector<int>& feats_a,
                 const std::vector<int>& feats_b) {
  check_arg(!feats_a.empty() && feats_a.size() == feats_b.size(),
            "content_loss: feature lists must be non-empty and equal length");
  int total = -1;
  for (size_t i = 0; i < feats_a.size(); ++i) {
    check_arg(t.val(feats_a[i]).shape() == t.val(feats_b[i]).shape(),
              "content_loss: layer ", i, " shape mismatch");
    int term = t.mean_all(t.abs_op(t.sub(feats_a[i], feats_b[i])));
    total = total < 0 ? term : t.add(total, term);
  }
  return total;
}

// Style: L1 between gram matrices, summed over layers.
template <typename T>
int style_loss(Tape<T>& t, const std::vector<int>& feats_a,
               const std::vector<int>& feats_b) {
  check_arg(!feats_a.empty() && feats_a.size() == feats_b.size(),
            "style_loss: feature lists must be non-empty and equal length");
  int total = -1;
  for (size_t i = 0; i < feats_a.size(); ++i) {
    check_arg(t.val(feats_a[i]).shape() == t.val(feats_b[i]).shape(),
              "style_loss: layer ", i, " shape mismatch");
    int term = t.mean_all(t.abs_op(t.sub(t.gram(feats_a[i]), t.gram(feats_b[i]))));
    total = total < 0 ? term : t.add(total, term);
  }
  return total;
}

// --- attribute classification ------------------------------------------------
// Hair group scored by 3-way cross-entropy, young and rec by independent
// binary cross-entropy on logits; terms are batch means, summed.
template <typename T>
int cls_loss(Tape<T>& t, int attr_logits, const std::vector<AttributeVector>& targets) {
  const Shape& s = t.val(attr_logits).shape();
  check_arg(s.c == kNumAttributes && s.h == 1 && s.w == 1,
            "cls_loss: logits must be (N,5,1,1), got ", s.str());
  check_arg(int(targets.size()) == s.n, "cls_loss: need one target per sample");
  for (const auto& a : targets) a.validate();
  const int n = s.n;

  TensorT<T> onehot(Shape(n, kNumHair, 1, 1));
  TensorT<T> young(Shape(n, 1, 1, 1)), rec(Shape(n, 1, 1, 1));
  for (int i = 0; i < n; ++i) {
    onehot.at(i, targets[size_t(i)].hair_index(), 0, 0) = T(1);
    young[i] = T(targets[size_t(i)][3]);
    rec[i] = T(targets[size_t(i)][4]);
  }
  int hair = t.scale(
      t.sum_all(t.mul(t.log_softmax_c(t.slice_c(attr_logits, 0, kNumHair)),
                      t.leaf(std::move(onehot)))),
      -1.0 / double(n));
  auto bce = [&](int c, TensorT<T> target) {
    int l = t.slice_c(attr_logits, c, c + 1);
    return t.mean_all(t.sub(t.softplus(l), t.mul(l, t.leaf(std::move(target)))));
  };
  return t.add(hair, t.add(bce(3, std::move(young)), bce(4, std::move(rec))));
}

// Aliases matching the two duties: D is optimized on real images against
// ground-truth attributes, G on fakes against the requested targets.
template <typename T>
int cls_loss_real(Tape<T>& t, int logits_on_real, const std::vector<AttributeVector>& a) {
  return cls_loss(t, logits_on_real, a);
}
template <typename T>
int cls_loss_fake(Tape<T>& t, int logits_on_fake, const std::vector<AttributeVector>& a) {
  return cls_loss(t, logits_on_fake, a);
}

// --- cycle reconstruction ----------------------------------------------------
// Perceptual L1 over extractor taps of a real image and its cycled version;
// structurally identical to content_loss over the same tap lists.
template <typename T>
int reconstruction_loss(Tape<T>& t, const std::vector<int>& taps_real,
                        const std::vector<int>& taps_cycled) {
  return content_loss(t, taps_real, taps_cycled);
}

// --- totals -------------------------------------------------------------------

struct GeneratorLossTerms {
  int adv = -1;        // both domains summed
  int rec = -1;        // lambda1
  int cont = -1;       // lambda2, contrastive on cycle pairs
  int content = -1;    // lambda3 (with style)
  int style = -1;      // lambda3 (with content)
  int quality = -1;    // lambda4
  int cls_fake = -1;   // lambda5
  int id_fake = -1;    // lambda6, contrastive on translated pairs
};

struct DiscriminatorLossTerms {
  int adv = -1;
  int cls_real = -1;  // lambda5
};

template <typename T>
int total_loss_g(Tape<T>& t, const GeneratorLossTerms& terms, const LossWeights& w) {
  w.validate();
  check_arg(terms.adv >= 0, "total_loss_g: adversarial term is required");
  int total = terms.adv;
  auto acc = [&](int term, double lambda) {
    if (term >= 0 && lambda != 0.0) total = t.add(total, t.scale(term, lambda));
  };
  acc(terms.rec, w.lambda1);
  acc(terms.cont, w.lambda2);
  acc(terms.content, w.lambda3);
  acc(terms.style, w.lambda3);
  acc(terms.quality, w.lambda4);
  acc(terms.cls_fake, w.lambda5);
  acc(terms.id_fake, w.lambda6);
  return total;
}

template <typename T>
int total_loss_d(Tape<T>& t, const DiscriminatorLossTerms& terms, const LossWeights& w) {
  w.validate();
  check_arg(terms.adv >= 0, "total_loss_d: adversarial term is required");
  int total = terms.adv;
  if (terms.cls_real >= 0 && w.lambda5 != 0.0)
    total = t.add(total, t.scale(terms.cls_real, w.lambda5));
  return total;
}

}  // namespace s2p
