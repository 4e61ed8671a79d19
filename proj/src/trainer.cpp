#include "s2p/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "s2p/checkpoint.hpp"
#include "s2p/image_io.hpp"
#include "s2p/losses.hpp"

namespace fs = std::filesystem;

namespace s2p {

const char* const kTrainLogCsv = "train_log.csv";
const char* const kTrainDiagCsv = "train_diag.csv";
const char* const kTrainLogHeader =
    "step,adv_g,adv_d,rec,cont,style,content,quality,cls_r,cls_f,total_g,total_d";

namespace {

constexpr std::uint64_t kPermTag = 0x7065726dULL;
constexpr std::uint64_t kStepTag = 0x73746570ULL;
constexpr std::uint64_t kProbeTag = 0x70726f6265ULL;
constexpr std::uint64_t kPretrainTag = 0x707265ULL;

constexpr const char* kOptGFile = "opt_g.bin";
constexpr const char* kOptDFile = "opt_d.bin";
constexpr const char* kMetaFile = "checkpoint.json";
constexpr const char* kConfigFile = "config.cfg";

std::string net_file(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / (name + ".bin")).string();
}

BundleConfig bundle_config(const RunConfig& cfg, int id_classes) {
  BundleConfig bc;
  bc.net.resolution = cfg.resolution;
  bc.net.base_res = cfg.base_res;
  bc.net.base_width = cfg.base_width;
  bc.net.max_width = cfg.max_width;
  bc.net.pixelnorm_eps = float(cfg.weights.pixelnorm_eps);
  bc.d_scales = cfg.d_scales;
  bc.id_embed_dim = cfg.id_embed_dim;
  bc.id_classes = id_classes;
  return bc;
}

std::vector<AttributeVector> with_rec(std::vector<AttributeVector> attrs, bool rec) {
  for (auto& a : attrs) a[4] = rec ? 1 : 0;
  return attrs;
}

// softmax cross-entropy against integer class labels, batch mean
int softmax_ce(FTape& t, int logits, const std::vector<int>& labels) {
  const Shape& s = t.val(logits).shape();
  check_arg(int(labels.size()) == s.n, "softmax_ce: label count mismatch");
  Tensor onehot(Shape(s.n, s.c, 1, 1));
  for (int i = 0; i < s.n; ++i) {
    check_arg(labels[size_t(i)] >= 0 && labels[size_t(i)] < s.c, "softmax_ce: bad label");
    onehot.at(i, labels[size_t(i)], 0, 0) = 1.0f;
  }
  return t.scale(t.sum_all(t.mul(t.log_softmax_c(logits), t.leaf(std::move(onehot)))),
                 -1.0 / double(s.n));
}

struct IdentityPairs {
  int emb_a = -1;  // real-photo embeddings, one row per pair
  int emb_b = -1;  // generated-photo embeddings
  std::vector<int> labels;
};

// genuine pairs (i, i) plus an in-batch derangement of impostor pairs,
// dropping deranged pairs that happen to hit the same subject
IdentityPairs identity_pairs(FTape& t, int emb_real, int emb_gen,
                             const std::vector<int>& subjects, int shift) {
  const int n = t.val(emb_real).shape().n;
  IdentityPairs out;
  std::vector<int> imp_a, imp_b;
  for (int i = 0; i < n; ++i) {
    const int j = (i + shift) % n;
    if (subjects[size_t(i)] != subjects[size_t(j)]) {
      imp_a.push_back(i);
      imp_b.push_back(j);
    }
  }
  out.labels.assign(size_t(n), 0);
  if (imp_a.empty()) {
    out.emb_a = emb_real;
    out.emb_b = emb_gen;
    return out;
  }
  out.emb_a = t.concat_n(emb_real, t.select_rows(emb_real, imp_a));
  out.emb_b = t.concat_n(emb_gen, t.select_rows(emb_gen, imp_b));
  out.labels.resize(size_t(n) + imp_a.size(), 1);
  return out;
}

std::vector<int> pick_taps(const std::vector<int>& taps, const std::vector<int>& which) {
  std::vector<int> out;
  for (int i : which) {
    check_arg(i >= 1 && i <= int(taps.size()), "tap index ", i, " out of range 1..",
              taps.size());
    out.push_back(taps[size_t(i - 1)]);
  }
  return out;
}

double scalar(const FTape& t, int id) { return double(t.val(id)[0]); }

void check_finite(const StepLosses& l, long step_hint) {
  const std::pair<const char*, double> terms[] = {
      {"adv_g", l.adv_g},     {"adv_d", l.adv_d},   {"rec", l.rec},
      {"cont", l.cont},       {"style", l.style},   {"content", l.content},
      {"quality", l.quality}, {"cls_r", l.cls_r},   {"cls_f", l.cls_f},
      {"total_g", l.total_g}, {"total_d", l.total_d}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v))
      throw NumericError(cat("non-finite loss term ", name, " = ", v,
                             step_hint > 0 ? cat(" at step ", step_hint) : std::string()));
}

}  // namespace

// ---------------------------------------------------------------------------
// FadeSchedule
// ---------------------------------------------------------------------------

FadeSchedule FadeSchedule::parse(const std::string& text, long total_steps,
                                 double fade_fraction, int max_res, int base_res) {
  check_arg(!text.empty(), "empty fade schedule");
  check_arg(fade_fraction > 0 && fade_fraction <= 1, "fade_fraction must be in (0,1]");
  FadeSchedule s;
  std::stringstream ss(text);
  std::string item;
  long consumed = 0;
  while (std::getline(ss, item, ',')) {
    Stage st;
    const auto colon = item.find(':');
    st.resolution = std::stoi(item.substr(0, colon));
    st.steps = colon == std::string::npos ? -1 : std::stol(item.substr(colon + 1));
    check_arg(is_power_of_two(st.resolution), "fade stage resolution must be a power of two");
    check_arg(st.resolution >= base_res && st.resolution <= max_res,
              "fade stage resolution ", st.resolution, " outside [", base_res, ", ",
              max_res, "]");
    if (!s.stages_.empty())
      check_arg(st.resolution == s.stages_.back().resolution * 2,
                "resolution must double between stages, got ",
                s.stages_.back().resolution, " -> ", st.resolution);
    s.stages_.push_back(st);
    if (st.steps > 0) consumed += st.steps;
  }
  check_arg(s.stages_.back().resolution == max_res || s.stages_.size() == 1,
            "the final fade stage must reach the training resolution");
  // last stage absorbs the remainder
  Stage& last = s.stages_.back();
  if (last.steps < 0) last.steps = std::max<long>(1, total_steps - (consumed));
  for (size_t i = 0; i + 1 < s.stages_.size(); ++i)
    check_arg(s.stages_[i].steps > 0, "non-final fade stages need explicit step counts");
  for (size_t i = 0; i < s.stages_.size(); ++i) {
    const long ramp =
        i == 0 ? 0 : std::max<long>(1, long(fade_fraction * double(s.stages_[i].steps)));
    s.ramp_.push_back(ramp);
  }
  return s;
}

FadeInState FadeSchedule::state_at(long step) const {
  check_arg(step >= 1, "steps are 1-based");
  long begin = 0;
  for (size_t i = 0; i < stages_.size(); ++i) {
    const bool last = i + 1 == stages_.size();
    const long end = begin + stages_[i].steps;
    if (step <= end || last) {
      FadeInState f;
      f.resolution = stages_[i].resolution;
      const long in_stage = step - begin - 1;
      f.alpha = ramp_[i] == 0 ? 1.0f
                              : std::min(1.0f, float(double(in_stage) / double(ramp_[i])));
      return f;
    }
    begin = end;
  }
  return {stages_.back().resolution, 1.0f};
}

// ---------------------------------------------------------------------------
// ToyDataset
// ---------------------------------------------------------------------------

ToyDataset::ToyDataset(const DatasetManifest& manifest, int resolution)
    : resolution_(resolution) {
  manifest.validate();
  check_data(manifest.has_sketches(),
             "manifest has no sketch paths; run the prepare step first");
  std::vector<char> train_subject(size_t(manifest.num_subjects()), 0);
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    photos_.push_back(load_image(manifest.resolve(r.path), resolution, resolution));
    Tensor sk = load_image(manifest.resolve(r.sketch_path), resolution, resolution);
    check_data(sk.shape().c == 1, "sketch ", r.sketch_path, " is not single-channel");
    sketches_.push_back(std::move(sk));
    attrs_.push_back(r.attrs);
    subjects_.push_back(r.subject_id);
    if (r.split == "train") {
      train_.push_back(int(i));
      train_subject[size_t(r.subject_id)] = 1;
    } else {
      test_.push_back(int(i));
    }
  }
  for (char c : train_subject) num_train_subjects_ += c;
  check_data(!train_.empty(), "manifest has no training records");
}

Tensor avg_downsample(const Tensor& batch, int factor) {
  check_arg(factor >= 1 && is_power_of_two(factor), "downsample factor must be 2^k");
  Tensor cur = batch;
  while (factor > 1) {
    const Shape& s = cur.shape();
    Tensor next(Shape(s.n, s.c, s.h / 2, s.w / 2));
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h / 2; ++y)
          for (int x = 0; x < s.w / 2; ++x)
            next.at(n, c, y, x) =
                0.25f * (cur.at(n, c, 2 * y, 2 * x) + cur.at(n, c, 2 * y, 2 * x + 1) +
                         cur.at(n, c, 2 * y + 1, 2 * x) + cur.at(n, c, 2 * y + 1, 2 * x + 1));
    cur = std::move(next);
    factor /= 2;
  }
  return cur;
}

TrainBatch ToyDataset::batch_at(const std::vector<int>& indices, int res) const {
  check_arg(!indices.empty(), "empty batch");
  check_arg(res <= resolution_, "batch resolution above dataset resolution");
  const int b = int(indices.size());
  TrainBatch out;
  out.photos = Tensor(Shape(b, 3, res, res));
  out.sketches = Tensor(Shape(b, 1, res, res));
  const int factor = resolution_ / res;
  for (int i = 0; i < b; ++i) {
    const int idx = indices[size_t(i)];
    const Tensor ph = factor == 1 ? photos_[size_t(idx)]
                                  : avg_downsample(photos_[size_t(idx)], factor);
    const Tensor sk = factor == 1 ? sketches_[size_t(idx)]
                                  : avg_downsample(sketches_[size_t(idx)], factor);
    std::copy(ph.data(), ph.data() + ph.size(), out.photos.sample(i));
    std::copy(sk.data(), sk.data() + sk.size(), out.sketches.sample(i));
    out.attrs.push_back(attrs_[size_t(idx)]);
    out.subjects.push_back(subjects_[size_t(idx)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// train_step
// ---------------------------------------------------------------------------

StepLosses train_step(NetworkBundle& bundle, AdamOptimizer& opt_d, AdamOptimizer& opt_g,
                      const TrainBatch& batch, const RunConfig& cfg,
                      const FadeInState& fade, double lr, std::uint64_t step_seed) {
  const int B = batch.photos.shape().n;
  check_arg(B >= 2, "train_step: batch size must be >= 2");
  check_arg(batch.sketches.shape().n == B && int(batch.attrs.size()) == B &&
                int(batch.subjects.size()) == B,
            "train_step: inconsistent batch");

  Rng step_rng(step_seed);
  std::vector<AttributeVector> targets;
  for (int i = 0; i < B; ++i)
    targets.push_back(
        sample_target_attrs(batch.attrs[size_t(i)], derive_seed(step_seed, 0x74ULL, i)));
  const int shift = B > 1 ? step_rng.uniform_int(1, B - 1) : 0;

  FTape t;
  const int photos = t.leaf(batch.photos);
  const int sketches = t.leaf(batch.sketches);
  const auto attrs_rec1 = with_rec(batch.attrs, true);
  const auto attrs_rec0 = with_rec(batch.attrs, false);

  // translation passes (graphs reused by both phases)
  GeneratorOutput fake_photo = bundle.gx->forward(
      t, concat_condition_node(t, sketches, targets), fade, /*want_taps=*/true);
  GeneratorOutput fake_sketch =
      bundle.gy->forward(t, concat_condition_node(t, photos, attrs_rec0), fade);

  auto d_scores = [&](const std::vector<std::shared_ptr<Discriminator>>& ds, int img,
                      bool want_attr, int* attr_out) {
    std::vector<int> scores;
    int scaled = img;
    for (size_t i = 0; i < ds.size(); ++i) {
      if (i > 0) scaled = t.avg_pool2(scaled);
      FadeInState df = fade;
      df.resolution = fade.resolution >> int(i);
      DiscriminatorOutput o = ds[i]->forward(t, scaled, df);
      scores.push_back(o.score);
      if (want_attr && i == 0 && attr_out) *attr_out = o.attr_logits;
    }
    return scores;
  };

  StepLosses L;

  // --- discriminator phase ---------------------------------------------
  const int fake_photo_d = t.detach(fake_photo.image);
  const int fake_sketch_d = t.detach(fake_sketch.image);
  for (int k = 0; k < cfg.d_steps_per_g; ++k) {
    int attr_real = -1;
    std::vector<int> dx_real = d_scores(bundle.dx, photos, true, &attr_real);
    std::vector<int> dx_fake = d_scores(bundle.dx, fake_photo_d, false, nullptr);
    std::vector<int> dy_real = d_scores(bundle.dy, sketches, false, nullptr);
    std::vector<int> dy_fake = d_scores(bundle.dy, fake_sketch_d, false, nullptr);

    DiscriminatorLossTerms dt;
    dt.adv = t.add(adversarial_loss_d(t, dx_real, dx_fake),
                   adversarial_loss_d(t, dy_real, dy_fake));
    dt.cls_real = cls_loss_real(t, attr_real, attrs_rec1);
    const int total_d = total_loss_d(t, dt, cfg.weights);

    L.adv_d = scalar(t, dt.adv);
    L.cls_r = scalar(t, dt.cls_real);
    L.total_d = scalar(t, total_d);

    opt_d.zero_grad();
    t.backward(total_d);
    opt_d.step(lr);
  }

  // --- generator phase ---------------------------------------------------
  // cycle passes close the loop with the source's own attributes, rec = 1
  GeneratorOutput cycle_sketch =
      bundle.gy->forward(t, concat_condition_node(t, fake_photo.image, with_rec(targets, true)),
                         fade);
  GeneratorOutput cycle_photo = bundle.gx->forward(
      t, concat_condition_node(t, fake_sketch.image, attrs_rec1), fade);

  int attr_fake = -1;
  std::vector<int> gx_scores = d_scores(bundle.dx, fake_photo.image, true, &attr_fake);
  std::vector<int> gy_scores = d_scores(bundle.dy, fake_sketch.image, false, nullptr);

  GeneratorLossTerms gt;
  gt.adv = t.add(adversarial_loss_g(t, gx_scores), adversarial_loss_g(t, gy_scores));
  gt.cls_fake = cls_loss_fake(t, attr_fake, targets);

  // perceptual features at the extractor's native resolution
  const int pres = bundle.perceptual->input_res();
  auto p_taps = [&](int img) {
    return bundle.perceptual->forward_taps(t, upsample_to(t, to_three_channels(t, img), pres));
  };
  const auto taps_photo = p_taps(photos);
  const auto taps_sketch = p_taps(sketches);
  const auto taps_fake_photo = p_taps(fake_photo.image);
  const auto taps_fake_sketch = p_taps(fake_sketch.image);
  const auto taps_cycle_photo = p_taps(cycle_photo.image);
  const auto taps_cycle_sketch = p_taps(cycle_sketch.image);

  gt.rec = t.add(reconstruction_loss(t, pick_taps(taps_photo, cfg.rec_taps),
                                     pick_taps(taps_cycle_photo, cfg.rec_taps)),
                 reconstruction_loss(t, pick_taps(taps_sketch, cfg.rec_taps),
                                     pick_taps(taps_cycle_sketch, cfg.rec_taps)));
  gt.content = t.add(content_loss(t, pick_taps(taps_photo, cfg.content_taps),
                                  pick_taps(taps_fake_photo, cfg.content_taps)),
                     content_loss(t, pick_taps(taps_sketch, cfg.content_taps),
                                  pick_taps(taps_fake_sketch, cfg.content_taps)));
  gt.style = t.add(style_loss(t, pick_taps(taps_photo, cfg.style_taps),
                              pick_taps(taps_fake_photo, cfg.style_taps)),
                   style_loss(t, pick_taps(taps_sketch, cfg.style_taps),
                              pick_taps(taps_fake_sketch, cfg.style_taps)));

  // quality guidance: E_x on the real photo with the same label planes as
  // the translation pass, matched against G_x's encoder taps on that pass
  const auto ex_taps =
      bundle.ex->forward_taps(t, concat_condition_node(t, photos, targets), fade);
  gt.quality = quality_feature_loss(t, ex_taps, fake_photo.encoder_taps);

  // identity terms under the frozen embedder
  auto embed64 = [&](int img) {
    return bundle.identity->embed(t, upsample_to(t, img, pres));
  };
  const int emb_real = embed64(photos);
  const int emb_fake = embed64(fake_photo.image);
  const int emb_cycle = embed64(cycle_photo.image);
  {
    IdentityPairs pc = identity_pairs(t, emb_real, emb_cycle, batch.subjects, shift);
    gt.cont = contrastive_loss(t, pc.emb_a, pc.emb_b, pc.labels, cfg.weights.margin_m);
    IdentityPairs pf = identity_pairs(t, emb_real, emb_fake, batch.subjects, shift);
    gt.id_fake = contrastive_loss(t, pf.emb_a, pf.emb_b, pf.labels, cfg.weights.margin_m);
  }

  const int total_g = total_loss_g(t, gt, cfg.weights);

  L.adv_g = scalar(t, gt.adv);
  L.rec = scalar(t, gt.rec);
  L.cont = scalar(t, gt.cont);
  L.content = scalar(t, gt.content);
  L.style = scalar(t, gt.style);
  L.quality = scalar(t, gt.quality);
  L.cls_f = scalar(t, gt.cls_fake);
  L.total_g = scalar(t, total_g);

  check_finite(L, 0);

  opt_g.zero_grad();
  t.backward(total_g);
  opt_g.step(lr);
  return L;
}

// ---------------------------------------------------------------------------
// pretraining
// ---------------------------------------------------------------------------

namespace {

std::vector<int> sample_indices(const std::vector<int>& pool, int n, Rng& rng) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    out.push_back(pool[size_t(rng.uniform_int(0, int(pool.size()) - 1))]);
  return out;
}

void train_attr_classifier(PerceptualNet& net, const ToyDataset& data, const RunConfig& cfg,
                           std::uint64_t seed) {
  AdamOptimizer opt(net.params(), 0.9, 0.999);
  const int b = std::min<int>(cfg.pretrain_batch, int(data.train_indices().size()));
  for (int s = 1; s <= cfg.pretrain_steps; ++s) {
    Rng rng(derive_seed(seed, kPretrainTag, std::uint64_t(s)));
    const auto idx = sample_indices(data.train_indices(), b, rng);
    const TrainBatch batch = data.batch_at(idx, net.input_res());
    FTape t;
    const int logits = net.logits(t, t.leaf(batch.photos));
    const int loss = cls_loss(t, logits, batch.attrs);
    opt.zero_grad();
    t.backward(loss);
    opt.step(cfg.pretrain_lr);
  }
}

void train_identity(IdentityNet& net, const ToyDataset& data, const RunConfig& cfg,
                    std::uint64_t seed) {
  // dense class ids over the train-split subjects
  std::vector<int> class_of(size_t(1), -1);
  {
    int mx = 0;
    for (int i : data.train_indices()) mx = std::max(mx, data.subject(i));
    class_of.assign(size_t(mx + 1), -1);
    int next = 0;
    for (int i : data.train_indices())
      if (class_of[size_t(data.subject(i))] < 0) class_of[size_t(data.subject(i))] = next++;
    check_arg(next == net.num_classes(), "identity head size mismatch: ", next, " vs ",
              net.num_classes());
  }
  AdamOptimizer opt(net.params(), 0.9, 0.999);
  const int b = std::min<int>(cfg.pretrain_batch, int(data.train_indices().size()));
  for (int s = 1; s <= cfg.pretrain_steps; ++s) {
    Rng rng(derive_seed(seed, kPretrainTag, std::uint64_t(s)));
    const auto idx = sample_indices(data.train_indices(), b, rng);
    const TrainBatch batch = data.batch_at(idx, data.resolution());
    std::vector<int> labels;
    for (int i : idx) labels.push_back(class_of[size_t(data.subject(i))]);
    FTape t;
    const int logits = net.class_logits(t, t.leaf(batch.photos));
    const int loss = softmax_ce(t, logits, labels);
    opt.zero_grad();
    t.backward(loss);
    opt.step(cfg.pretrain_lr);
  }
}

}  // namespace

PerceptualNet make_probe(const RunConfig& cfg) {
  return PerceptualNet("probe", derive_seed(cfg.seed, kProbeTag), cfg.resolution,
                       {12, 24, 48, 96});
}

void pretrain_frozen(NetworkBundle& bundle, PerceptualNet& probe, const ToyDataset& data,
                     const RunConfig& cfg) {
  train_attr_classifier(*bundle.perceptual, data, cfg, derive_seed(cfg.seed, 0x70ULL));
  train_attr_classifier(probe, data, cfg, derive_seed(cfg.seed, 0x71ULL));
  train_identity(*bundle.identity, data, cfg, derive_seed(cfg.seed, 0x72ULL));
  bundle.perceptual->freeze();
  bundle.identity->freeze();
  probe.freeze();
}

// ---------------------------------------------------------------------------
// fit / checkpointing
// ---------------------------------------------------------------------------

long steps_per_epoch(const RunConfig& cfg, int train_count) {
  return std::max<long>(1, train_count / cfg.batch_size);
}

long total_steps(const RunConfig& cfg, int train_count) {
  return (long(cfg.epochs_flat) + cfg.epochs_decay) * steps_per_epoch(cfg, train_count);
}

namespace {

void save_checkpoint(const std::string& dir, const NetworkBundle& bundle,
                     const PerceptualNet& probe, const AdamOptimizer& opt_g,
                     const AdamOptimizer& opt_d, const RunConfig& cfg, long step,
                     const FadeInState& fade) {
  save_params(net_file(dir, "gx"), bundle.gx->params());
  save_params(net_file(dir, "gy"), bundle.gy->params());
  for (size_t i = 0; i < bundle.dx.size(); ++i)
    save_params(net_file(dir, cat("dx", i)), bundle.dx[i]->params());
  for (size_t i = 0; i < bundle.dy.size(); ++i)
    save_params(net_file(dir, cat("dy", i)), bundle.dy[i]->params());
  save_params(net_file(dir, "ex"), bundle.ex->own_params());
  save_params(net_file(dir, "perceptual"), bundle.perceptual->params());
  save_params(net_file(dir, "identity"), bundle.identity->params());
  save_params(net_file(dir, "probe"), probe.params());
  opt_g.save_state((fs::path(dir) / kOptGFile).string());
  opt_d.save_state((fs::path(dir) / kOptDFile).string());

  CheckpointMeta meta;
  meta.step = step;
  meta.resolution = fade.resolution;
  meta.alpha = fade.alpha;
  meta.id_classes = bundle.cfg.id_classes;
  meta.config_text = cfg.serialize();
  meta.vocabulary.assign(kAttributeNames.begin(), kAttributeNames.end());
  meta.save((fs::path(dir) / kMetaFile).string());
  cfg.save((fs::path(dir) / kConfigFile).string());
}

void load_bundle_params(const std::string& dir, NetworkBundle& bundle, PerceptualNet* probe) {
  load_params(net_file(dir, "gx"), bundle.gx->params());
  load_params(net_file(dir, "gy"), bundle.gy->params());
  for (size_t i = 0; i < bundle.dx.size(); ++i)
    load_params(net_file(dir, cat("dx", i)), bundle.dx[i]->params());
  for (size_t i = 0; i < bundle.dy.size(); ++i)
    load_params(net_file(dir, cat("dy", i)), bundle.dy[i]->params());
  load_params(net_file(dir, "ex"), bundle.ex->own_params());
  load_params(net_file(dir, "perceptual"), bundle.perceptual->params());
  load_params(net_file(dir, "identity"), bundle.identity->params());
  if (probe) load_params(net_file(dir, "probe"), probe->params());
}

// drop log rows beyond `step` so a resumed run appends each row exactly once
void truncate_csv(const std::string& path, long step) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      keep.push_back(line);
      first = false;
      continue;
    }
    const long row = std::strtol(line.c_str(), nullptr, 10);
    if (row <= step) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

std::string losses_row(long step, const StepLosses& l) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", step, l.adv_g,
                l.adv_d, l.rec, l.cont, l.style, l.content, l.quality, l.cls_r, l.cls_f,
                l.total_g, l.total_d);
  return buf;
}

}  // namespace

FitResult fit(const DatasetManifest& manifest, const RunConfig& cfg_in, bool resume,
              long run_until_step) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  check_arg(!cfg.out_dir.empty(), "fit: out_dir must be set");
  fs::create_directories(cfg.out_dir);

  ToyDataset data(manifest, cfg.resolution);
  const long spe = steps_per_epoch(cfg, int(data.train_indices().size()));
  const long total = total_steps(cfg, int(data.train_indices().size()));
  FadeSchedule sched = FadeSchedule::parse(cfg.fade_schedule, total, cfg.fade_fraction,
                                           cfg.resolution, cfg.base_res);

  NetworkBundle bundle =
      NetworkBundle::create(bundle_config(cfg, data.num_train_subjects()), cfg.seed);
  PerceptualNet probe = make_probe(cfg);
  AdamOptimizer opt_g(bundle.generator_params(), cfg.adam_beta1, cfg.adam_beta2);
  AdamOptimizer opt_d(bundle.discriminator_params(), cfg.adam_beta1, cfg.adam_beta2);
  opt_g.set_clip(cfg.clip_norm, cfg.clip_enabled);
  opt_d.set_clip(cfg.clip_norm, cfg.clip_enabled);

  const std::string log_path = (fs::path(cfg.out_dir) / kTrainLogCsv).string();
  const std::string diag_path = (fs::path(cfg.out_dir) / kTrainDiagCsv).string();

  long start_step = 0;
  if (resume) {
    const CheckpointMeta meta = CheckpointMeta::load((fs::path(cfg.out_dir) / kMetaFile).string());
    const RunConfig ck = RunConfig::parse_text(meta.config_text);
    cfg.check_resume_compatible(ck);
    check_data(meta.id_classes == bundle.cfg.id_classes,
               "resume config mismatch in field 'id_classes': checkpoint has ",
               meta.id_classes, ", dataset implies ", bundle.cfg.id_classes);
    load_bundle_params(cfg.out_dir, bundle, &probe);
    bundle.perceptual->freeze();
    bundle.identity->freeze();
    probe.freeze();
    opt_g.load_state((fs::path(cfg.out_dir) / kOptGFile).string());
    opt_d.load_state((fs::path(cfg.out_dir) / kOptDFile).string());
    start_step = meta.step;
    truncate_csv(log_path, start_step);
    truncate_csv(diag_path, start_step);
  } else {
    pretrain_frozen(bundle, probe, data, cfg);
    std::ofstream log(log_path, std::ios::trunc);
    log << kTrainLogHeader << '\n';
    std::ofstream diag(diag_path, std::ios::trunc);
    diag << "step,epoch,resolution,alpha,lr,wall_ms\n";
  }

  std::ofstream log(log_path, std::ios::app);
  std::ofstream diag(diag_path, std::ios::app);
  if (!log || !diag) throw IoError(cat("cannot open training logs under ", cfg.out_dir));

  const long end_step =
      run_until_step > 0 ? std::min(run_until_step, total) : total;
  long step = start_step;
  FadeInState fade = sched.state_at(std::max<long>(1, step > 0 ? step : 1));
  for (step = start_step + 1; step <= end_step; ++step) {
    fade = sched.state_at(step);
    const int epoch = int((step - 1) / spe);
    const double lr = lr_schedule(epoch, cfg);

    // stateless per-epoch permutation, resume-safe
    std::vector<int> perm = data.train_indices();
    Rng perm_rng(derive_seed(cfg.seed, kPermTag, std::uint64_t(epoch)));
    perm_rng.shuffle(perm);
    const long in_epoch = (step - 1) % spe;
    std::vector<int> idx(perm.begin() + in_epoch * cfg.batch_size,
                         perm.begin() + std::min<long>(long(perm.size()),
                                                       (in_epoch + 1) * cfg.batch_size));

    const auto t0 = std::chrono::steady_clock::now();
    StepLosses losses;
    try {
      losses = train_step(bundle, opt_d, opt_g, data.batch_at(idx, fade.resolution), cfg,
                          fade, lr, derive_seed(cfg.seed, kStepTag, std::uint64_t(step)));
    } catch (const NumericError& e) {
      log.flush();
      diag.flush();
      throw NumericError(cat(e.what(), " (step ", step, ")"));
    }
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();

    log << losses_row(step, losses) << '\n';
    log.flush();
    char dbuf[160];
    std::snprintf(dbuf, sizeof(dbuf), "%ld,%d,%d,%.6g,%.9g,%.3f", step, epoch,
                  fade.resolution, double(fade.alpha), lr, wall_ms);
    diag << dbuf << '\n';
    diag.flush();

    if (step % cfg.checkpoint_interval == 0)
      save_checkpoint(cfg.out_dir, bundle, probe, opt_g, opt_d, cfg, step, fade);
  }
  step = end_step;
  save_checkpoint(cfg.out_dir, bundle, probe, opt_g, opt_d, cfg, step,
                  sched.state_at(std::max<long>(1, step)));

  FitResult r;
  r.steps_done = step - start_step;
  r.total_steps = total;
  r.checkpoint_dir = cfg.out_dir;
  return r;
}

LoadedRun load_run(const std::string& checkpoint_dir) {
  const CheckpointMeta meta =
      CheckpointMeta::load((fs::path(checkpoint_dir) / kMetaFile).string());
  RunConfig cfg = RunConfig::parse_text(meta.config_text);
  LoadedRun run{cfg,
                meta.step,
                FadeInState{meta.resolution, meta.alpha},
                NetworkBundle::create(bundle_config(cfg, meta.id_classes), cfg.seed),
                make_probe(cfg)};
  load_bundle_params(checkpoint_dir, run.bundle, &run.probe);
  run.bundle.perceptual->freeze();
  run.bundle.identity->freeze();
  run.probe.freeze();
  return run;
}

}  // namespace s2p
