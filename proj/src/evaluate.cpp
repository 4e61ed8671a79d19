#include "s2p/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "s2p/image_io.hpp"
#include "s2p/losses.hpp"

namespace fs = std::filesystem;

namespace s2p {

namespace {

Tensor take_sample(const Tensor& batch, int n) {
  const Shape& s = batch.shape();
  Tensor out(Shape(1, s.c, s.h, s.w));
  std::copy(batch.sample(n), batch.sample(n) + batch.sample_size(), out.data());
  return out;
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double acc = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += std::abs(double(a[i]) - double(b[i]));
  return acc / double(a.size());
}

std::vector<std::vector<int>> chunk(const std::vector<int>& idx, int size) {
  std::vector<std::vector<int>> out;
  for (size_t i = 0; i < idx.size(); i += size_t(size))
    out.emplace_back(idx.begin() + long(i),
                     idx.begin() + long(std::min(idx.size(), i + size_t(size))));
  return out;
}

std::vector<float> row_of(const Tensor& t, int n) {
  std::vector<float> out(size_t(t.shape().c));
  for (int c = 0; c < t.shape().c; ++c) out[size_t(c)] = t.at(n, c, 0, 0);
  return out;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0;
  for (size_t i = 0; i < a.size(); ++i) dot += double(a[i]) * double(b[i]);
  return dot;
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["ssim"] = ssim_mean;
  j["fid"] = fid_value;  // toy-FID: stand-in features, not comparable to published scales
  j["inception_score"] = inception;  // toy-IS over the hair softmax
  j["cycle_l1"] = {{"photo", cycle_l1_photo},
                   {"sketch", cycle_l1_sketch},
                   {"mean", cycle_l1_mean}};
  j["attr_accuracy"] = attr_accuracy;
  j["target_attr_rate"] = target_attr_rate;
  j["cmc"] = cmc;
  nlohmann::ordered_json roc_json = nlohmann::ordered_json::array();
  for (const auto& p : roc) roc_json.push_back({p.far, p.tar});
  j["roc"] = roc_json;
  return j.dump(2);
}

EvalReport evaluate_checkpoint(const std::string& checkpoint_dir,
                               const DatasetManifest& manifest, const std::string& out_dir,
                               std::uint64_t seed) {
  LoadedRun run = load_run(checkpoint_dir);
  const RunConfig& cfg = run.cfg;
  ToyDataset data(manifest, cfg.resolution);
  const std::vector<int>& test = data.test_indices();
  check_data(!test.empty(), "manifest has no test split");
  check_data(int(test.size()) >= 2, "need at least two test images for evaluation");

  const FadeInState fade = run.fade;
  const int res = fade.resolution;
  const int factor = cfg.resolution / res;
  const int pres = run.bundle.perceptual->input_res();

  struct PerItem {
    Tensor photo, sketch, translated, own_translated, cycle_photo, cycle_sketch;
    AttributeVector attrs, target;
    int subject = 0;
    std::vector<float> emb_real, emb_probe;
    std::vector<float> perc_real, perc_translated;
    std::vector<double> hair_probs;
    int probe_hair = -1;
  };
  std::vector<PerItem> items(test.size());

  for (size_t i = 0; i < test.size(); ++i) {
    items[i].attrs = data.attrs(test[i]);
    items[i].subject = data.subject(test[i]);
    items[i].target = sample_target_attrs(items[i].attrs,
                                          derive_seed(seed, 0x746774ULL, std::uint64_t(i)));
  }

  // batched generator + extractor passes over the test split
  const auto chunks = chunk(test, 8);
  size_t item_base = 0;
  for (const auto& c : chunks) {
    FTape t;
    TrainBatch batch = data.batch_at(c, res);
    const int photos = t.leaf(batch.photos);
    const int sketches = t.leaf(batch.sketches);
    std::vector<AttributeVector> attrs0(batch.attrs.begin(), batch.attrs.end());
    for (auto& a : attrs0) a[4] = 0;
    auto attrs1 = attrs0;
    for (auto& a : attrs1) a[4] = 1;
    std::vector<AttributeVector> targets;
    for (size_t i = 0; i < c.size(); ++i) targets.push_back(items[item_base + i].target);
    auto targets1 = targets;
    for (auto& a : targets1) a[4] = 1;

    const int translated =
        run.bundle.gx->forward(t, concat_condition_node(t, sketches, targets), fade).image;
    const int own_translated =
        run.bundle.gx->forward(t, concat_condition_node(t, sketches, attrs0), fade).image;
    const int fake_sketch =
        run.bundle.gy->forward(t, concat_condition_node(t, photos, attrs0), fade).image;
    const int cycle_photo =
        run.bundle.gx->forward(t, concat_condition_node(t, fake_sketch, attrs1), fade).image;
    const int cycle_sketch =
        run.bundle.gy->forward(t, concat_condition_node(t, translated, targets1), fade).image;

    auto at_pres = [&](int img) { return upsample_to(t, to_three_channels(t, img), pres); };
    const int emb_real = run.bundle.identity->embed(t, at_pres(photos));
    const int emb_probe = run.bundle.identity->embed(t, at_pres(own_translated));
    const int perc_real = run.bundle.perceptual->features(t, at_pres(photos));
    const int perc_trans = run.bundle.perceptual->features(t, at_pres(translated));
    const int probe_logits = run.probe.logits(t, at_pres(translated));
    const int hair_logp = t.log_softmax_c(t.slice_c(probe_logits, 0, kNumHair));
    const int perc_logits = run.bundle.perceptual->logits(t, at_pres(translated));
    const int perc_hair_logp = t.log_softmax_c(t.slice_c(perc_logits, 0, kNumHair));

    for (size_t i = 0; i < c.size(); ++i) {
      PerItem& it = items[item_base + i];
      it.photo = take_sample(batch.photos, int(i));
      it.sketch = take_sample(batch.sketches, int(i));
      it.translated = take_sample(t.val(translated), int(i));
      it.own_translated = take_sample(t.val(own_translated), int(i));
      it.cycle_photo = take_sample(t.val(cycle_photo), int(i));
      it.cycle_sketch = take_sample(t.val(cycle_sketch), int(i));
      it.emb_real = row_of(t.val(emb_real), int(i));
      it.emb_probe = row_of(t.val(emb_probe), int(i));
      it.perc_real = row_of(t.val(perc_real), int(i));
      it.perc_translated = row_of(t.val(perc_trans), int(i));
      // toy-IS rows from the frozen extractor's hair softmax
      it.hair_probs.resize(kNumHair);
      for (int k = 0; k < kNumHair; ++k)
        it.hair_probs[size_t(k)] = std::exp(double(t.val(perc_hair_logp).at(int(i), k, 0, 0)));
      // independent probe's hair call
      float best = -1e30f;
      for (int k = 0; k < kNumHair; ++k)
        if (t.val(hair_logp).at(int(i), k, 0, 0) > best) {
          best = t.val(hair_logp).at(int(i), k, 0, 0);
          it.probe_hair = k;
        }
    }
    item_base += c.size();
  }

  EvalReport rep;
  rep.step = run.step;

  double ssim_acc = 0, l1p = 0, l1s = 0;
  long target_hits = 0;
  for (const auto& it : items) {
    ssim_acc += ssim(it.photo, it.cycle_photo);
    l1p += mean_abs_diff(it.photo, it.cycle_photo);
    l1s += mean_abs_diff(it.sketch, it.cycle_sketch);
    if (it.probe_hair == it.target.hair_index()) ++target_hits;
  }
  rep.ssim_mean = ssim_acc / double(items.size());
  rep.cycle_l1_photo = l1p / double(items.size());
  rep.cycle_l1_sketch = l1s / double(items.size());
  rep.cycle_l1_mean = 0.5 * (rep.cycle_l1_photo + rep.cycle_l1_sketch);
  rep.target_attr_rate = double(target_hits) / double(items.size());

  {
    const int d = int(items.front().perc_real.size());
    Eigen::MatrixXd real_rows(items.size(), d), fake_rows(items.size(), d);
    for (size_t i = 0; i < items.size(); ++i)
      for (int k = 0; k < d; ++k) {
        real_rows(long(i), k) = items[i].perc_real[size_t(k)];
        fake_rows(long(i), k) = items[i].perc_translated[size_t(k)];
      }
    rep.fid_value = fid(ActivationStats::from_embeddings(real_rows),
                        ActivationStats::from_embeddings(fake_rows));
  }
  {
    std::vector<std::vector<double>> rows;
    for (const auto& it : items) {
      std::vector<double> r = it.hair_probs;
      double sum = 0;
      for (double v : r) sum += v;
      for (double& v : r) v /= sum;  // renormalize away float->double rounding
      rows.push_back(std::move(r));
    }
    rep.inception = inception_score(rows);
  }

  // discriminator attribute accuracy on real test photos, one fixed batch
  {
    std::vector<int> all_test = test;
    if (all_test.size() == 1) all_test.push_back(test[0]);  // minibatch stddev needs 2
    FTape t;
    TrainBatch batch = data.batch_at(all_test, res);
    DiscriminatorOutput out =
        run.bundle.dx[0]->forward(t, t.leaf(batch.photos), fade);
    const Tensor& logits = t.val(out.attr_logits);
    long correct = 0;
    for (size_t i = 0; i < test.size(); ++i) {
      const AttributeVector& truth = batch.attrs[i];
      int hair = 0;
      for (int k = 1; k < kNumHair; ++k)
        if (logits.at(int(i), k, 0, 0) > logits.at(int(i), hair, 0, 0)) hair = k;
      const bool young_ok = (logits.at(int(i), 3, 0, 0) > 0) == (truth[3] != 0);
      const bool rec_ok = (logits.at(int(i), 4, 0, 0) > 0) == (truth[4] != 0);
      if (hair == truth.hair_index() && young_ok && rec_ok) ++correct;
    }
    rep.attr_accuracy = double(correct) / double(test.size());
  }

  // identification: gallery = one real photo per subject over the whole
  // manifest, probes = own-attribute translations of the test split
  {
    std::map<int, int> first_record;
    for (size_t i = 0; i < manifest.records.size(); ++i)
      first_record.emplace(manifest.records[i].subject_id, int(i));
    std::vector<int> gallery_records;
    std::vector<int> gallery_ids;
    for (const auto& [sid, ri] : first_record) {
      gallery_records.push_back(ri);
      gallery_ids.push_back(sid);
    }
    std::vector<EmbeddingEntry> gallery;
    const auto gchunks = chunk(gallery_records, 8);
    size_t gbase = 0;
    for (const auto& gc : gchunks) {
      FTape t;
      Tensor photos(Shape(int(gc.size()), 3, cfg.resolution, cfg.resolution));
      for (size_t i = 0; i < gc.size(); ++i) {
        const Tensor ph = load_image(manifest.resolve(manifest.records[size_t(gc[i])].path),
                                     cfg.resolution, cfg.resolution);
        std::copy(ph.data(), ph.data() + ph.size(), photos.sample(int(i)));
      }
      const int emb = run.bundle.identity->embed(t, t.leaf(photos));
      for (size_t i = 0; i < gc.size(); ++i)
        gallery.push_back({gallery_ids[gbase + i], row_of(t.val(emb), int(i))});
      gbase += gc.size();
    }
    std::vector<EmbeddingEntry> probes;
    for (const auto& it : items) probes.push_back({it.subject, it.emb_probe});
    rep.cmc = cmc_curve(gallery, probes, int(gallery.size()));
  }

  // verification: genuine = same test image, impostor = cross-subject pairs
  {
    MatchScoreSet scores;
    for (size_t i = 0; i < items.size(); ++i) {
      scores.genuine_scores.push_back(cosine(items[i].emb_real, items[i].emb_probe));
      for (size_t j = 0; j < items.size(); ++j)
        if (items[i].subject != items[j].subject)
          scores.impostor_scores.push_back(cosine(items[i].emb_real, items[j].emb_probe));
    }
    if (scores.impostor_scores.empty())
      scores.impostor_scores.push_back(-1.0);  // degenerate single-subject test split
    rep.roc = roc_curve(scores, 200);
  }

  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "report.json", std::ios::trunc);
    if (!f) throw IoError(cat("cannot write report under ", out_dir));
    f << rep.to_json() << '\n';
  }
  {
    std::ofstream f(fs::path(out_dir) / "cmc.csv", std::ios::trunc);
    f << "rank,rate\n";
    char buf[64];
    for (size_t k = 0; k < rep.cmc.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%zu,%.9g", k + 1, rep.cmc[k]);
      f << buf << '\n';
    }
  }
  {
    std::ofstream f(fs::path(out_dir) / "roc.csv", std::ios::trunc);
    f << "far,tar\n";
    char buf[80];
    for (const auto& p : rep.roc) {
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g", p.far, p.tar);
      f << buf << '\n';
    }
  }
  return rep;
}

}  // namespace s2p
