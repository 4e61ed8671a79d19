#pragma once

#include <optional>
#include <string>
#include <vector>

#include "s2p/config.hpp"
#include "s2p/manifest.hpp"
#include "s2p/networks.hpp"
#include "s2p/optimizer.hpp"

namespace s2p {

// Progressive resolution schedule. Parsed from "res[:steps],...", the last
// stage running to the end of training. Alpha ramps 0 -> 1 over
// fade_fraction of each stage after the first and is 1 throughout stage 0.
class FadeSchedule {
 public:
  struct Stage {
    int resolution = 0;
    long steps = 0;  // resolved; last stage absorbs the remainder
  };

  static FadeSchedule parse(const std::string& text, long total_steps,
                            double fade_fraction, int max_res, int base_res);

  FadeInState state_at(long step) const;  // 1-based training step
  const std::vector<Stage>& stages() const { return stages_; }

 private:
  std::vector<Stage> stages_;
  std::vector<long> ramp_;
};

struct StepLosses {
  double adv_g = 0, adv_d = 0, rec = 0, cont = 0, style = 0, content = 0,
         quality = 0, cls_r = 0, cls_f = 0, total_g = 0, total_d = 0;
};

struct TrainStats {
  long step = 0;
  StepLosses losses;
  double lr = 0;
  FadeInState fade;
  double wall_ms = 0;
};

struct TrainBatch {
  Tensor photos;   // (B,3,R,R)
  Tensor sketches; // (B,1,R,R)
  std::vector<AttributeVector> attrs;
  std::vector<int> subjects;
};

// In-memory toy dataset; images decoded once at the training resolution and
// average-pooled down for earlier progressive stages.
class ToyDataset {
 public:
  ToyDataset(const DatasetManifest& manifest, int resolution);

  int size() const { return int(photos_.size()); }
  const std::vector<int>& train_indices() const { return train_; }
  const std::vector<int>& test_indices() const { return test_; }
  int num_train_subjects() const { return num_train_subjects_; }
  int resolution() const { return resolution_; }

  const Tensor& photo(int i) const { return photos_[size_t(i)]; }
  const Tensor& sketch(int i) const { return sketches_[size_t(i)]; }
  const AttributeVector& attrs(int i) const { return attrs_[size_t(i)]; }
  int subject(int i) const { return subjects_[size_t(i)]; }

  TrainBatch batch_at(const std::vector<int>& indices, int res) const;

 private:
  int resolution_;
  std::vector<Tensor> photos_, sketches_;
  std::vector<AttributeVector> attrs_;
  std::vector<int> subjects_;
  std::vector<int> train_, test_;
  int num_train_subjects_ = 0;
};

// Average-pool a batch down by a power-of-two factor.
Tensor avg_downsample(const Tensor& batch, int factor);

// One discriminator update followed by one generator update on a batch.
// Throws NumericError naming the offending term if any loss goes non-finite.
StepLosses train_step(NetworkBundle& bundle, AdamOptimizer& opt_d, AdamOptimizer& opt_g,
                      const TrainBatch& batch, const RunConfig& cfg,
                      const FadeInState& fade, double lr, std::uint64_t step_seed);

// Pretrain the frozen stand-ins (perceptual extractor, identity embedder,
// and the independent attribute probe) on the toy data, then freeze them.
void pretrain_frozen(NetworkBundle& bundle, PerceptualNet& probe, const ToyDataset& data,
                     const RunConfig& cfg);

// Widths and seed tag for the evaluation-only attribute probe.
PerceptualNet make_probe(const RunConfig& cfg);

struct FitResult {
  long steps_done = 0;
  long total_steps = 0;
  std::string checkpoint_dir;
};

// Full training run: pretraining (fresh runs), min-max loop, CSV logs and
// periodic checkpoints under cfg.out_dir. run_until_step > 0 stops early
// (checkpointing at the stop), which resume picks up.
FitResult fit(const DatasetManifest& manifest, const RunConfig& cfg, bool resume = false,
              long run_until_step = 0);

// Rebuild a bundle + probe from a checkpoint directory.
struct LoadedRun {
  RunConfig cfg;
  long step = 0;
  FadeInState fade;
  NetworkBundle bundle;
  PerceptualNet probe;
};
LoadedRun load_run(const std::string& checkpoint_dir);

long steps_per_epoch(const RunConfig& cfg, int train_count);
long total_steps(const RunConfig& cfg, int train_count);

extern const char* const kTrainLogCsv;
extern const char* const kTrainDiagCsv;
extern const char* const kTrainLogHeader;

}  // namespace s2p
