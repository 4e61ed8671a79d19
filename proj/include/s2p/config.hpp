#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2p/losses.hpp"
#include "s2p/xdog.hpp"

namespace s2p {

// Full run configuration: training hyperparameters, network shape, sketch
// synthesis parameters, and paths. Serialized as ordered key=value text;
// parsing rejects unknown keys and the round trip is lossless.
struct RunConfig {
  // reproducibility
  std::uint64_t seed = 7;

  // optimization
  int batch_size = 8;
  int epochs_flat = 50;   // constant learning rate
  int epochs_decay = 50;  // linear decay to zero
  double base_lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double clip_norm = 10.0;
  bool clip_enabled = true;
  int d_steps_per_g = 1;

  // objective
  LossWeights weights;

  // networks
  int resolution = 64;
  int base_res = 16;
  int base_width = 32;
  int max_width = 128;
  int d_scales = 1;
  int id_embed_dim = 64;

  // progressive schedule: "res[:steps],..."; the last stage runs to the end
  std::string fade_schedule = "64";
  double fade_fraction = 0.5;

  // perceptual tap subsets (1-based block indices of the extractor)
  std::vector<int> rec_taps = {1, 2, 3, 4};
  std::vector<int> content_taps = {2, 3, 4};
  std::vector<int> style_taps = {2, 3, 4};

  // frozen-network pretraining
  int pretrain_steps = 600;
  int pretrain_batch = 16;
  double pretrain_lr = 1e-3;

  // bookkeeping
  int checkpoint_interval = 500;

  // sketch synthesis defaults (prepare step)
  XdogParams xdog;

  // paths (excluded from resume compatibility checks)
  std::string data_dir;
  std::string out_dir;

  void validate() const;
  std::string serialize() const;
  static RunConfig parse_text(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  // Raises DataError naming the first differing field relevant to training.
  void check_resume_compatible(const RunConfig& other) const;
};

// Flat learning rate for epochs_flat epochs, then linear decay to zero over
// epochs_decay epochs, zero afterwards.
double lr_schedule(int epoch, const RunConfig& cfg);

}  // namespace s2p
