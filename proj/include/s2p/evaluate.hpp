#pragma once

#include <string>

#include "s2p/manifest.hpp"
#include "s2p/metrics.hpp"
#include "s2p/trainer.hpp"

namespace s2p {

struct EvalReport {
  long step = 0;
  double ssim_mean = 0;          // real vs cycle-reconstructed photos
  double fid_value = 0;          // toy-FID: real test photos vs translated
  double inception = 0;          // toy-IS over the hair softmax
  double cycle_l1_photo = 0;     // mean per-pixel L1, [-1,1] units
  double cycle_l1_sketch = 0;
  double cycle_l1_mean = 0;
  double attr_accuracy = 0;      // discriminator on real test images, all bits
  double target_attr_rate = 0;   // probe agrees with requested hair on fakes
  std::vector<double> cmc;       // synthesized probes vs real gallery
  std::vector<RocPoint> roc;

  std::string to_json() const;
};

// Runs the full test-split protocol on a checkpoint and writes report.json,
// cmc.csv (rank,rate) and roc.csv (far,tar) under out_dir. Deterministic:
// evaluating the same checkpoint twice writes byte-identical files.
EvalReport evaluate_checkpoint(const std::string& checkpoint_dir,
                               const DatasetManifest& manifest, const std::string& out_dir,
                               std::uint64_t seed);

}  // namespace s2p
