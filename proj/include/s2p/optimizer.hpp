#pragma once

#include <memory>
#include <string>
#include <vector>

#include "s2p/tape.hpp"

namespace s2p {

// Adam with optional global-norm gradient clipping. Parameters are deduped
// by identity so shared storage is updated exactly once per step.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::shared_ptr<Param>> params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void zero_grad();
  void step(double lr);
  void set_clip(double max_norm, bool enabled);

  long step_count() const { return t_; }
  const std::vector<std::shared_ptr<Param>>& params() const { return params_; }

  void save_state(const std::string& path) const;
  void load_state(const std::string& path);

 private:
  std::vector<std::shared_ptr<Param>> params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_;
  double clip_norm_ = 10.0;
  bool clip_enabled_ = false;
  long t_ = 0;
};

}  // namespace s2p
