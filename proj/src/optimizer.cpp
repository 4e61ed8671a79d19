#include "s2p/optimizer.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace s2p {

AdamOptimizer::AdamOptimizer(std::vector<std::shared_ptr<Param>> params, double beta1,
                             double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  std::set<const Param*> seen;
  for (auto& p : params) {
    check_arg(bool(p), "optimizer given a null parameter");
    if (seen.insert(p.get()).second) params_.push_back(p);
  }
  check_arg(!params_.empty(), "optimizer needs at least one parameter");
  for (auto& p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void AdamOptimizer::set_clip(double max_norm, bool enabled) {
  check_arg(max_norm > 0, "clip norm must be positive");
  clip_norm_ = max_norm;
  clip_enabled_ = enabled;
}

void AdamOptimizer::step(double lr) {
  check_arg(lr >= 0, "learning rate must be non-negative");
  float scale = 1.0f;
  if (clip_enabled_) {
    double ss = 0.0;
    for (size_t i = 0; i < params_.size(); ++i) {
      const Tensor& g = params_[i]->grad;
      for (std::int64_t j = 0; j < g.size(); ++j) ss += double(g[j]) * g[j];
    }
    const double norm = std::sqrt(ss);
    if (norm > clip_norm_) scale = float(clip_norm_ / norm);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  const float b1 = float(beta1_), b2 = float(beta2_);
  for (size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::int64_t j = 0; j < p.value.size(); ++j) {
      const float g = p.grad[j] * scale;
      m[j] = b1 * m[j] + (1.0f - b1) * g;
      v[j] = b2 * v[j] + (1.0f - b2) * g * g;
      const float mhat = float(double(m[j]) / bc1);
      const float vhat = float(double(v[j]) / bc2);
      p.value[j] -= float(lr) * mhat / (std::sqrt(vhat) + float(eps_));
    }
  }
}

namespace {
constexpr char kOptMagic[] = "S2POPT01";
}

void AdamOptimizer::save_state(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(cat("cannot write optimizer state: ", path));
  out.write(kOptMagic, 8);
  const std::int64_t t = t_;
  const std::int32_t n = std::int32_t(params_.size());
  out.write(reinterpret_cast<const char*>(&t), sizeof(t));
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (size_t i = 0; i < params_.size(); ++i) {
    const std::string& name = params_[i]->name;
    const std::int32_t len = std::int32_t(name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(name.data(), len);
    const std::int64_t sz = m_[i].size();
    out.write(reinterpret_cast<const char*>(&sz), sizeof(sz));
    out.write(reinterpret_cast<const char*>(m_[i].data()), sz * std::int64_t(sizeof(float)));
    out.write(reinterpret_cast<const char*>(v_[i].data()), sz * std::int64_t(sizeof(float)));
  }
  if (!out) throw IoError(cat("failed while writing optimizer state: ", path));
}

void AdamOptimizer::load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(cat("cannot read optimizer state: ", path));
  char magic[8];
  in.read(magic, 8);
  check_data(in && std::string(magic, 8) == kOptMagic, "bad optimizer state file: ", path);
  std::int64_t t = 0;
  std::int32_t n = 0;
  in.read(reinterpret_cast<char*>(&t), sizeof(t));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  check_data(in && n == std::int32_t(params_.size()),
             "optimizer state parameter count mismatch in ", path);
  t_ = t;
  for (size_t i = 0; i < params_.size(); ++i) {
    std::int32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    check_data(in && len >= 0 && len < 4096, "corrupt optimizer state: ", path);
    std::string name(size_t(len), '\0');
    in.read(name.data(), len);
    check_data(name == params_[i]->name, "optimizer state names parameter ", name,
               " where ", params_[i]->name, " was expected");
    std::int64_t sz = 0;
    in.read(reinterpret_cast<char*>(&sz), sizeof(sz));
    check_data(in && sz == m_[i].size(), "optimizer state size mismatch for ", name);
    in.read(reinterpret_cast<char*>(m_[i].data()), sz * std::int64_t(sizeof(float)));
    in.read(reinterpret_cast<char*>(v_[i].data()), sz * std::int64_t(sizeof(float)));
    check_data(bool(in), "truncated optimizer state: ", path);
  }
}

}  // namespace s2p
