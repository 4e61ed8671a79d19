#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "s2p/rng.hpp"
#include "s2p/tape.hpp"

namespace s2p::testutil {

inline DTensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  DTensor t(s);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
  return t;
}

inline Tensor random_ftensor(Shape s, Rng& rng, float scale = 1.0f) {
  Tensor t(s);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = float(rng.normal()) * scale;
  return t;
}

// Central finite-difference check of d(loss)/d(inputs) for a scalar loss
// built from several inputs. h = 1e-3 and relative tolerance 1e-4 per the
// acceptance gate; the relative error uses max(1, |analytic|, |fd|).
struct GradCheck {
  double max_rel_err = 0.0;
  double h = 1e-3;
  double tol = 1e-4;

  bool run(const std::vector<DTensor>& inputs,
           const std::function<int(DTape&, const std::vector<int>&)>& build) {
    DTape t;
    std::vector<int> ids;
    for (const auto& in : inputs) ids.push_back(t.input(in));
    const int loss = build(t, ids);
    t.backward(loss);
    std::vector<DTensor> analytic;
    for (size_t k = 0; k < inputs.size(); ++k)
      analytic.push_back(t.has_grad(ids[k]) ? t.grad(ids[k]) : DTensor(inputs[k].shape()));

    max_rel_err = 0.0;
    for (size_t k = 0; k < inputs.size(); ++k) {
      for (std::int64_t i = 0; i < inputs[k].size(); ++i) {
        auto eval = [&](double delta) {
          std::vector<DTensor> shifted = inputs;
          shifted[k][i] += delta;
          DTape tt;
          std::vector<int> sids;
          for (const auto& in : shifted) sids.push_back(tt.input(in));
          return double(tt.val(build(tt, sids))[0]);
        };
        const double fd = (eval(h) - eval(-h)) / (2.0 * h);
        const double an = analytic[k][i];
        const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
        max_rel_err = std::max(max_rel_err, err);
      }
    }
    return max_rel_err <= tol;
  }
};

// Unique scratch directory under the build tree.
inline std::string scratch_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("s2p_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace s2p::testutil
