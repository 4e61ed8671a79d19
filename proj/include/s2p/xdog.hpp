#pragma once

#include "s2p/tensor.hpp"

namespace s2p {

// Extended difference-of-Gaussians stylization parameters.
struct XdogParams {
  double sigma = 1.0;     // blur scale in pixels
  double k = 1.6;         // scale ratio between the two Gaussians
  double tau = 0.98;      // DoG sharpening weight
  double epsilon_t = 0.0; // soft-threshold level
  double phi = 200.0;     // threshold steepness

  void validate() const {
    check_arg(sigma > 0.0, "xdog: sigma must be > 0");
    check_arg(k > 1.0, "xdog: k must be > 1");
    check_arg(phi >= 0.0, "xdog: phi must be >= 0");
  }
};

// Separable Gaussian blur with reflective boundary handling, single plane.
// Double precision so constant inputs survive the DoG subtraction exactly
// enough that the thresholded output quantizes to pure white.
void gaussian_blur(const double* src, double* dst, int h, int w, double sigma);

// Photo -> sketch. Grayscale (luma) on [0,1], u = G_sigma - tau * G_{k sigma},
// output 1 where u >= epsilon_t else 1 + tanh(phi * (u - epsilon_t)),
// rescaled back to [-1, 1]. Pure: identical inputs give identical bits.
Tensor xdog_sketch(const Tensor& image, const XdogParams& params);

}  // namespace s2p
