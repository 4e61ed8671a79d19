#include "s2p/xdog.hpp"

#include <cmath>
#include <vector>

namespace s2p {

namespace {

// reflect-101 indexing: -1 -> 1, h -> h-2
inline int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-double(i) * i / (2.0 * sigma * sigma));
    k[size_t(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace

void gaussian_blur(const double* src, double* dst, int h, int w, double sigma) {
  const std::vector<double> kern = gaussian_kernel(sigma);
  const int radius = int(kern.size() / 2);
  std::vector<double> tmp(static_cast<size_t>(h) * w);
  // horizontal
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kern[size_t(i + radius)] * src[y * w + reflect(x + i, w)];
      tmp[size_t(y) * w + x] = acc;
    }
  // vertical
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kern[size_t(i + radius)] * tmp[size_t(reflect(y + i, h)) * w + x];
      dst[y * w + x] = acc;
    }
}

Tensor xdog_sketch(const Tensor& image, const XdogParams& params) {
  params.validate();
  const Shape& s = image.shape();
  check_arg(s.n == 1, "xdog_sketch: expects a single-image batch");
  check_arg(s.c == 3, "xdog_sketch: expects a 3-channel photo, got ", s.c, " channels");

  const std::int64_t plane = std::int64_t(s.h) * s.w;
  std::vector<double> gray(static_cast<size_t>(plane));
  for (std::int64_t i = 0; i < plane; ++i) {
    // luma of the [0,1]-mapped image
    const double r = (double(image.data()[i]) + 1.0) * 0.5;
    const double g = (double(image.data()[plane + i]) + 1.0) * 0.5;
    const double b = (double(image.data()[2 * plane + i]) + 1.0) * 0.5;
    gray[size_t(i)] = 0.299 * r + 0.587 * g + 0.114 * b;
  }

  std::vector<double> g1(static_cast<size_t>(plane)), g2(static_cast<size_t>(plane));
  gaussian_blur(gray.data(), g1.data(), s.h, s.w, params.sigma);
  gaussian_blur(gray.data(), g2.data(), s.h, s.w, params.k * params.sigma);

  Tensor out(Shape(1, 1, s.h, s.w));
  for (std::int64_t i = 0; i < plane; ++i) {
    const double u = g1[size_t(i)] - params.tau * g2[size_t(i)];
    const double v =
        u >= params.epsilon_t ? 1.0 : 1.0 + std::tanh(params.phi * (u - params.epsilon_t));
    out.data()[i] = float(2.0 * v - 1.0);
  }
  return out;
}

}  // namespace s2p
