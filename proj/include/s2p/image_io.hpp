#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2p/tensor.hpp"

namespace s2p {

// Decoded 8-bit image, interleaved row-major, channels = 1 or 3.
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

RawImage read_png(const std::string& path);
void write_png(const std::string& path, const RawImage& img);

// Decode, resize (bilinear) and rescale to [-1, 1]; returns a single-image
// batch (1, C, H, W) with C as decoded.
Tensor load_image(const std::string& path, int target_h, int target_w);

// Quantize [-1, 1] back to 8 bits and write. Expects a (1, C, H, W) batch.
void save_image(const Tensor& image, const std::string& path);

Tensor tensor_from_raw(const RawImage& img);      // to [-1, 1], (1,C,H,W)
RawImage raw_from_tensor(const Tensor& image);    // clamp + round to 8 bits

// Bilinear resample of a (1,C,H,W) tensor.
Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);

}  // namespace s2p
