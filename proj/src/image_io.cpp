#include "s2p/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "s2p/common.hpp"

namespace s2p {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

RawImage read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError(cat("cannot open image file: ", path));

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw DataError(cat("not a PNG file: ", path));

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(cat("failed to decode PNG: ", path));
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  check_data(channels == 1 || channels == 3, "unsupported channel count ", channels, " in ", path);

  RawImage img;
  img.width = int(width);
  img.height = int(height);
  img.channels = channels;
  img.pixels.resize(std::size_t(width) * height * channels);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y)
    rows[y] = img.pixels.data() + std::size_t(y) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const RawImage& img) {
  check_arg(img.channels == 1 || img.channels == 3, "write_png: channels must be 1 or 3");
  check_arg(img.width > 0 && img.height > 0, "write_png: empty image");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError(cat("cannot open file for writing: ", path));

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(cat("failed to write PNG: ", path));
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.pixels.data() + std::size_t(y) * img.width * img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor tensor_from_raw(const RawImage& img) {
  Tensor out(Shape(1, img.channels, img.height, img.width));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const std::uint8_t v = img.pixels[(std::size_t(y) * img.width + x) * img.channels + c];
        out.at(0, c, y, x) = float(v) * (2.0f / 255.0f) - 1.0f;
      }
  return out;
}

RawImage raw_from_tensor(const Tensor& image) {
  const Shape& s = image.shape();
  check_arg(s.n == 1, "raw_from_tensor: expects a single-image batch");
  check_arg(s.c == 1 || s.c == 3, "raw_from_tensor: channels must be 1 or 3");
  RawImage img;
  img.width = s.w;
  img.height = s.h;
  img.channels = s.c;
  img.pixels.resize(std::size_t(s.w) * s.h * s.c);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < s.c; ++c) {
        float v = (image.at(0, c, y, x) + 1.0f) * (255.0f / 2.0f);
        v = std::min(255.0f, std::max(0.0f, v));
        img.pixels[(std::size_t(y) * s.w + x) * s.c + c] =
            std::uint8_t(std::lround(v));
      }
  return img;
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
  const Shape& s = img.shape();
  check_arg(s.n == 1, "resize_bilinear: expects a single-image batch");
  check_arg(out_h > 0 && out_w > 0, "resize_bilinear: target size must be positive");
  if (out_h == s.h && out_w == s.w) return img;
  Tensor out(Shape(1, s.c, out_h, out_w));
  const float sy = float(s.h) / float(out_h);
  const float sx = float(s.w) / float(out_w);
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < out_h; ++y) {
      const float fy = (float(y) + 0.5f) * sy - 0.5f;
      const int y0 = std::max(0, std::min(s.h - 1, int(std::floor(fy))));
      const int y1 = std::min(s.h - 1, y0 + 1);
      const float wy = std::min(1.0f, std::max(0.0f, fy - float(y0)));
      for (int x = 0; x < out_w; ++x) {
        const float fx = (float(x) + 0.5f) * sx - 0.5f;
        const int x0 = std::max(0, std::min(s.w - 1, int(std::floor(fx))));
        const int x1 = std::min(s.w - 1, x0 + 1);
        const float wx = std::min(1.0f, std::max(0.0f, fx - float(x0)));
        const float v00 = img.at(0, c, y0, x0), v01 = img.at(0, c, y0, x1);
        const float v10 = img.at(0, c, y1, x0), v11 = img.at(0, c, y1, x1);
        out.at(0, c, y, x) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                             wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  return out;
}

Tensor load_image(const std::string& path, int target_h, int target_w) {
  check_arg(target_h > 0 && target_w > 0, "load_image: target size must be positive");
  RawImage raw = read_png(path);
  Tensor t = tensor_from_raw(raw);
  return resize_bilinear(t, target_h, target_w);
}

void save_image(const Tensor& image, const std::string& path) {
  write_png(path, raw_from_tensor(image));
}

}  // namespace s2p
