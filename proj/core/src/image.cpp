#include "fewview/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "fewview/errors.hpp"

namespace fewview {

void Image::fill(const Eigen::Vector3f& color) {
  for (size_t i = 0; i < pixel_count(); ++i) {
    rgb[3 * i + 0] = color.x();
    rgb[3 * i + 1] = color.y();
    rgb[3 * i + 2] = color.z();
  }
}

uint8_t quantize8(float v) {
  v = std::fmin(1.0f, std::fmax(0.0f, v));
  return static_cast<uint8_t>(std::lround(v * 255.0f));
}

float dequantize8(uint8_t v) { return static_cast<float>(v) / 255.0f; }

Image quantized(const Image& img) {
  Image out(img.width, img.height);
  for (size_t i = 0; i < img.rgb.size(); ++i)
    out.rgb[i] = dequantize8(quantize8(img.rgb[i]));
  return out;
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path, const Eigen::Vector3f& background) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw MissingFile("cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageDecodeError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageDecodeError("png_create_info_struct failed");
  }
  std::vector<uint8_t> data;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageDecodeError("failed to decode " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);

  // Normalize everything to 8-bit RGBA, then composite alpha below.
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY ||
      color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_filler(png, 0xFF, PNG_FILLER_AFTER);
  png_read_update_info(png, info);

  data.resize(size_t(width) * height * 4);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y)
    rows[y] = data.data() + size_t(y) * width * 4;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(width), static_cast<int>(height));
  for (size_t i = 0; i < size_t(width) * height; ++i) {
    const float a = dequantize8(data[4 * i + 3]);
    for (int c = 0; c < 3; ++c)
      img.rgb[3 * i + c] =
          dequantize8(data[4 * i + c]) * a + background[c] * (1.0f - a);
  }
  return img;
}

void write_png(const std::string& path, const Image& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path + " for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<uint8_t> data;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  data.resize(size_t(img.width) * img.height * 3);
  for (size_t i = 0; i < img.rgb.size(); ++i) data[i] = quantize8(img.rgb[i]);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = data.data() + size_t(y) * img.width * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace fewview
