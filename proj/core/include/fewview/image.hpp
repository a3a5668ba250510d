#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace fewview {

// Linear-light RGB image, float values in [0,1]. No gamma anywhere in the
// pipeline; PSNR/SSIM are computed in this space.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;  // row-major, 3 floats per pixel

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(3 * size_t(w) * h, 0.0f) {}

  size_t pixel_count() const { return size_t(width) * height; }

  float* pixel(int x, int y) { return &rgb[3 * (size_t(y) * width + x)]; }
  const float* pixel(int x, int y) const {
    return &rgb[3 * (size_t(y) * width + x)];
  }

  void fill(const Eigen::Vector3f& color);
};

// round(clamp(v,0,1) * 255)
uint8_t quantize8(float v);
float dequantize8(uint8_t v);

// 8-bit quantization round trip applied in place; this is what an image
// goes through when written to disk and reloaded.
Image quantized(const Image& img);

// 8-bit RGB PNG. Alpha, if present in the file, is composited over
// `background`. Throws ImageDecodeError / IoError.
Image read_png(const std::string& path, const Eigen::Vector3f& background);
void write_png(const std::string& path, const Image& img);

}  // namespace fewview
