#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dnerf/tensor_blob.hpp"

namespace dnerf {

// RGB float image, values nominally in [0, 1], row-major (y, x, channel).
struct Image {
  int width = 0, height = 0;
  std::vector<float> px;

  Image() = default;
  Image(int w, int h, float fill = 0.f) : width(w), height(h), px(std::size_t(w) * h * 3, fill) {}

  float& at(int y, int x, int c) { return px[(std::size_t(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return px[(std::size_t(y) * width + x) * 3 + c]; }
};

// 8-bit RGB PNG. Grayscale/palette/alpha inputs are expanded to RGB on load.
Image load_png(const std::filesystem::path& path, const std::string& field);

// Quantizes round-half-up after clamping to [0, 1]; writes atomically.
void save_png(const Image& img, const std::filesystem::path& path);

inline uint8_t quantize_u8(float v) {
  if (!(v > 0.f)) return 0;
  if (v >= 1.f) return 255;
  return uint8_t(v * 255.f + 0.5f);
}

TensorBlob image_to_blob(const Image& img);
Image image_from_blob(const TensorBlob& blob, const std::string& field);

}  // namespace dnerf
