#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cxr {

// Grayscale raster, intensities in [0, max_value]. CXR sources differ in bit
// depth (8-bit PNG, 12-bit JSRT raw), so the scale travels with the pixels.
struct Image {
  int width = 0;
  int height = 0;
  float max_value = 255.0f;
  std::vector<float> px;

  Image() = default;
  Image(int w, int h, float fill = 0.0f, float maxv = 255.0f)
      : width(w), height(h), max_value(maxv), px(static_cast<size_t>(w) * h, fill) {}

  float& at(int y, int x) { return px[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const { return px[static_cast<size_t>(y) * width + x]; }
  bool empty() const { return width <= 0 || height <= 0; }
  size_t size() const { return px.size(); }
};

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> px;

  Mask() = default;
  Mask(int w, int h, uint8_t fill = 0)
      : width(w), height(h), px(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int y, int x) { return px[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return px[static_cast<size_t>(y) * width + x]; }
  bool empty() const { return width <= 0 || height <= 0; }
  long area() const;
};

// H x W x C float tensor, channel-minor storage; backbone input layout.
struct Tensor3 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Tensor3() = default;
  Tensor3(int h, int w, int c)
      : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, 0.0f) {}

  float& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

Image resize_bilinear(const Image& in, int out_w, int out_h);

// Dispatches on extension: .pgm and .img/.IMG (JSRT 2048x2048 12-bit
// big-endian raw) are read natively, everything else through OpenCV.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

Image load_pgm(const std::string& path);
void save_pgm(const Image& img, const std::string& path);
Image load_jsrt_raw(const std::string& path);

// RGB buffer as 3 planes interleaved per pixel; used by overlays.
void save_rgb(const std::vector<uint8_t>& rgb, int width, int height, const std::string& path);

Mask load_mask(const std::string& path);   // nonzero pixel -> 1
void save_mask(const Mask& mask, const std::string& path);

}  // namespace cxr
