#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ndgrad/real.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

// Single-channel image, row-major floats in [0,1].
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int h, int w, float fill = 0.f)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  float& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }
};

// Instance label map: 0 = background, 1..K = instance ids.
struct LabelImage {
  int height = 0;
  int width = 0;
  std::vector<uint32_t> data;

  LabelImage() = default;
  LabelImage(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 0) {}

  uint32_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  uint32_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }
  uint32_t max_id() const {
    uint32_t m = 0;
    for (uint32_t v : data) m = std::max(m, v);
    return m;
  }
};

struct InstanceMeta {
  int id = 0;
  // tight box in pixels, [x0, x1) x [y0, y1)
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int area = 0;
  bool occluded = false;
};

// A rendered scene with ground truth, the unit of detector training data.
struct SceneSample {
  GrayImage image;
  LabelImage labels;
  std::vector<InstanceMeta> meta;
  uint64_t seed = 0;
};

NDGRAD_NS_END
}  // namespace shapeseg
