#pragma once

#include <string>

#include "shapeseg/image.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

// Reads an 8- or 16-bit PNG as a [0,1] gray image. Multi-channel inputs are
// converted by luminance average; 16-bit samples are divided by the per-image
// maximum, 8-bit by 255.
GrayImage read_gray_png(const std::string& path);

// Reads a 16-bit (or 8-bit) PNG as an instance label map, pixel value = id.
LabelImage read_label_png(const std::string& path);

void write_gray_png(const std::string& path, const GrayImage& img);
void write_label_png(const std::string& path, const LabelImage& labels);

// 8-bit RGB, interleaved, for overlays.
void write_rgb_png(const std::string& path, int height, int width,
                   const std::vector<uint8_t>& rgb);

NDGRAD_NS_END
}  // namespace shapeseg
