#pragma once

#include "shapeseg/image.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

// Sobel magnitude sqrt(Gx^2 + Gy^2) with replicate border padding, divided by
// its maximum so the output spans [0,1]. A constant image maps to all zeros.
GrayImage sobel_gradient_map(const GrayImage& img);

// Clips at factor * mean, then stretches the result linearly to [0,1].
// Constant (and all-zero) images are returned unchanged.
GrayImage equalize_clip(const GrayImage& img, float factor = 1.2f);

// Clips at fraction * max and divides by the clip value. A zero map is
// returned unchanged.
GrayImage truncate_normalize(const GrayImage& g, float fraction = 0.8f);

// Bilinear resize; used to bring inputs to the network size.
GrayImage resize_bilinear(const GrayImage& img, int out_h, int out_w);
LabelImage resize_nearest(const LabelImage& labels, int out_h, int out_w);

NDGRAD_NS_END
}  // namespace shapeseg
