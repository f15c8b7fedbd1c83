#pragma once

#include <vector>

#include "shapeseg/detector.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

// Binary mask in image coordinates with its presence score and provenance.
struct InstanceMask {
  int height = 0, width = 0;
  std::vector<uint8_t> mask;
  real score = 0;
  int cell_index = 0;
  stn::BoxParams box;
  int area = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // tight bounds, [x0,x1) x [y0,y1)

  void recompute_bounds();
};

// Decoded cell masks above the presence threshold, warped to image
// coordinates and binarized; empty masks are dropped.
std::vector<InstanceMask> extract_instances(const ForwardResult& fr, const DetectorConfig& cfg,
                                            real presence_threshold = 0.1,
                                            real mask_threshold = 0.5);

// Mask suppression as an all-comparisons rule: mask m is kept iff its score
// beats every mask n overlapping it by more than p_non_max of m's own area
// (score ties break toward the lower cell index). Comparisons are evaluated
// against the original input set, not incrementally.
std::vector<InstanceMask> nms_masks(const std::vector<InstanceMask>& masks, real p_non_max = 0.1);

// Conventional greedy alternative, kept behind a config switch.
std::vector<InstanceMask> nms_masks_greedy(const std::vector<InstanceMask>& masks,
                                           real p_non_max = 0.1);

// Label image with ids assigned in descending score (1 = best).
LabelImage masks_to_labels(const std::vector<InstanceMask>& masks, int height, int width);

// Label PNG + scores JSON + overlay PNG under the given stem.
void write_instance_results(const std::string& stem, const std::vector<InstanceMask>& masks,
                            const GrayImage& image);

NDGRAD_NS_END
}  // namespace shapeseg
