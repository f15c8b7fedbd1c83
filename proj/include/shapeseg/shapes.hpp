#pragma once

#include <string>
#include <vector>

#include "ndgrad/rng.hpp"
#include "shapeseg/image.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

// 32x32 mask patch in [0,1], antialiased at the boundary.
using ShapePatch = GrayImage;
inline constexpr int kPatchSize = 32;

// Ellipse rasterized into a patch, rotated by `angle_deg`, scaled so the
// major axis spans `fill_fraction` of the patch. The rng jitters the center
// by up to half a pixel.
ShapePatch gen_ellipse_patch(double a_over_b, double angle_deg, double fill_fraction,
                             ndgrad::Rng& rng);

// Random displacement field per axis, Gaussian-smoothed (width sigma),
// normalized to unit RMS and scaled by alpha pixels. alpha = 0 is the
// identity.
ShapePatch elastic_deform(const ShapePatch& patch, double alpha, double sigma, ndgrad::Rng& rng);
GrayImage elastic_deform_image(const GrayImage& img, double alpha, double sigma, ndgrad::Rng& rng);

// 360/step rotations about the patch center, bilinear resampling.
std::vector<ShapePatch> augment_rotations(const ShapePatch& patch, int step_deg = 30);

// n deformed ellipses with ratio ~ U[1, r_max_shape] and angle ~ U[0,360).
std::vector<ShapePatch> gen_shape_dataset(int n, double r_max_shape, double alpha, double sigma,
                                          ndgrad::Rng& rng);

// Crops each instance's tight box (squared, 10% margin) to a 32x32 patch.
// Instances touching the image border are skipped.
std::vector<ShapePatch> extract_annotation_patches(const LabelImage& labels);

struct SceneConfig {
  int size = 256;
  int s_cell = 16;
  double s_min = 1.0, s_max = 2.0;  // instance diameter range, in cells
  double r_max_shape = 1.5;
  double contrast = 0.6;
  double background = 0.2;
  double noise_sigma = 0.02;
  double elastic_alpha = 2.0;
  double elastic_sigma = 4.0;
};

// Renders k deformed ellipses onto a noisy background with a consistent
// label map. Centers are kept >= 0.7 * mean diameter apart by rejection
// sampling; overlaps resolve later-id-wins and the losing instance is marked
// occluded. Returns fewer instances if placement fails after 1000 tries.
SceneSample gen_toy_scene(int k, const SceneConfig& cfg, ndgrad::Rng& rng);

// Scene persistence: image PNG (8-bit), label PNG (16-bit, value = id), and
// a JSON sidecar with boxes and the seed. `stem` is the path without suffix.
void save_scene(const std::string& stem, const SceneSample& scene);
SceneSample load_scene(const std::string& stem);

NDGRAD_NS_END
}  // namespace shapeseg
