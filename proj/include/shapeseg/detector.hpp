#pragma once

#include <string>
#include <vector>

#include "ndgrad/ops.hpp"
#include "ndgrad/weights.hpp"
#include "shapeseg/imgproc.hpp"
#include "shapeseg/prior.hpp"
#include "shapeseg/stn.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

using ndgrad::real;
using ndgrad::Tensor;

struct DetectorConfig {
  int s_cell = 16;
  int s_patch = 32;
  real s_min = 1.0, s_max = 2.0;  // box scale range, in cells
  real r_max = 1.5;               // max aspect ratio
  real alpha = 0.01;              // edge loss regularizer
  real beta_kl = 5e-3;            // KL weight during detector training
  int input_h = 256, input_w = 256;
  double lr = 1e-3;
  int epochs = 20;
  int batch_size = 4;
  uint64_t seed = 1234;
  bool equalize = false;
  double equalize_factor = 1.2;
  double truncate_fraction = 0.8;

  int grid_h() const { return input_h / s_cell; }
  int grid_w() const { return input_w / s_cell; }
  int cells() const { return grid_h() * grid_w(); }
  void validate() const;
};

// 8 conv layers (3x3, relu) with a max pooling after every second one, then a
// 1x1 head to the 5 feature channels (presence, scale, ratio, x, y).
// Channels 16,16 / 32,32 / 64,64 / 64,64; downsampling 16 = S_cell.
struct LocalizationNet {
  std::vector<ConvLayer> conv;  // 8
  ConvLayer head;

  std::vector<Tensor> params() const;
  ndgrad::NamedTensors named_params() const;
};

LocalizationNet build_localization_net(ndgrad::Rng& rng);
// image [1,1,H,W] -> raw features [1,5,H/16,W/16]
Tensor loc_forward(const LocalizationNet& net, const Tensor& image);

// Decoded per-cell parameter vectors, each of length grid_h*grid_w.
struct GridParams {
  Tensor presence;    // sigmoid(f_p), in (0,1)
  Tensor scale;       // sigmoid(f_s)*(S_max-S_min)+S_min
  Tensor ratio;       // exp(tanh(f_r)*log R_max)
  Tensor sqrt_ratio;  // exp(0.5*tanh(f_r)*log R_max)
  Tensor lx, ly;      // 0.5*tanh(f_x), 0.5*tanh(f_y)
};

GridParams param_map(const Tensor& features, const DetectorConfig& cfg);

// Scalar versions used by post-processing and tests.
struct LValues {
  real presence, scale, ratio, lx, ly;
};
LValues param_map_cell(real f_presence, real f_scale, real f_ratio, real f_x, real f_y,
                       const DetectorConfig& cfg);
stn::BoxParams box_from_params(const LValues& v, int cell_row, int cell_col,
                               const DetectorConfig& cfg);

// Eq.-style edge loss: 1 - mean(min^2(G_img, G_rec)) / (mean(G_rec) + alpha).
Tensor edge_loss(const Tensor& g_image, const Tensor& g_reconstruction, real alpha);

// Everything one pass produces; tensors stay alive for backward().
struct ForwardResult {
  GridParams grid;
  Tensor patches;      // [N,1,32,32] image crops
  LatentCode code;     // per-cell latent codes
  Tensor decoded;      // [N,1,32,32] segmentation masks in (0,1)
  Tensor g_rec;        // [1,1,H,W] stitched gradient-map reconstruction
  Tensor edge;         // scalar edge loss vs the image gradient map
  Tensor kl_vec;       // [N] per-cell KL
  int grid_h = 0, grid_w = 0;
};

// Differentiable Sobel magnitude of mask patches, scaled so a hard 0/1 edge
// is ~1.
Tensor patch_gradient_map(const Tensor& masks);

// Forward pass from raw feature maps (the network-free entry point used by
// gradient checks) and from the full network.
ForwardResult detector_forward_features(const Tensor& image, const Tensor& g_image,
                                        const Tensor& features, const ShapePriorModel& prior,
                                        const DetectorConfig& cfg, ndgrad::Rng* latent_noise);
ForwardResult detector_forward(const Tensor& image, const Tensor& g_image,
                               const LocalizationNet& net, const ShapePriorModel& prior,
                               const DetectorConfig& cfg, ndgrad::Rng* latent_noise);

// edge + beta_kl * mean KL over cells with presence > 0.01 (0 if none).
Tensor total_loss(const ForwardResult& fr, real beta_kl);

// Preprocessing: optional equalization, resize to the network input size,
// Sobel + truncation for the training target.
GrayImage preprocess_image(const GrayImage& img, const DetectorConfig& cfg);
GrayImage gradient_target(const GrayImage& preprocessed, const DetectorConfig& cfg);
Tensor image_to_tensor(const GrayImage& img);

struct DetectorModel {
  LocalizationNet loc;
  ShapePriorModel prior;
  DetectorConfig cfg;
};

struct TrainLogEntry {
  int epoch = 0;
  double edge_loss = 0.0;
  double kl = 0.0;
  double wall_s = 0.0;
};

// Trains localization net + encoder on scene images; requires a frozen
// decoder. Writes per-epoch checkpoints and a JSON-lines log when out_dir is
// non-empty.
std::vector<TrainLogEntry> train_detector(DetectorModel& model,
                                          const std::vector<SceneSample>& scenes,
                                          ndgrad::Rng& rng, const std::string& out_dir = "");

void save_detector(const std::string& path, const DetectorModel& model,
                   const nlohmann::json& extra_meta = nlohmann::json::object());
DetectorModel load_detector(const std::string& path);

NDGRAD_NS_END
}  // namespace shapeseg
