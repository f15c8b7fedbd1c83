#pragma once

#include <string>
#include <vector>

#include "ndgrad/ops.hpp"
#include "ndgrad/weights.hpp"
#include "shapeseg/shapes.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

using ndgrad::Tensor;

struct ConvLayer {
  Tensor w, b;
};

// VAE over 32x32 shape patches. Encoder: 6 conv layers with 3 poolings
// (channels base -> 2*base -> 4*base, spatial 32 -> 16 -> 8 -> 4) and dense
// heads for mu and log sigma^2. The decoder mirrors it with 3 upsamplings and
// a final sigmoid. After pretraining the decoder is frozen and acts as the
// shape prior; the encoder is reinitialized and trained with the detector.
struct ShapePriorModel {
  int latent_dim = 16;
  int base_channels = 16;
  bool frozen_decoder = false;

  std::vector<ConvLayer> enc;  // 6
  Tensor enc_mu_w, enc_mu_b;
  Tensor enc_logvar_w, enc_logvar_b;

  Tensor dec_w, dec_b;
  std::vector<ConvLayer> dec;  // 6

  std::vector<Tensor> encoder_params() const;
  std::vector<Tensor> decoder_params() const;
  std::vector<Tensor> trainable_params() const;  // honors frozen_decoder
  ndgrad::NamedTensors named_params() const;
  uint64_t decoder_checksum() const;
};

struct LatentCode {
  Tensor mu, logvar, sample;  // [N, latent_dim]
};

ShapePriorModel build_vae(int latent_dim, int base_channels, ndgrad::Rng& rng);

// noise == nullptr decodes from mu (inference); otherwise the standard
// reparameterized draw mu + exp(logvar/2) * eps.
LatentCode encode(const ShapePriorModel& model, const Tensor& patches, ndgrad::Rng* noise);
Tensor decode(const ShapePriorModel& model, const Tensor& z);

// -0.5 * sum_d(1 + logvar - mu^2 - exp(logvar)) per sample -> [N].
Tensor kl_per_sample(const Tensor& mu, const Tensor& logvar);
// Batch mean of the above.
Tensor kl_divergence(const LatentCode& code);

// Pixelwise binary cross-entropy (mean) + beta * kl_divergence.
Tensor vae_loss(const Tensor& target, const Tensor& reconstruction, const LatentCode& code,
                ndgrad::real beta);

struct PriorTrainConfig {
  int epochs = 30;
  int batch_size = 32;
  ndgrad::real beta = 1.0;
  double lr = 1e-3;
  double holdout_fraction = 0.1;
};

struct PriorTrainResult {
  std::vector<double> loss_history;  // per-epoch mean
  double heldout_iou = 0.0;          // reconstruction IoU at threshold 0.5
};

PriorTrainResult train_prior(ShapePriorModel& model, const std::vector<ShapePatch>& patches,
                             const PriorTrainConfig& cfg, ndgrad::Rng& rng);

void freeze_decoder(ShapePriorModel& model);
void reinit_encoder(ShapePriorModel& model, ndgrad::Rng& rng);

std::vector<ShapePatch> sample_shapes(const ShapePriorModel& model, int n, ndgrad::Rng& rng);

void save_prior(const std::string& path, const ShapePriorModel& model,
                const nlohmann::json& extra_meta = nlohmann::json::object());
ShapePriorModel load_prior(const std::string& path);

// [indices into patches] -> [N,1,32,32] tensor
Tensor patches_to_tensor(const std::vector<ShapePatch>& patches, const std::vector<int>& idx);
ShapePatch tensor_to_patch(const Tensor& t, int index);

NDGRAD_NS_END
}  // namespace shapeseg
