#include "shapeseg/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ndgrad/optim.hpp"
#include "shapeseg/errors.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

using ndgrad::Act;
using ndgrad::real;
using ndgrad::Rng;

namespace {

ConvLayer make_conv(int in_ch, int out_ch, Rng& rng) {
  return {Tensor::uniform_init({out_ch, in_ch, 3, 3}, in_ch * 9, rng),
          Tensor::zeros({out_ch}, true)};
}

Tensor conv_relu(const Tensor& x, const ConvLayer& l) {
  return conv2d_relu(x, l.w, &l.b, 1, 1);
}

void append(std::vector<Tensor>& v, const Tensor& t) { v.push_back(t); }

}  // namespace

std::vector<Tensor> ShapePriorModel::encoder_params() const {
  std::vector<Tensor> p;
  for (const auto& l : enc) {
    append(p, l.w);
    append(p, l.b);
  }
  append(p, enc_mu_w);
  append(p, enc_mu_b);
  append(p, enc_logvar_w);
  append(p, enc_logvar_b);
  return p;
}

std::vector<Tensor> ShapePriorModel::decoder_params() const {
  std::vector<Tensor> p{dec_w, dec_b};
  for (const auto& l : dec) {
    append(p, l.w);
    append(p, l.b);
  }
  return p;
}

std::vector<Tensor> ShapePriorModel::trainable_params() const {
  std::vector<Tensor> p = encoder_params();
  if (!frozen_decoder) {
    for (const auto& t : decoder_params()) p.push_back(t);
  }
  return p;
}

ndgrad::NamedTensors ShapePriorModel::named_params() const {
  ndgrad::NamedTensors out;
  for (size_t i = 0; i < enc.size(); ++i) {
    out.emplace_back("enc.conv" + std::to_string(i + 1) + ".w", enc[i].w);
    out.emplace_back("enc.conv" + std::to_string(i + 1) + ".b", enc[i].b);
  }
  out.emplace_back("enc.mu.w", enc_mu_w);
  out.emplace_back("enc.mu.b", enc_mu_b);
  out.emplace_back("enc.logvar.w", enc_logvar_w);
  out.emplace_back("enc.logvar.b", enc_logvar_b);
  out.emplace_back("dec.dense.w", dec_w);
  out.emplace_back("dec.dense.b", dec_b);
  for (size_t i = 0; i < dec.size(); ++i) {
    out.emplace_back("dec.conv" + std::to_string(i + 1) + ".w", dec[i].w);
    out.emplace_back("dec.conv" + std::to_string(i + 1) + ".b", dec[i].b);
  }
  return out;
}

uint64_t ShapePriorModel::decoder_checksum() const {
  return ndgrad::byte_checksum(decoder_params());
}

ShapePriorModel build_vae(int latent_dim, int base_channels, Rng& rng) {
  if (latent_dim < 2) throw std::invalid_argument("build_vae: latent_dim must be >= 2");
  const int b = base_channels;
  ShapePriorModel m;
  m.latent_dim = latent_dim;
  m.base_channels = b;

  m.enc.push_back(make_conv(1, b, rng));
  m.enc.push_back(make_conv(b, b, rng));
  m.enc.push_back(make_conv(b, 2 * b, rng));
  m.enc.push_back(make_conv(2 * b, 2 * b, rng));
  m.enc.push_back(make_conv(2 * b, 4 * b, rng));
  m.enc.push_back(make_conv(4 * b, 4 * b, rng));
  const int flat = 4 * b * 4 * 4;
  m.enc_mu_w = Tensor::uniform_init({flat, latent_dim}, flat, rng);
  m.enc_mu_b = Tensor::zeros({latent_dim}, true);
  m.enc_logvar_w = Tensor::uniform_init({flat, latent_dim}, flat, rng);
  m.enc_logvar_b = Tensor::zeros({latent_dim}, true);

  m.dec_w = Tensor::uniform_init({latent_dim, flat}, latent_dim, rng);
  m.dec_b = Tensor::zeros({flat}, true);
  m.dec.push_back(make_conv(4 * b, 2 * b, rng));
  m.dec.push_back(make_conv(2 * b, 2 * b, rng));
  m.dec.push_back(make_conv(2 * b, b, rng));
  m.dec.push_back(make_conv(b, b, rng));
  m.dec.push_back(make_conv(b, b, rng));
  m.dec.push_back(make_conv(b, 1, rng));
  return m;
}

LatentCode encode(const ShapePriorModel& m, const Tensor& patches, Rng* noise) {
  if (patches.shape().size() != 4 || patches.dim(1) != 1 || patches.dim(2) != kPatchSize ||
      patches.dim(3) != kPatchSize)
    throw std::invalid_argument("encode: expected [N,1,32,32] patches");
  const int n = patches.dim(0);

  Tensor h = conv_relu(patches, m.enc[0]);
  h = conv_relu(h, m.enc[1]);
  h = maxpool2d(h, 2);
  h = conv_relu(h, m.enc[2]);
  h = conv_relu(h, m.enc[3]);
  h = maxpool2d(h, 2);
  h = conv_relu(h, m.enc[4]);
  h = conv_relu(h, m.enc[5]);
  h = maxpool2d(h, 2);
  h = reshape(h, {n, 4 * m.base_channels * 4 * 4});

  LatentCode code;
  code.mu = dense(h, m.enc_mu_w, m.enc_mu_b);
  code.logvar = dense(h, m.enc_logvar_w, m.enc_logvar_b);
  if (noise) {
    Tensor eps = Tensor::randn({n, m.latent_dim}, *noise);
    Tensor sigma = exp_act(mul_scalar(code.logvar, real(0.5)));
    code.sample = add(code.mu, mul(sigma, eps));
  } else {
    code.sample = code.mu;
  }
  return code;
}

Tensor decode(const ShapePriorModel& m, const Tensor& z) {
  if (z.shape().size() != 2 || z.dim(1) != m.latent_dim)
    throw std::invalid_argument("decode: expected [N," + std::to_string(m.latent_dim) + "] codes");
  const int n = z.dim(0);
  const int b = m.base_channels;

  Tensor h = relu(dense(z, m.dec_w, m.dec_b));
  h = reshape(h, {n, 4 * b, 4, 4});
  h = upsample2x(h);
  h = conv_relu(h, m.dec[0]);
  h = conv_relu(h, m.dec[1]);
  h = upsample2x(h);
  h = conv_relu(h, m.dec[2]);
  h = conv_relu(h, m.dec[3]);
  h = upsample2x(h);
  h = conv_relu(h, m.dec[4]);
  h = sigmoid(conv2d(h, m.dec[5].w, &m.dec[5].b, 1, 1));
  return h;
}

Tensor kl_per_sample(const Tensor& mu, const Tensor& logvar) {
  // -0.5 * sum_d (1 + logvar - mu^2 - exp(logvar))
  Tensor term = sub(add_scalar(logvar, real(1)), add(square(mu), exp_act(logvar)));
  return mul_scalar(sum_rows(term), real(-0.5));
}

Tensor kl_divergence(const LatentCode& code) {
  return mean(kl_per_sample(code.mu, code.logvar));
}

Tensor vae_loss(const Tensor& target, const Tensor& reconstruction, const LatentCode& code,
                real beta) {
  if (target.shape() != reconstruction.shape())
    throw std::invalid_argument("vae_loss: target and reconstruction shapes differ");
  for (size_t i = 0; i < reconstruction.size(); ++i) {
    const real v = reconstruction.at(i);
    if (!(v >= real(0)) || !(v <= real(1)))
      throw std::invalid_argument("vae_loss: reconstruction is not a probability map");
  }
  const real eps = real(1e-6);
  Tensor r = clamp(reconstruction, eps, real(1) - eps);
  Tensor one_minus_t = affine_scalar(target, real(-1), real(1));
  Tensor one_minus_r = affine_scalar(r, real(-1), real(1));
  Tensor bce = neg(mean(add(mul(target, log_act(r)), mul(one_minus_t, log_act(one_minus_r)))));
  if (beta == real(0)) return bce;
  return add(bce, mul_scalar(kl_divergence(code), beta));
}

Tensor patches_to_tensor(const std::vector<ShapePatch>& patches, const std::vector<int>& idx) {
  const int n = static_cast<int>(idx.size());
  std::vector<real> data(static_cast<size_t>(n) * kPatchSize * kPatchSize);
  for (int i = 0; i < n; ++i) {
    const ShapePatch& p = patches[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    if (p.height != kPatchSize || p.width != kPatchSize)
      throw std::invalid_argument("patches_to_tensor: patch is not 32x32");
    for (size_t j = 0; j < p.size(); ++j)
      data[static_cast<size_t>(i) * kPatchSize * kPatchSize + j] = static_cast<real>(p.data[j]);
  }
  return Tensor::from_data({n, 1, kPatchSize, kPatchSize}, std::move(data));
}

ShapePatch tensor_to_patch(const Tensor& t, int index) {
  ShapePatch p(kPatchSize, kPatchSize);
  const size_t off = static_cast<size_t>(index) * kPatchSize * kPatchSize;
  for (size_t j = 0; j < p.size(); ++j) p.data[j] = static_cast<float>(t.at(off + j));
  return p;
}

namespace {

double mask_iou(const ShapePatch& a, const ShapePatch& b) {
  int inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool fa = a.data[i] > 0.5f, fb = b.data[i] > 0.5f;
    inter += fa && fb;
    uni += fa || fb;
  }
  return uni > 0 ? static_cast<double>(inter) / uni : 1.0;
}

}  // namespace

PriorTrainResult train_prior(ShapePriorModel& model, const std::vector<ShapePatch>& patches,
                             const PriorTrainConfig& cfg, Rng& rng) {
  if (patches.size() < 8)
    throw std::invalid_argument("train_prior: need at least 8 patches, got " +
                                std::to_string(patches.size()));

  Rng order_rng = rng.stream("prior-order");
  Rng noise_rng = rng.stream("prior-noise");

  const int n_total = static_cast<int>(patches.size());
  const int n_holdout = std::max(1, static_cast<int>(n_total * cfg.holdout_fraction));
  std::vector<int> indices(static_cast<size_t>(n_total));
  std::iota(indices.begin(), indices.end(), 0);
  order_rng.shuffle(indices);
  std::vector<int> holdout(indices.end() - n_holdout, indices.end());
  std::vector<int> train(indices.begin(), indices.end() - n_holdout);

  ndgrad::Adam opt(model.trainable_params(), {static_cast<real>(cfg.lr)});
  PriorTrainResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(train);
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < train.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(train.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<int> batch(train.begin() + static_cast<std::ptrdiff_t>(start),
                             train.begin() + static_cast<std::ptrdiff_t>(end));
      Tensor x = patches_to_tensor(patches, batch);
      LatentCode code = encode(model, x, &noise_rng);
      Tensor recon = decode(model, code.sample);
      Tensor loss = vae_loss(x, recon, code, cfg.beta);
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) throw NumericError("train_prior: loss diverged (non-finite)");
      opt.zero_grad();
      ndgrad::backward(loss);
      opt.step();
      epoch_loss += lv;
      ++batches;
    }
    result.loss_history.push_back(epoch_loss / std::max(1, batches));
  }

  // held-out reconstruction IoU from the mean code
  double iou_sum = 0.0;
  Tensor hx = patches_to_tensor(patches, holdout);
  LatentCode hc = encode(model, hx, nullptr);
  Tensor hrecon = decode(model, hc.sample);
  for (size_t i = 0; i < holdout.size(); ++i) {
    iou_sum += mask_iou(patches[static_cast<size_t>(holdout[i])],
                        tensor_to_patch(hrecon, static_cast<int>(i)));
  }
  result.heldout_iou = iou_sum / static_cast<double>(holdout.size());
  return result;
}

void freeze_decoder(ShapePriorModel& model) {
  model.frozen_decoder = true;
  // Frozen weights drop out of gradient tracking entirely; gradients still
  // flow through the decoder ops to the latent input.
  for (Tensor t : model.decoder_params()) t.set_requires_grad(false);
}

void reinit_encoder(ShapePriorModel& model, Rng& rng) {
  const int b = model.base_channels;
  model.enc.clear();
  model.enc.push_back(make_conv(1, b, rng));
  model.enc.push_back(make_conv(b, b, rng));
  model.enc.push_back(make_conv(b, 2 * b, rng));
  model.enc.push_back(make_conv(2 * b, 2 * b, rng));
  model.enc.push_back(make_conv(2 * b, 4 * b, rng));
  model.enc.push_back(make_conv(4 * b, 4 * b, rng));
  const int flat = 4 * b * 4 * 4;
  model.enc_mu_w = Tensor::uniform_init({flat, model.latent_dim}, flat, rng);
  model.enc_mu_b = Tensor::zeros({model.latent_dim}, true);
  model.enc_logvar_w = Tensor::uniform_init({flat, model.latent_dim}, flat, rng);
  model.enc_logvar_b = Tensor::zeros({model.latent_dim}, true);
}

std::vector<ShapePatch> sample_shapes(const ShapePriorModel& model, int n, Rng& rng) {
  Tensor z = Tensor::randn({n, model.latent_dim}, rng);
  Tensor decoded = decode(model, z);
  std::vector<ShapePatch> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(tensor_to_patch(decoded, i));
  return out;
}

void save_prior(const std::string& path, const ShapePriorModel& model,
                const nlohmann::json& extra_meta) {
  nlohmann::json meta = extra_meta;
  meta["kind"] = "shape-prior-vae";
  meta["latent_dim"] = model.latent_dim;
  meta["base_channels"] = model.base_channels;
  meta["frozen_decoder"] = model.frozen_decoder;
  ndgrad::save_weights(path, model.named_params(), meta);
}

ShapePriorModel load_prior(const std::string& path) {
  ndgrad::WeightFile wf = ndgrad::load_weights(path);
  if (wf.meta.value("kind", "") != "shape-prior-vae")
    throw std::runtime_error("load_prior: " + path + " is not a shape prior container");
  ShapePriorModel m;
  m.latent_dim = wf.meta.at("latent_dim");
  m.base_channels = wf.meta.at("base_channels");
  m.frozen_decoder = wf.meta.value("frozen_decoder", false);
  for (int i = 1; i <= 6; ++i)
    m.enc.push_back({wf.find("enc.conv" + std::to_string(i) + ".w"),
                     wf.find("enc.conv" + std::to_string(i) + ".b")});
  m.enc_mu_w = wf.find("enc.mu.w");
  m.enc_mu_b = wf.find("enc.mu.b");
  m.enc_logvar_w = wf.find("enc.logvar.w");
  m.enc_logvar_b = wf.find("enc.logvar.b");
  m.dec_w = wf.find("dec.dense.w");
  m.dec_b = wf.find("dec.dense.b");
  for (int i = 1; i <= 6; ++i)
    m.dec.push_back({wf.find("dec.conv" + std::to_string(i) + ".w"),
                     wf.find("dec.conv" + std::to_string(i) + ".b")});
  for (Tensor t : m.encoder_params()) t.set_requires_grad(true);
  for (Tensor t : m.decoder_params()) t.set_requires_grad(!m.frozen_decoder);
  return m;
}

NDGRAD_NS_END
}  // namespace shapeseg
