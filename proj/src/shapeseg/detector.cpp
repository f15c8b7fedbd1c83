#include "shapeseg/detector.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ndgrad/optim.hpp"
#include "shapeseg/errors.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

using ndgrad::Rng;

void DetectorConfig::validate() const {
  if (!(s_max > s_min) || !(s_min > 0))
    throw std::invalid_argument("DetectorConfig: requires S_max > S_min > 0");
  if (!(r_max >= 1)) throw std::invalid_argument("DetectorConfig: requires R_max >= 1");
  if (!(alpha > 0)) throw std::invalid_argument("DetectorConfig: requires alpha > 0");
  if (s_cell <= 0 || input_h % s_cell != 0 || input_w % s_cell != 0)
    throw std::invalid_argument("DetectorConfig: input size must be divisible by S_cell");
}

std::vector<Tensor> LocalizationNet::params() const {
  std::vector<Tensor> p;
  for (const auto& l : conv) {
    p.push_back(l.w);
    p.push_back(l.b);
  }
  p.push_back(head.w);
  p.push_back(head.b);
  return p;
}

ndgrad::NamedTensors LocalizationNet::named_params() const {
  ndgrad::NamedTensors out;
  for (size_t i = 0; i < conv.size(); ++i) {
    out.emplace_back("loc.conv" + std::to_string(i + 1) + ".w", conv[i].w);
    out.emplace_back("loc.conv" + std::to_string(i + 1) + ".b", conv[i].b);
  }
  out.emplace_back("loc.head.w", head.w);
  out.emplace_back("loc.head.b", head.b);
  return out;
}

LocalizationNet build_localization_net(Rng& rng) {
  auto make = [&rng](int in_ch, int out_ch, int k) {
    return ConvLayer{Tensor::uniform_init({out_ch, in_ch, k, k}, in_ch * k * k, rng),
                     Tensor::zeros({out_ch}, true)};
  };
  LocalizationNet net;
  const int plan[8][2] = {{1, 16}, {16, 16}, {16, 32}, {32, 32},
                          {32, 64}, {64, 64}, {64, 64}, {64, 64}};
  for (const auto& [in, out] : plan) net.conv.push_back(make(in, out, 3));
  net.head = make(64, 5, 1);
  return net;
}

Tensor loc_forward(const LocalizationNet& net, const Tensor& image) {
  Tensor h = image;
  for (size_t i = 0; i < net.conv.size(); ++i) {
    h = conv2d_relu(h, net.conv[i].w, &net.conv[i].b, 1, 1);
    if (i % 2 == 1) h = maxpool2d(h, 2);
  }
  return conv2d(h, net.head.w, &net.head.b, 1, 0);
}

GridParams param_map(const Tensor& features, const DetectorConfig& cfg) {
  if (features.shape().size() != 4 || features.dim(0) != 1 || features.dim(1) != 5)
    throw std::invalid_argument("param_map: expected [1,5,gh,gw] features");
  const int cells = features.dim(2) * features.dim(3);
  auto chan = [&](int c) { return reshape(slice_channel(features, c), {cells}); };

  GridParams g;
  g.presence = sigmoid(chan(0));
  g.scale = affine_scalar(sigmoid(chan(1)), cfg.s_max - cfg.s_min, cfg.s_min);
  const real log_r = std::log(cfg.r_max);
  Tensor tr = tanh_act(chan(2));
  g.ratio = exp_act(mul_scalar(tr, log_r));
  g.sqrt_ratio = exp_act(mul_scalar(tr, log_r / 2));
  g.lx = mul_scalar(tanh_act(chan(3)), real(0.5));
  g.ly = mul_scalar(tanh_act(chan(4)), real(0.5));
  return g;
}

LValues param_map_cell(real f_presence, real f_scale, real f_ratio, real f_x, real f_y,
                       const DetectorConfig& cfg) {
  auto sig = [](real v) { return real(1) / (real(1) + std::exp(-v)); };
  LValues out;
  out.presence = sig(f_presence);
  out.scale = sig(f_scale) * (cfg.s_max - cfg.s_min) + cfg.s_min;
  out.ratio = std::exp(std::tanh(f_ratio) * std::log(cfg.r_max));
  out.lx = real(0.5) * std::tanh(f_x);
  out.ly = real(0.5) * std::tanh(f_y);
  return out;
}

stn::BoxParams box_from_params(const LValues& v, int cell_row, int cell_col,
                               const DetectorConfig& cfg) {
  stn::BoxParams b;
  b.cell_row = cell_row;
  b.cell_col = cell_col;
  b.x_cell = (static_cast<real>(cell_col) + real(0.5)) * cfg.s_cell;
  b.y_cell = (static_cast<real>(cell_row) + real(0.5)) * cfg.s_cell;
  const real root = std::sqrt(v.ratio);
  b.h_obj = v.scale * cfg.s_cell / root;
  b.w_obj = v.scale * cfg.s_cell * root;
  b.o_x = v.lx * cfg.s_cell;
  b.o_y = v.ly * cfg.s_cell;
  b.presence = v.presence;
  return b;
}

Tensor edge_loss(const Tensor& g_image, const Tensor& g_reconstruction, real alpha) {
  if (g_image.shape() != g_reconstruction.shape())
    throw std::invalid_argument("edge_loss: gradient map shapes differ");
  Tensor numer = mean(square(min_pairwise(g_image, g_reconstruction)));
  Tensor denom = add_scalar(mean(g_reconstruction), alpha);
  return affine_scalar(div(numer, denom), real(-1), real(1));
}

Tensor patch_gradient_map(const Tensor& masks) {
  static const real kx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  static const real ky[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  Tensor wx = Tensor::from_data({1, 1, 3, 3}, std::vector<real>(kx, kx + 9));
  Tensor wy = Tensor::from_data({1, 1, 3, 3}, std::vector<real>(ky, ky + 9));
  Tensor gx = conv2d(masks, wx, nullptr, 1, 1);
  Tensor gy = conv2d(masks, wy, nullptr, 1, 1);
  Tensor mag = sqrt_act(add_scalar(add(square(gx), square(gy)), real(1e-12)));
  // max response of a hard 0/1 edge is 4*sqrt(2)
  return mul_scalar(mag, real(1) / (real(4) * std::sqrt(real(2))));
}

namespace {

Tensor cell_center_tensor(const DetectorConfig& cfg, bool columns) {
  std::vector<real> v(static_cast<size_t>(cfg.cells()));
  for (int r = 0; r < cfg.grid_h(); ++r)
    for (int c = 0; c < cfg.grid_w(); ++c)
      v[static_cast<size_t>(r) * cfg.grid_w() + c] =
          ((columns ? c : r) + real(0.5)) * cfg.s_cell;
  return Tensor::from_data({cfg.cells()}, std::move(v));
}

}  // namespace

ForwardResult detector_forward_features(const Tensor& image, const Tensor& g_image,
                                        const Tensor& features, const ShapePriorModel& prior,
                                        const DetectorConfig& cfg, Rng* latent_noise) {
  cfg.validate();
  if (image.shape().size() != 4 || image.dim(2) != cfg.input_h || image.dim(3) != cfg.input_w)
    throw std::invalid_argument("detector_forward: image does not match configured input size");
  if (!prior.frozen_decoder)
    throw std::invalid_argument("detector_forward: shape prior decoder must be frozen");

  ForwardResult fr;
  fr.grid_h = features.dim(2);
  fr.grid_w = features.dim(3);
  fr.grid = param_map(features, cfg);

  // box geometry as per-cell tensors
  Tensor x_cell = cell_center_tensor(cfg, true);
  Tensor y_cell = cell_center_tensor(cfg, false);
  Tensor scale_px = mul_scalar(fr.grid.scale, static_cast<real>(cfg.s_cell));
  Tensor w_obj = mul(scale_px, fr.grid.sqrt_ratio);
  Tensor h_obj = div(scale_px, fr.grid.sqrt_ratio);
  Tensor cx = add(x_cell, mul_scalar(fr.grid.lx, static_cast<real>(cfg.s_cell)));
  Tensor cy = add(y_cell, mul_scalar(fr.grid.ly, static_cast<real>(cfg.s_cell)));

  // crop transform (normalized frames)
  Tensor sx = mul_scalar(w_obj, real(1) / cfg.input_w);
  Tensor sy = mul_scalar(h_obj, real(1) / cfg.input_h);
  Tensor tx = affine_scalar(cx, real(2) / cfg.input_w, real(-1));
  Tensor ty = affine_scalar(cy, real(2) / cfg.input_h, real(-1));

  fr.patches = crop_batch(image, sx, sy, tx, ty, cfg.s_patch);
  fr.code = encode(prior, fr.patches, latent_noise);
  fr.decoded = decode(prior, fr.code.sample);
  Tensor patch_grad = patch_gradient_map(fr.decoded);

  // stitch transform = inverse crop
  Tensor ones = Tensor::full({cfg.cells()}, real(1));
  Tensor ssx = div(ones, sx);
  Tensor ssy = div(ones, sy);
  Tensor stx = neg(div(tx, sx));
  Tensor sty = neg(div(ty, sy));

  fr.g_rec = stitch_add(patch_grad, ssx, ssy, stx, sty, fr.grid.presence, cfg.input_h,
                        cfg.input_w);
  fr.edge = edge_loss(g_image, fr.g_rec, cfg.alpha);
  fr.kl_vec = kl_per_sample(fr.code.mu, fr.code.logvar);
  return fr;
}

ForwardResult detector_forward(const Tensor& image, const Tensor& g_image,
                               const LocalizationNet& net, const ShapePriorModel& prior,
                               const DetectorConfig& cfg, Rng* latent_noise) {
  return detector_forward_features(image, g_image, loc_forward(net, image), prior, cfg,
                                   latent_noise);
}

Tensor total_loss(const ForwardResult& fr, real beta_kl) {
  if (beta_kl == real(0)) return fr.edge;
  // Mask built from the current presence values; regularizing dead cells
  // would only pin their codes, so they are excluded (stop-gradient mask).
  std::vector<real> mask(fr.grid.presence.size(), real(0));
  int live = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (fr.grid.presence.at(i) > real(0.01)) {
      mask[i] = real(1);
      ++live;
    }
  }
  if (live == 0) return fr.edge;
  const int n_cells = static_cast<int>(mask.size());
  Tensor m = Tensor::from_data({n_cells}, std::move(mask));
  Tensor kl_mean = mul_scalar(sum(mul(fr.kl_vec, m)), real(1) / static_cast<real>(live));
  return add(fr.edge, mul_scalar(kl_mean, beta_kl));
}

GrayImage preprocess_image(const GrayImage& img, const DetectorConfig& cfg) {
  GrayImage out = img;
  if (cfg.equalize) out = equalize_clip(out, static_cast<float>(cfg.equalize_factor));
  if (out.height != cfg.input_h || out.width != cfg.input_w)
    out = resize_bilinear(out, cfg.input_h, cfg.input_w);
  return out;
}

GrayImage gradient_target(const GrayImage& preprocessed, const DetectorConfig& cfg) {
  return truncate_normalize(sobel_gradient_map(preprocessed),
                            static_cast<float>(cfg.truncate_fraction));
}

Tensor image_to_tensor(const GrayImage& img) {
  std::vector<real> v(img.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<real>(img.data[i]);
  return Tensor::from_data({1, 1, img.height, img.width}, std::move(v));
}

std::vector<TrainLogEntry> train_detector(DetectorModel& model,
                                          const std::vector<SceneSample>& scenes,
                                          Rng& rng, const std::string& out_dir) {
  model.cfg.validate();
  if (scenes.empty()) throw std::invalid_argument("train_detector: no training scenes");
  if (!model.prior.frozen_decoder)
    throw std::invalid_argument("train_detector: refusing to run with an unfrozen decoder");

  const uint64_t frozen_hash = model.prior.decoder_checksum();
  Rng order_rng = rng.stream("detector-order");
  Rng noise_rng = rng.stream("latent-noise");

  // Preprocess once; images and targets are reused every epoch.
  std::vector<Tensor> images, targets;
  images.reserve(scenes.size());
  targets.reserve(scenes.size());
  for (const auto& s : scenes) {
    GrayImage pre = preprocess_image(s.image, model.cfg);
    images.push_back(image_to_tensor(pre));
    targets.push_back(image_to_tensor(gradient_target(pre, model.cfg)));
  }

  std::vector<Tensor> params = model.loc.params();
  for (const Tensor& t : model.prior.encoder_params()) params.push_back(t);
  ndgrad::Adam opt(params, {static_cast<real>(model.cfg.lr)});

  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir + "/train_log.jsonl");
  }

  std::vector<TrainLogEntry> history;
  std::vector<int> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);

  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < model.cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double edge_sum = 0.0, kl_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(model.cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(model.cfg.batch_size));
      opt.zero_grad();
      const real inv_batch = real(1) / static_cast<real>(end - start);
      for (size_t i = start; i < end; ++i) {
        const int si = order[i];
        ForwardResult fr = detector_forward(images[static_cast<size_t>(si)],
                                            targets[static_cast<size_t>(si)], model.loc,
                                            model.prior, model.cfg, &noise_rng);
        Tensor loss = mul_scalar(total_loss(fr, model.cfg.beta_kl), inv_batch);
        const double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv))
          throw NumericError("train_detector: loss diverged (non-finite)");
        ndgrad::backward(loss);
        edge_sum += static_cast<double>(fr.edge.item());
        double klm = 0.0;
        for (size_t c = 0; c < fr.kl_vec.size(); ++c) klm += static_cast<double>(fr.kl_vec.at(c));
        kl_sum += klm / static_cast<double>(fr.kl_vec.size());
      }
      opt.step();
    }

    if (model.prior.decoder_checksum() != frozen_hash)
      throw std::runtime_error("train_detector: frozen decoder was modified");

    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.edge_loss = edge_sum / static_cast<double>(scenes.size());
    entry.kl = kl_sum / static_cast<double>(scenes.size());
    entry.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.push_back(entry);

    if (log.is_open()) {
      nlohmann::json j{{"epoch", entry.epoch},
                       {"edge_loss", entry.edge_loss},
                       {"kl", entry.kl},
                       {"wall_s", entry.wall_s}};
      log << j.dump() << '\n';
      log.flush();
    }
    if (!out_dir.empty())
      save_detector(out_dir + "/checkpoint_epoch" + std::to_string(epoch) + ".w", model);
  }
  return history;
}

void save_detector(const std::string& path, const DetectorModel& model,
                   const nlohmann::json& extra_meta) {
  nlohmann::json meta = extra_meta;
  meta["kind"] = "shape-prior-detector";
  meta["latent_dim"] = model.prior.latent_dim;
  meta["base_channels"] = model.prior.base_channels;
  meta["frozen_decoder"] = model.prior.frozen_decoder;
  meta["config"] = {{"s_cell", model.cfg.s_cell},
                    {"s_patch", model.cfg.s_patch},
                    {"s_min", model.cfg.s_min},
                    {"s_max", model.cfg.s_max},
                    {"r_max", model.cfg.r_max},
                    {"alpha", model.cfg.alpha},
                    {"beta_kl", model.cfg.beta_kl},
                    {"input_h", model.cfg.input_h},
                    {"input_w", model.cfg.input_w},
                    {"equalize", model.cfg.equalize},
                    {"equalize_factor", model.cfg.equalize_factor},
                    {"truncate_fraction", model.cfg.truncate_fraction}};
  ndgrad::NamedTensors tensors = model.loc.named_params();
  for (auto& [name, t] : model.prior.named_params()) tensors.emplace_back(name, t);
  ndgrad::save_weights(path, tensors, meta);
}

DetectorModel load_detector(const std::string& path) {
  ndgrad::WeightFile wf = ndgrad::load_weights(path);
  if (wf.meta.value("kind", "") != "shape-prior-detector")
    throw std::runtime_error("load_detector: " + path + " is not a detector container");

  DetectorModel m;
  const auto& c = wf.meta.at("config");
  m.cfg.s_cell = c.at("s_cell");
  m.cfg.s_patch = c.at("s_patch");
  m.cfg.s_min = c.at("s_min");
  m.cfg.s_max = c.at("s_max");
  m.cfg.r_max = c.at("r_max");
  m.cfg.alpha = c.at("alpha");
  m.cfg.beta_kl = c.at("beta_kl");
  m.cfg.input_h = c.at("input_h");
  m.cfg.input_w = c.at("input_w");
  m.cfg.equalize = c.at("equalize");
  m.cfg.equalize_factor = c.at("equalize_factor");
  m.cfg.truncate_fraction = c.at("truncate_fraction");

  for (int i = 1; i <= 8; ++i)
    m.loc.conv.push_back({wf.find("loc.conv" + std::to_string(i) + ".w"),
                          wf.find("loc.conv" + std::to_string(i) + ".b")});
  m.loc.head = {wf.find("loc.head.w"), wf.find("loc.head.b")};
  for (Tensor t : m.loc.params()) t.set_requires_grad(true);

  m.prior.latent_dim = wf.meta.at("latent_dim");
  m.prior.base_channels = wf.meta.at("base_channels");
  m.prior.frozen_decoder = wf.meta.value("frozen_decoder", false);
  for (int i = 1; i <= 6; ++i)
    m.prior.enc.push_back({wf.find("enc.conv" + std::to_string(i) + ".w"),
                           wf.find("enc.conv" + std::to_string(i) + ".b")});
  m.prior.enc_mu_w = wf.find("enc.mu.w");
  m.prior.enc_mu_b = wf.find("enc.mu.b");
  m.prior.enc_logvar_w = wf.find("enc.logvar.w");
  m.prior.enc_logvar_b = wf.find("enc.logvar.b");
  m.prior.dec_w = wf.find("dec.dense.w");
  m.prior.dec_b = wf.find("dec.dense.b");
  for (int i = 1; i <= 6; ++i)
    m.prior.dec.push_back({wf.find("dec.conv" + std::to_string(i) + ".w"),
                           wf.find("dec.conv" + std::to_string(i) + ".b")});
  for (Tensor t : m.prior.encoder_params()) t.set_requires_grad(true);
  for (Tensor t : m.prior.decoder_params()) t.set_requires_grad(!m.prior.frozen_decoder);
  return m;
}

NDGRAD_NS_END
}  // namespace shapeseg
