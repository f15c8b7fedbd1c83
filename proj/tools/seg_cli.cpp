// Command-line front end for the shape-prior segmentation pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "ndgrad/gradcheck.hpp"
#include "shapeseg/config.hpp"
#include "shapeseg/errors.hpp"
#include "shapeseg/metrics.hpp"
#include "shapeseg/png_io.hpp"
#include "shapeseg/postproc.hpp"

namespace fs = std::filesystem;
using namespace shapeseg;
using ndgrad::Rng;
using ndgrad::Tensor;

namespace {

std::vector<std::string> sorted_files(const std::string& dir, const std::string& suffix) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ShapePatch> load_patch_dir(const std::string& dir) {
  std::vector<ShapePatch> patches;
  for (const auto& path : sorted_files(dir, ".png")) {
    GrayImage img = read_gray_png(path);
    if (img.height != kPatchSize || img.width != kPatchSize)
      img = resize_bilinear(img, kPatchSize, kPatchSize);
    patches.push_back(std::move(img));
  }
  if (patches.empty()) throw std::runtime_error("no patch PNGs found in " + dir);
  return patches;
}

std::vector<SceneSample> load_scene_dir(const std::string& dir) {
  std::vector<SceneSample> scenes;
  for (const auto& path : sorted_files(dir, "_img.png")) {
    const std::string stem = path.substr(0, path.size() - std::string("_img.png").size());
    scenes.push_back(load_scene(stem));
  }
  if (scenes.empty()) throw std::runtime_error("no scenes (*_img.png) found in " + dir);
  return scenes;
}

RunConfig load_config_arg(const std::string& config_path) {
  if (config_path.empty()) return RunConfig{};
  return RunConfig::from_file(config_path);
}

int cmd_gen_shapes(int n, double r_max, double alpha, double sigma, uint64_t seed,
                   const std::string& out_dir) {
  fs::create_directories(out_dir);
  Rng rng = Rng(seed).stream("shape-gen");
  const auto patches = gen_shape_dataset(n, r_max, alpha, sigma, rng);
  nlohmann::json manifest;
  manifest["count"] = n;
  manifest["r_max_shape"] = r_max;
  manifest["elastic_alpha"] = alpha;
  manifest["elastic_sigma"] = sigma;
  manifest["seed"] = seed;
  manifest["version"] = kVersionStamp;
  auto& files = manifest["files"] = nlohmann::json::array();
  for (size_t i = 0; i < patches.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "patch_%05zu.png", i);
    write_gray_png(out_dir + "/" + name, patches[i]);
    files.push_back(name);
  }
  std::ofstream mf(out_dir + "/manifest.json");
  mf << manifest.dump(2) << '\n';
  std::cout << "wrote " << patches.size() << " patches to " << out_dir << "\n";
  return 0;
}

int cmd_extract_shapes(const std::string& labels_path, const std::string& out_dir, int aug_factor,
                       double alpha, double sigma, uint64_t seed) {
  fs::create_directories(out_dir);
  const LabelImage labels = read_label_png(labels_path);
  const auto base = extract_annotation_patches(labels);
  if (base.empty()) throw std::runtime_error("no usable instances in " + labels_path);
  Rng rng = Rng(seed).stream("shape-extract");
  size_t count = 0;
  for (size_t i = 0; i < base.size(); ++i) {
    const auto rotations = augment_rotations(base[i], 30);
    for (size_t r = 0; r < rotations.size(); ++r) {
      for (int a = 0; a < aug_factor; ++a) {
        ShapePatch p = elastic_deform(rotations[r], alpha, sigma, rng);
        char name[64];
        std::snprintf(name, sizeof(name), "patch_%03zu_rot%02zu_aug%02d.png", i, r, a);
        write_gray_png(out_dir + "/" + name, p);
        ++count;
      }
    }
  }
  nlohmann::json manifest{{"instances", base.size()},  {"rotations", 12},
                          {"aug_factor", aug_factor},  {"seed", seed},
                          {"count", count},            {"version", kVersionStamp}};
  std::ofstream mf(out_dir + "/manifest.json");
  mf << manifest.dump(2) << '\n';
  std::cout << "wrote " << count << " augmented patches to " << out_dir << "\n";
  return 0;
}

int cmd_train_prior(const std::string& shapes_dir, const std::string& config_path,
                    const std::string& out_dir) {
  RunConfig cfg = load_config_arg(config_path);
  fs::create_directories(out_dir);
  cfg.write_resolved(out_dir);

  const auto patches = load_patch_dir(shapes_dir);
  Rng rng = cfg.rng();
  Rng init = rng.stream("prior-init");
  ShapePriorModel model = build_vae(cfg.latent_dim, cfg.base_channels, init);
  Rng train_rng = rng.stream("prior-train");
  const PriorTrainResult result = train_prior(model, patches, cfg.prior, train_rng);

  const std::string config_hash = std::to_string(std::hash<std::string>{}(cfg.to_json().dump()));
  save_prior(out_dir + "/prior.w", model, {{"config_hash", config_hash}});
  nlohmann::json hist{{"loss_history", result.loss_history}, {"heldout_iou", result.heldout_iou}};
  std::ofstream hf(out_dir + "/prior_history.json");
  hf << hist.dump(2) << '\n';
  std::cout << "final held-out reconstruction IoU: " << result.heldout_iou << "\n";
  return 0;
}

int cmd_train_detector(const std::string& images_dir, const std::string& prior_path,
                       const std::string& config_path, const std::string& out_dir) {
  RunConfig cfg = load_config_arg(config_path);
  fs::create_directories(out_dir);
  cfg.write_resolved(out_dir);

  const auto scenes = load_scene_dir(images_dir);
  DetectorModel model;
  model.prior = load_prior(prior_path);
  freeze_decoder(model.prior);
  Rng rng = cfg.rng();
  Rng reinit_rng = rng.stream("encoder-reinit");
  reinit_encoder(model.prior, reinit_rng);
  Rng loc_rng = rng.stream("detector-init");
  model.loc = build_localization_net(loc_rng);
  model.cfg = cfg.detector;

  Rng train_rng = rng.stream("detector-train");
  train_detector(model, scenes, train_rng, out_dir);
  save_detector(out_dir + "/detector.w", model);
  std::cout << "trained on " << scenes.size() << " scenes; model at " << out_dir
            << "/detector.w\n";
  return 0;
}

std::vector<InstanceMask> run_inference(const DetectorModel& model, const RunConfig& cfg,
                                        const GrayImage& raw) {
  GrayImage pre = preprocess_image(raw, model.cfg);
  Tensor image = image_to_tensor(pre);
  Tensor target = image_to_tensor(gradient_target(pre, model.cfg));
  ForwardResult fr = detector_forward(image, target, model.loc, model.prior, model.cfg, nullptr);
  auto masks = extract_instances(fr, model.cfg, static_cast<real>(cfg.presence_threshold),
                                 static_cast<real>(cfg.mask_threshold));
  return cfg.nms_mode == "greedy"
             ? nms_masks_greedy(masks, static_cast<real>(cfg.p_non_max))
             : nms_masks(masks, static_cast<real>(cfg.p_non_max));
}

int cmd_infer(const std::string& model_path, const std::string& image_path,
              const std::string& config_path, const std::string& out_dir, int jobs) {
  RunConfig cfg = load_config_arg(config_path);
  fs::create_directories(out_dir);
  cfg.write_resolved(out_dir);
  DetectorModel model = load_detector(model_path);

  std::vector<std::string> inputs;
  if (fs::is_directory(image_path)) {
    inputs = sorted_files(image_path, "_img.png");
    if (inputs.empty()) inputs = sorted_files(image_path, ".png");
  } else {
    inputs.push_back(image_path);
  }
  if (inputs.empty()) throw std::runtime_error("no input images at " + image_path);

  const int n_jobs = std::max(1, jobs);
  std::vector<std::thread> workers;
  std::atomic<size_t> next{0};
  std::atomic<size_t> total_masks{0};
  auto work = [&] {
    for (size_t i = next.fetch_add(1); i < inputs.size(); i = next.fetch_add(1)) {
      const GrayImage raw = read_gray_png(inputs[i]);
      const auto kept = run_inference(model, cfg, raw);
      const std::string stem =
          out_dir + "/" + fs::path(inputs[i]).stem().string();
      write_instance_results(stem, kept, preprocess_image(raw, model.cfg));
      total_masks += kept.size();
    }
  };
  if (n_jobs == 1 || inputs.size() == 1) {
    work();
  } else {
    for (int t = 0; t < n_jobs; ++t) workers.emplace_back(work);
    for (auto& w : workers) w.join();
  }
  std::cout << "segmented " << inputs.size() << " image(s), " << total_masks
            << " instance(s) total\n";
  return 0;
}

int cmd_evaluate(const std::string& pred_dir, const std::string& gt_dir,
                 const std::string& config_path, const std::string& out_dir, int jobs) {
  RunConfig cfg = load_config_arg(config_path);
  fs::create_directories(out_dir);
  cfg.write_resolved(out_dir);

  const auto pred_files = sorted_files(pred_dir, "_labels.png");
  if (pred_files.empty()) throw std::runtime_error("no *_labels.png in " + pred_dir);

  std::vector<DatasetEval> partial(static_cast<size_t>(std::max(1, jobs)),
                                   DatasetEval(cfg.eval_thresholds));
  std::atomic<size_t> next{0};
  auto work = [&](size_t slot) {
    for (size_t i = next.fetch_add(1); i < pred_files.size(); i = next.fetch_add(1)) {
      const std::string name = fs::path(pred_files[i]).filename().string();
      const std::string gt_path = gt_dir + "/" + name;
      if (!fs::exists(gt_path))
        throw std::runtime_error("missing ground truth for " + name + " in " + gt_dir);
      LabelImage pred = read_label_png(pred_files[i]);
      LabelImage gt = read_label_png(gt_path);
      if (pred.height != gt.height || pred.width != gt.width)
        pred = resize_nearest(pred, gt.height, gt.width);
      partial[slot].add_image(label_map_to_masks(pred), gt);
    }
  };
  if (std::max(1, jobs) == 1) {
    work(0);
  } else {
    std::vector<std::thread> workers;
    for (size_t t = 0; t < partial.size(); ++t) workers.emplace_back(work, t);
    for (auto& w : workers) w.join();
  }
  DatasetEval total(cfg.eval_thresholds);
  for (const auto& p : partial)
    for (size_t i = 0; i < total.thresholds.size(); ++i) {
      total.tp[i] += p.tp[i];
      total.fp[i] += p.fp[i];
      total.fn[i] += p.fn[i];
    }

  const EvalReport report = total.report();
  write_report_csv(out_dir + "/ap_report.csv", report);
  write_report_json(out_dir + "/ap_report.json", report);
  std::cout << "IoU  ";
  for (double t : report.thresholds) std::cout << t << "  ";
  std::cout << "mAP\nAP   ";
  for (double a : report.ap) std::cout << a << "  ";
  std::cout << report.map << "\n";
  return 0;
}

int cmd_gen_benchmark(int n_scenes, int k_min, int k_max, double contrast, uint64_t seed,
                      const std::string& config_path, const std::string& out_dir) {
  RunConfig cfg = load_config_arg(config_path);
  cfg.seed = seed;
  cfg.k_min = k_min;
  cfg.k_max = k_max;
  cfg.contrast = contrast;
  fs::create_directories(out_dir);
  cfg.write_resolved(out_dir);

  SceneConfig sc;
  sc.size = cfg.detector.input_h;
  sc.s_cell = cfg.detector.s_cell;
  sc.s_min = cfg.detector.s_min;
  sc.s_max = cfg.detector.s_max;
  sc.r_max_shape = cfg.r_max_shape;
  sc.contrast = cfg.contrast;
  sc.elastic_alpha = cfg.elastic_alpha;
  sc.elastic_sigma = cfg.elastic_sigma;

  Rng data = Rng(seed).stream("data");
  nlohmann::json manifest{{"n_scenes", n_scenes}, {"k_min", k_min}, {"k_max", k_max},
                          {"contrast", contrast}, {"seed", seed},   {"version", kVersionStamp}};
  for (int i = 0; i < n_scenes; ++i) {
    const int k = data.uniform_int(k_min, k_max);
    Rng scene_rng(data.next_u64());
    SceneSample scene = gen_toy_scene(k, sc, scene_rng);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "scene_%04d", i);
    save_scene(out_dir + "/" + stem, scene);
  }
  std::ofstream mf(out_dir + "/manifest.json");
  mf << manifest.dump(2) << '\n';
  std::cout << "wrote " << n_scenes << " scenes to " << out_dir << "\n";
  return 0;
}

// Draws affine params whose sampling grid stays clear of source grid lines,
// where the interpolation derivative is discontinuous and finite differences
// are meaningless.
Tensor safe_sample_params(int src, int out, Rng& rng) {
  auto frac_ok = [](double c) {
    const double f = c - std::floor(c);
    return f > 0.15 && f < 0.85;
  };
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double sx = rng.uniform(0.35, 0.85), sy = rng.uniform(0.35, 0.85);
    const double tx = rng.uniform(-0.2, 0.2), ty = rng.uniform(-0.2, 0.2);
    bool ok = true;
    for (int o = 0; o < out && ok; ++o) {
      const double no = 2.0 * (o + 0.5) / out - 1.0;
      ok = frac_ok((sx * no + tx + 1.0) * src / 2.0 - 0.5) &&
           frac_ok((sy * no + ty + 1.0) * src / 2.0 - 0.5);
    }
    if (ok)
      return Tensor::from_data({4}, {static_cast<real>(sx), static_cast<real>(sy),
                                     static_cast<real>(tx), static_cast<real>(ty)});
  }
  throw std::runtime_error("gradcheck: no kink-safe transform found");
}

int cmd_gradcheck(const std::string& op, uint64_t seed) {
  Rng rng(seed);
  const double tol = sizeof(real) == 8 ? 1e-6 : 1e-2;
  // float-mode central differences balance truncation against float roundoff
  // at a much larger step than the 64-bit test lane
  const double eps = sizeof(real) == 8 ? 1e-4 : 1e-2;
  double err = 0.0;

  auto rand_t = [&rng](ndgrad::Shape s) {
    Tensor t = Tensor::zeros(std::move(s));
    for (auto& v : t.values()) v = static_cast<real>(rng.uniform(0.05, 0.95));
    return t;
  };

  if (op == "conv2d") {
    Tensor k = Tensor::randn({2, 1, 3, 3}, rng);
    err = ndgrad::grad_check(
        [&](const Tensor& t) { return mean(square(conv2d(t, k, nullptr, 1, 1))); },
        rand_t({1, 1, 8, 8}), eps);
  } else if (op == "maxpool2d") {
    // shuffled staircase: every pairwise gap clears the probe step
    std::vector<int> perm(64);
    for (int j = 0; j < 64; ++j) perm[static_cast<size_t>(j)] = j;
    rng.shuffle(perm);
    Tensor x = Tensor::zeros({1, 1, 8, 8});
    for (size_t j = 0; j < 64; ++j)
      x.data()[j] = static_cast<real>(perm[j] * 0.05 + rng.uniform(0, 0.01));
    err = ndgrad::grad_check([](const Tensor& t) { return mean(square(maxpool2d(t, 2))); }, x,
                             eps);
  } else if (op == "upsample2x") {
    err = ndgrad::grad_check([](const Tensor& t) { return mean(square(upsample2x(t))); },
                             rand_t({1, 1, 8, 8}), eps);
  } else if (op == "dense") {
    Tensor w = Tensor::randn({6, 4}, rng);
    Tensor b = Tensor::randn({4}, rng);
    err = ndgrad::grad_check([&](const Tensor& t) { return mean(square(dense(t, w, b))); },
                             rand_t({3, 6}), eps);
  } else if (op == "activation") {
    for (ndgrad::Act a : {ndgrad::Act::kSigmoid, ndgrad::Act::kTanh, ndgrad::Act::kExp,
                          ndgrad::Act::kLog}) {
      err = std::max(err, ndgrad::grad_check(
                              [a](const Tensor& t) { return mean(square(activation(t, a))); },
                              rand_t({16}), eps));
    }
    // relu checked away from its kink at zero
    err = std::max(err, ndgrad::grad_check(
                            [](const Tensor& t) { return mean(square(relu(t))); },
                            rand_t({16}), eps));
  } else if (op == "bilinear_sample") {
    // smooth source: float-mode finite differences need coherent gradients
    Tensor img = Tensor::zeros({1, 1, 8, 8});
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        img.data()[y * 8 + x] = static_cast<real>(
            0.5 + 0.4 * std::sin(0.7 * x + rng.uniform(0, 0.2)) * std::cos(0.6 * y));
    Tensor p = safe_sample_params(8, 6, rng);
    err = ndgrad::grad_check(
        [&](const Tensor& t) { return mean(square(bilinear_sample(img, t, 6, 6))); }, p, 2e-3);
    err = std::max(err, ndgrad::grad_check(
                            [&](const Tensor& t) {
                              return mean(square(bilinear_sample(t, p, 6, 6)));
                            },
                            img, eps));
  } else if (op == "edge_loss") {
    Tensor g_img = rand_t({1, 1, 8, 8});
    Tensor g_rec = rand_t({1, 1, 8, 8});
    // move values off the min() ties and off the cancellation point where the
    // true gradient vanishes
    double num = 0, den = 0;
    for (size_t i = 0; i < g_rec.size(); ++i) {
      const double mn = std::min<double>(g_img.at(i), g_rec.at(i));
      num += mn * mn;
      den += g_rec.at(i);
    }
    num /= static_cast<double>(g_rec.size());
    den = den / static_cast<double>(g_rec.size()) + 0.01;
    const double cancel = num / (2.0 * den);
    for (size_t i = 0; i < g_rec.size(); ++i) {
      if (std::abs(static_cast<double>(g_rec.at(i)) - static_cast<double>(g_img.at(i))) < 2e-2)
        g_rec.data()[i] += real(0.04);
      if (std::abs(static_cast<double>(g_rec.at(i)) - cancel) < 0.05) g_rec.data()[i] += real(0.1);
    }
    err = ndgrad::grad_check([&](const Tensor& t) { return edge_loss(g_img, t, real(0.01)); },
                             g_rec, 3e-3);
  } else if (op == "kl_divergence") {
    err = ndgrad::grad_check(
        [](const Tensor& t) {
          LatentCode code;
          code.mu = reshape(t, {2, 4});
          code.logvar = mul_scalar(reshape(t, {2, 4}), real(0.3));
          code.sample = code.mu;
          return kl_divergence(code);
        },
        rand_t({8}));
  } else {
    std::cerr << "unknown op \"" << op << "\"; available: conv2d maxpool2d upsample2x dense "
              << "activation bilinear_sample edge_loss kl_divergence\n";
    return 1;
  }

  std::cout << op << " max relative error: " << err << " (tolerance " << tol << ")\n";
  return err < tol ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shape-prior instance segmentation pipeline"};
  app.require_subcommand(1);

  // gen-shapes
  auto* gen = app.add_subcommand("gen-shapes", "Generate deformed-ellipse shape patches");
  int gen_n = 1000;
  double gen_rmax = 1.5, gen_alpha = 2.0, gen_sigma = 4.0;
  uint64_t gen_seed = 1234;
  std::string gen_out;
  gen->add_option("--n", gen_n, "number of patches")->check(CLI::PositiveNumber);
  gen->add_option("--r-max", gen_rmax, "max major/minor axis ratio");
  gen->add_option("--alpha", gen_alpha, "elastic deformation strength (px)");
  gen->add_option("--sigma", gen_sigma, "elastic deformation smoothness (px)");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  // extract-shapes
  auto* ext = app.add_subcommand("extract-shapes", "Extract and augment annotation patches");
  std::string ext_labels, ext_out;
  int ext_aug = 3;
  double ext_alpha = 2.0, ext_sigma = 4.0;
  uint64_t ext_seed = 1234;
  ext->add_option("--labels", ext_labels, "label PNG")->required()->check(CLI::ExistingFile);
  ext->add_option("--out", ext_out, "output directory")->required();
  ext->add_option("--aug-factor", ext_aug, "elastic variants per rotation")
      ->check(CLI::PositiveNumber);
  ext->add_option("--alpha", ext_alpha, "elastic deformation strength (px)");
  ext->add_option("--sigma", ext_sigma, "elastic deformation smoothness (px)");
  ext->add_option("--seed", ext_seed, "rng seed");

  // train-prior
  auto* tp = app.add_subcommand("train-prior", "Train the VAE shape prior");
  std::string tp_shapes, tp_config, tp_out;
  tp->add_option("--shapes", tp_shapes, "patch directory")->required();
  tp->add_option("--config", tp_config, "run config JSON")->check(CLI::ExistingFile);
  tp->add_option("--out", tp_out, "output directory")->required();

  // train-detector
  auto* td = app.add_subcommand("train-detector", "Train the detector against a frozen prior");
  std::string td_images, td_prior, td_config, td_out;
  td->add_option("--images", td_images, "scene directory")->required();
  td->add_option("--prior", td_prior, "prior weight container")->required()->check(CLI::ExistingFile);
  td->add_option("--config", td_config, "run config JSON")->check(CLI::ExistingFile);
  td->add_option("--out", td_out, "output directory")->required();

  // infer
  auto* inf = app.add_subcommand("infer", "Segment an image (or directory of images)");
  std::string inf_model, inf_image, inf_config, inf_out;
  int inf_jobs = 1;
  inf->add_option("--model", inf_model, "detector container")->required()->check(CLI::ExistingFile);
  inf->add_option("--image", inf_image, "input PNG or directory")->required();
  inf->add_option("--config", inf_config, "run config JSON")->check(CLI::ExistingFile);
  inf->add_option("--out", inf_out, "output directory")->required();
  inf->add_option("--jobs", inf_jobs, "parallel workers");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "AP over IoU thresholds from label maps");
  std::string ev_pred, ev_gt, ev_config, ev_out;
  int ev_jobs = 1;
  ev->add_option("--pred-dir", ev_pred, "predicted label maps")->required();
  ev->add_option("--gt-dir", ev_gt, "ground-truth label maps")->required();
  ev->add_option("--config", ev_config, "run config JSON")->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "output directory")->required();
  ev->add_option("--jobs", ev_jobs, "parallel workers");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of one operator");
  std::string gc_op;
  uint64_t gc_seed = 7;
  gc->add_option("--op", gc_op, "operator name")->required();
  gc->add_option("--seed", gc_seed, "rng seed");

  // gen-benchmark
  auto* gb = app.add_subcommand("gen-benchmark", "Generate synthetic scenes with ground truth");
  int gb_n = 10, gb_kmin = 5, gb_kmax = 15;
  double gb_contrast = 0.6;
  uint64_t gb_seed = 1234;
  std::string gb_config, gb_out;
  gb->add_option("--n-scenes", gb_n, "number of scenes")->check(CLI::PositiveNumber);
  gb->add_option("--k-min", gb_kmin, "min instances per scene")->check(CLI::PositiveNumber);
  gb->add_option("--k-max", gb_kmax, "max instances per scene")->check(CLI::PositiveNumber);
  gb->add_option("--contrast", gb_contrast, "object intensity above background");
  gb->add_option("--seed", gb_seed, "rng seed");
  gb->add_option("--config", gb_config, "run config JSON")->check(CLI::ExistingFile);
  gb->add_option("--out", gb_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed())
      return cmd_gen_shapes(gen_n, gen_rmax, gen_alpha, gen_sigma, gen_seed, gen_out);
    if (ext->parsed())
      return cmd_extract_shapes(ext_labels, ext_out, ext_aug, ext_alpha, ext_sigma, ext_seed);
    if (tp->parsed()) return cmd_train_prior(tp_shapes, tp_config, tp_out);
    if (td->parsed()) return cmd_train_detector(td_images, td_prior, td_config, td_out);
    if (inf->parsed()) return cmd_infer(inf_model, inf_image, inf_config, inf_out, inf_jobs);
    if (ev->parsed()) return cmd_evaluate(ev_pred, ev_gt, ev_config, ev_out, ev_jobs);
    if (gc->parsed()) return cmd_gradcheck(gc_op, gc_seed);
    if (gb->parsed())
      return cmd_gen_benchmark(gb_n, gb_kmin, gb_kmax, gb_contrast, gb_seed, gb_config, gb_out);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
