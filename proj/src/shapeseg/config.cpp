#include "shapeseg/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace shapeseg {
NDGRAD_NS_BEGIN

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed",          "scenario",       "dataset_dir",      "output_dir",
      "s_cell",        "s_patch",        "s_min",            "s_max",
      "r_max",         "alpha",          "beta_kl",          "input_h",
      "input_w",       "lr",             "epochs",           "batch_size",
      "equalize",      "equalize_factor", "truncate_fraction",
      "r_max_shape",   "elastic_alpha",  "elastic_sigma",
      "latent_dim",    "base_channels",  "prior_epochs",     "prior_batch_size",
      "prior_beta",    "prior_lr",       "prior_holdout_fraction",
      "k_min",         "k_max",          "contrast",
      "presence_threshold", "mask_threshold", "p_non_max",   "nms_mode",
      "eval_thresholds", "version"};
  return keys;
}

template <class T>
void get_if(const nlohmann::json& j, const char* key, T* dst) {
  if (j.contains(key)) *dst = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known_keys().count(key))
      throw std::invalid_argument("config: unknown key \"" + key + "\"");
  }

  RunConfig c;
  get_if(j, "seed", &c.seed);
  get_if(j, "scenario", &c.scenario);
  get_if(j, "dataset_dir", &c.dataset_dir);
  get_if(j, "output_dir", &c.output_dir);

  get_if(j, "s_cell", &c.detector.s_cell);
  get_if(j, "s_patch", &c.detector.s_patch);
  get_if(j, "s_min", &c.detector.s_min);
  get_if(j, "s_max", &c.detector.s_max);
  get_if(j, "r_max", &c.detector.r_max);
  get_if(j, "alpha", &c.detector.alpha);
  get_if(j, "beta_kl", &c.detector.beta_kl);
  get_if(j, "input_h", &c.detector.input_h);
  get_if(j, "input_w", &c.detector.input_w);
  get_if(j, "lr", &c.detector.lr);
  get_if(j, "epochs", &c.detector.epochs);
  get_if(j, "batch_size", &c.detector.batch_size);
  get_if(j, "equalize", &c.detector.equalize);
  get_if(j, "equalize_factor", &c.detector.equalize_factor);
  get_if(j, "truncate_fraction", &c.detector.truncate_fraction);
  c.detector.seed = c.seed;

  get_if(j, "r_max_shape", &c.r_max_shape);
  get_if(j, "elastic_alpha", &c.elastic_alpha);
  get_if(j, "elastic_sigma", &c.elastic_sigma);

  get_if(j, "latent_dim", &c.latent_dim);
  get_if(j, "base_channels", &c.base_channels);
  get_if(j, "prior_epochs", &c.prior.epochs);
  get_if(j, "prior_batch_size", &c.prior.batch_size);
  if (j.contains("prior_beta")) c.prior.beta = static_cast<ndgrad::real>(j.at("prior_beta").get<double>());
  get_if(j, "prior_lr", &c.prior.lr);
  get_if(j, "prior_holdout_fraction", &c.prior.holdout_fraction);

  get_if(j, "k_min", &c.k_min);
  get_if(j, "k_max", &c.k_max);
  get_if(j, "contrast", &c.contrast);

  get_if(j, "presence_threshold", &c.presence_threshold);
  get_if(j, "mask_threshold", &c.mask_threshold);
  get_if(j, "p_non_max", &c.p_non_max);
  get_if(j, "nms_mode", &c.nms_mode);
  get_if(j, "eval_thresholds", &c.eval_thresholds);

  if (c.scenario != "synthetic" && c.scenario != "annotation")
    throw std::invalid_argument("config: scenario must be \"synthetic\" or \"annotation\"");
  if (c.nms_mode != "all" && c.nms_mode != "greedy")
    throw std::invalid_argument("config: nms_mode must be \"all\" or \"greedy\"");
  c.detector.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return from_json(nlohmann::json::parse(in));
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["version"] = kVersionStamp;
  j["seed"] = seed;
  j["scenario"] = scenario;
  j["dataset_dir"] = dataset_dir;
  j["output_dir"] = output_dir;
  j["s_cell"] = detector.s_cell;
  j["s_patch"] = detector.s_patch;
  j["s_min"] = detector.s_min;
  j["s_max"] = detector.s_max;
  j["r_max"] = detector.r_max;
  j["alpha"] = detector.alpha;
  j["beta_kl"] = detector.beta_kl;
  j["input_h"] = detector.input_h;
  j["input_w"] = detector.input_w;
  j["lr"] = detector.lr;
  j["epochs"] = detector.epochs;
  j["batch_size"] = detector.batch_size;
  j["equalize"] = detector.equalize;
  j["equalize_factor"] = detector.equalize_factor;
  j["truncate_fraction"] = detector.truncate_fraction;
  j["r_max_shape"] = r_max_shape;
  j["elastic_alpha"] = elastic_alpha;
  j["elastic_sigma"] = elastic_sigma;
  j["latent_dim"] = latent_dim;
  j["base_channels"] = base_channels;
  j["prior_epochs"] = prior.epochs;
  j["prior_batch_size"] = prior.batch_size;
  j["prior_beta"] = prior.beta;
  j["prior_lr"] = prior.lr;
  j["prior_holdout_fraction"] = prior.holdout_fraction;
  j["k_min"] = k_min;
  j["k_max"] = k_max;
  j["contrast"] = contrast;
  j["presence_threshold"] = presence_threshold;
  j["mask_threshold"] = mask_threshold;
  j["p_non_max"] = p_non_max;
  j["nms_mode"] = nms_mode;
  j["eval_thresholds"] = eval_thresholds;
  return j;
}

void RunConfig::write_resolved(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/run_config.json");
  if (!out) throw std::runtime_error("config: cannot write resolved config to " + dir);
  out << to_json().dump(2) << '\n';
}

NDGRAD_NS_END
}  // namespace shapeseg
