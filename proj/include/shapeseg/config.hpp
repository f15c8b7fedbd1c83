#pragma once

#include <string>

#include <json.hpp>

#include "shapeseg/detector.hpp"
#include "shapeseg/prior.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

inline constexpr const char* kVersionStamp = "shapeseg 0.1.0";

// Full run configuration. JSON keys mirror the field names; unknown keys are
// hard errors so hyperparameter typos cannot pass silently. A resolved copy
// (all defaults filled in) is written next to every output artifact.
struct RunConfig {
  uint64_t seed = 1234;
  std::string scenario = "synthetic";  // or "annotation"
  std::string dataset_dir;
  std::string output_dir;

  DetectorConfig detector;

  // shape generation
  double r_max_shape = 1.5;
  double elastic_alpha = 2.0;
  double elastic_sigma = 4.0;

  // prior
  int latent_dim = 16;
  int base_channels = 16;
  PriorTrainConfig prior;

  // benchmark generation
  int k_min = 5, k_max = 15;
  double contrast = 0.6;

  // inference / evaluation
  double presence_threshold = 0.1;
  double mask_threshold = 0.5;
  double p_non_max = 0.1;
  std::string nms_mode = "all";  // or "greedy"
  std::vector<double> eval_thresholds = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
  void write_resolved(const std::string& dir) const;
  ndgrad::Rng rng() const { return ndgrad::Rng(seed); }
};

NDGRAD_NS_END
}  // namespace shapeseg
