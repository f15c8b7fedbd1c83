#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "shapeseg/postproc.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

// |a intersect b| / |a union b| over equal-size binary masks; a must be
// nonempty.
double iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

struct MatchResult {
  int tp = 0, fp = 0, fn = 0;
  std::vector<std::tuple<int, int, double>> pairs;  // (pred index, gt id, IoU)
};

// Greedy matching in descending prediction score: each prediction takes the
// unmatched ground-truth instance of highest IoU if that IoU exceeds t.
MatchResult match_instances(const std::vector<InstanceMask>& preds, const LabelImage& gts,
                            double t);

// TP / (TP + FP + FN); empty vs empty is 1 by definition.
double ap_at(const std::vector<InstanceMask>& preds, const LabelImage& gts, double t);
double ap_from_counts(long tp, long fp, long fn);

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> ap;  // per threshold
  double map = 0.0;
};

inline std::vector<double> default_thresholds() {
  return {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

EvalReport map_over_range(const std::vector<InstanceMask>& preds, const LabelImage& gts,
                          const std::vector<double>& thresholds = default_thresholds());

// Dataset-level evaluation pools TP/FP/FN counts over images before the AP
// quotient.
struct DatasetEval {
  std::vector<double> thresholds = default_thresholds();
  std::vector<long> tp, fp, fn;

  DatasetEval() { tp.assign(thresholds.size(), 0), fp.assign(thresholds.size(), 0),
                  fn.assign(thresholds.size(), 0); }
  explicit DatasetEval(std::vector<double> ts) : thresholds(std::move(ts)) {
    tp.assign(thresholds.size(), 0);
    fp.assign(thresholds.size(), 0);
    fn.assign(thresholds.size(), 0);
  }
  void add_image(const std::vector<InstanceMask>& preds, const LabelImage& gts);
  EvalReport report() const;
};

void write_report_csv(const std::string& path, const EvalReport& r);
void write_report_json(const std::string& path, const EvalReport& r);

// Converts a ground-truth label map into per-instance masks (used when a
// prediction is itself stored as a label image).
std::vector<InstanceMask> label_map_to_masks(const LabelImage& labels);

NDGRAD_NS_END
}  // namespace shapeseg
