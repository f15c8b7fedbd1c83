#include "shapeseg/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace shapeseg {
NDGRAD_NS_BEGIN

double iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("iou: mask sizes differ");
  long inter = 0, uni = 0, area_a = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool fa = a[i] != 0, fb = b[i] != 0;
    area_a += fa;
    inter += fa && fb;
    uni += fa || fb;
  }
  if (area_a == 0) throw std::invalid_argument("iou: first mask is empty");
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

namespace {

struct GtStats {
  std::vector<uint32_t> ids;
  std::vector<long> areas;  // parallel to ids
  int index_of(uint32_t id) const {
    for (size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == id) return static_cast<int>(i);
    return -1;
  }
};

GtStats gt_stats(const LabelImage& gts) {
  GtStats s;
  for (uint32_t v : gts.data) {
    if (v == 0) continue;
    const int i = s.index_of(v);
    if (i < 0) {
      s.ids.push_back(v);
      s.areas.push_back(1);
    } else {
      s.areas[static_cast<size_t>(i)] += 1;
    }
  }
  return s;
}

}  // namespace

MatchResult match_instances(const std::vector<InstanceMask>& preds, const LabelImage& gts,
                            double t) {
  if (!(t > 0.0) || !(t < 1.0))
    throw std::invalid_argument("match_instances: threshold must be in (0,1)");
  const GtStats stats = gt_stats(gts);

  // score-descending order, ties toward lower cell index for determinism
  std::vector<size_t> order(preds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
    return preds[a].cell_index < preds[b].cell_index;
  });

  std::vector<bool> gt_taken(stats.ids.size(), false);
  MatchResult r;
  for (size_t oi : order) {
    const InstanceMask& p = preds[oi];
    if (static_cast<size_t>(gts.height) * gts.width != p.mask.size())
      throw std::invalid_argument("match_instances: prediction size differs from label map");
    // intersection with every gt instance in one pass over the pred pixels
    std::vector<long> inter(stats.ids.size(), 0);
    for (int y = p.y0; y < p.y1; ++y) {
      const size_t row = static_cast<size_t>(y) * p.width;
      for (int x = p.x0; x < p.x1; ++x) {
        if (!p.mask[row + x]) continue;
        const uint32_t id = gts.data[row + x];
        if (id == 0) continue;
        const int gi = stats.index_of(id);
        if (gi >= 0) inter[static_cast<size_t>(gi)] += 1;
      }
    }
    int best = -1;
    double best_iou = 0.0;
    for (size_t gi = 0; gi < stats.ids.size(); ++gi) {
      if (gt_taken[gi] || inter[gi] == 0) continue;
      const double u = static_cast<double>(p.area) + static_cast<double>(stats.areas[gi]) -
                       static_cast<double>(inter[gi]);
      const double v = static_cast<double>(inter[gi]) / u;
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0 && best_iou > t) {
      gt_taken[static_cast<size_t>(best)] = true;
      r.tp += 1;
      r.pairs.emplace_back(static_cast<int>(oi), static_cast<int>(stats.ids[static_cast<size_t>(best)]),
                           best_iou);
    } else {
      r.fp += 1;
    }
  }
  for (bool taken : gt_taken)
    if (!taken) r.fn += 1;
  return r;
}

double ap_from_counts(long tp, long fp, long fn) {
  const long denom = tp + fp + fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

double ap_at(const std::vector<InstanceMask>& preds, const LabelImage& gts, double t) {
  const MatchResult r = match_instances(preds, gts, t);
  return ap_from_counts(r.tp, r.fp, r.fn);
}

EvalReport map_over_range(const std::vector<InstanceMask>& preds, const LabelImage& gts,
                          const std::vector<double>& thresholds) {
  EvalReport rep;
  rep.thresholds = thresholds;
  double acc = 0.0;
  for (double t : thresholds) {
    const double a = ap_at(preds, gts, t);
    rep.ap.push_back(a);
    acc += a;
  }
  rep.map = thresholds.empty() ? 0.0 : acc / static_cast<double>(thresholds.size());
  return rep;
}

void DatasetEval::add_image(const std::vector<InstanceMask>& preds, const LabelImage& gts) {
  for (size_t i = 0; i < thresholds.size(); ++i) {
    const MatchResult r = match_instances(preds, gts, thresholds[i]);
    tp[i] += r.tp;
    fp[i] += r.fp;
    fn[i] += r.fn;
  }
}

EvalReport DatasetEval::report() const {
  EvalReport rep;
  rep.thresholds = thresholds;
  double acc = 0.0;
  for (size_t i = 0; i < thresholds.size(); ++i) {
    const double a = ap_from_counts(tp[i], fp[i], fn[i]);
    rep.ap.push_back(a);
    acc += a;
  }
  rep.map = thresholds.empty() ? 0.0 : acc / static_cast<double>(thresholds.size());
  return rep;
}

void write_report_csv(const std::string& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "IoU";
  for (double t : r.thresholds) out << "," << t;
  out << ",mAP\nAP";
  for (double a : r.ap) out << "," << a;
  out << "," << r.map << "\n";
}

void write_report_json(const std::string& path, const EvalReport& r) {
  nlohmann::json j;
  j["thresholds"] = r.thresholds;
  j["ap"] = r.ap;
  j["mAP"] = r.map;
  j["aggregation"] = "counts pooled over the dataset before the AP quotient";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::vector<InstanceMask> label_map_to_masks(const LabelImage& labels) {
  std::map<uint32_t, InstanceMask> by_id;
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      const uint32_t id = labels.at(y, x);
      if (id == 0) continue;
      auto [it, fresh] = by_id.try_emplace(id);
      if (fresh) {
        it->second.height = labels.height;
        it->second.width = labels.width;
        it->second.mask.assign(labels.size(), 0);
        it->second.score = 1.0;
        it->second.cell_index = static_cast<int>(id);
      }
      it->second.mask[static_cast<size_t>(y) * labels.width + x] = 1;
    }
  }
  std::vector<InstanceMask> out;
  for (auto& [id, m] : by_id) {
    m.recompute_bounds();
    out.push_back(std::move(m));
  }
  return out;
}

NDGRAD_NS_END
}  // namespace shapeseg
