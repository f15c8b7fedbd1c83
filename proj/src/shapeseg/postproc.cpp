#include "shapeseg/postproc.hpp"

#include <algorithm>
#include <fstream>

#include "shapeseg/png_io.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

void InstanceMask::recompute_bounds() {
  x0 = width;
  y0 = height;
  x1 = 0;
  y1 = 0;
  area = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!mask[static_cast<size_t>(y) * width + x]) continue;
      ++area;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x + 1);
      y1 = std::max(y1, y + 1);
    }
  }
  if (area == 0) x0 = y0 = x1 = y1 = 0;
}

std::vector<InstanceMask> extract_instances(const ForwardResult& fr, const DetectorConfig& cfg,
                                            real presence_threshold, real mask_threshold) {
  std::vector<InstanceMask> out;
  const int gw = fr.grid_w;
  for (size_t cell = 0; cell < fr.grid.presence.size(); ++cell) {
    const real presence = fr.grid.presence.at(cell);
    if (presence < presence_threshold) continue;

    LValues v{presence, fr.grid.scale.at(cell), fr.grid.ratio.at(cell), fr.grid.lx.at(cell),
              fr.grid.ly.at(cell)};
    const int row = static_cast<int>(cell) / gw;
    const int col = static_cast<int>(cell) % gw;
    stn::BoxParams box = box_from_params(v, row, col, cfg);

    // decoded 32x32 mask -> image coordinates
    GrayImage patch(cfg.s_patch, cfg.s_patch);
    const size_t off = cell * static_cast<size_t>(cfg.s_patch) * cfg.s_patch;
    for (size_t i = 0; i < patch.size(); ++i)
      patch.data[i] = static_cast<float>(fr.decoded.at(off + i));
    GrayImage warped = stn::warp_image(patch, stn::stitch_transform(box, cfg.input_h, cfg.input_w),
                                       cfg.input_h, cfg.input_w);

    InstanceMask im;
    im.height = cfg.input_h;
    im.width = cfg.input_w;
    im.mask.assign(warped.size(), 0);
    for (size_t i = 0; i < warped.size(); ++i)
      im.mask[i] = warped.data[i] > static_cast<float>(mask_threshold) ? 1 : 0;
    im.recompute_bounds();
    if (im.area == 0) continue;
    im.score = presence;
    im.cell_index = static_cast<int>(cell);
    im.box = box;
    out.push_back(std::move(im));
  }
  return out;
}

namespace {

// |a && b| restricted to the overlap of the tight bounds.
int intersection_area(const InstanceMask& a, const InstanceMask& b) {
  const int x0 = std::max(a.x0, b.x0), x1 = std::min(a.x1, b.x1);
  const int y0 = std::max(a.y0, b.y0), y1 = std::min(a.y1, b.y1);
  if (x0 >= x1 || y0 >= y1) return 0;
  int inter = 0;
  for (int y = y0; y < y1; ++y) {
    const size_t row = static_cast<size_t>(y) * a.width;
    for (int x = x0; x < x1; ++x) inter += a.mask[row + x] & b.mask[row + x];
  }
  return inter;
}

bool wins(const InstanceMask& m, const InstanceMask& n) {
  if (m.score != n.score) return m.score > n.score;
  return m.cell_index < n.cell_index;
}

}  // namespace

std::vector<InstanceMask> nms_masks(const std::vector<InstanceMask>& masks, real p_non_max) {
  std::vector<InstanceMask> kept;
  for (size_t i = 0; i < masks.size(); ++i) {
    const InstanceMask& m = masks[i];
    bool keep = true;
    for (size_t j = 0; j < masks.size() && keep; ++j) {
      if (j == i) continue;
      const int inter = intersection_area(m, masks[j]);
      if (static_cast<real>(inter) > p_non_max * static_cast<real>(m.area) && !wins(m, masks[j]))
        keep = false;
    }
    if (keep) kept.push_back(m);
  }
  return kept;
}

std::vector<InstanceMask> nms_masks_greedy(const std::vector<InstanceMask>& masks,
                                           real p_non_max) {
  std::vector<size_t> order(masks.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return wins(masks[a], masks[b]); });
  std::vector<InstanceMask> kept;
  for (size_t oi : order) {
    const InstanceMask& m = masks[oi];
    bool suppressed = false;
    for (const InstanceMask& k : kept) {
      if (static_cast<real>(intersection_area(m, k)) > p_non_max * static_cast<real>(m.area)) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(m);
  }
  std::sort(kept.begin(), kept.end(),
            [](const InstanceMask& a, const InstanceMask& b) { return a.cell_index < b.cell_index; });
  return kept;
}

LabelImage masks_to_labels(const std::vector<InstanceMask>& masks, int height, int width) {
  std::vector<size_t> order(masks.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return wins(masks[a], masks[b]); });
  LabelImage labels(height, width);
  uint32_t id = 0;
  for (size_t oi : order) {
    const InstanceMask& m = masks[oi];
    ++id;
    for (size_t i = 0; i < m.mask.size(); ++i)
      if (m.mask[i] && labels.data[i] == 0) labels.data[i] = id;
  }
  return labels;
}

void write_instance_results(const std::string& stem, const std::vector<InstanceMask>& masks,
                            const GrayImage& image) {
  LabelImage labels = masks_to_labels(masks, image.height, image.width);
  write_label_png(stem + "_labels.png", labels);

  nlohmann::json j = nlohmann::json::array();
  std::vector<size_t> order(masks.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return wins(masks[a], masks[b]); });
  uint32_t id = 0;
  for (size_t oi : order) {
    const InstanceMask& m = masks[oi];
    j.push_back({{"id", ++id},
                 {"score", m.score},
                 {"cell", m.cell_index},
                 {"area", m.area},
                 {"box_center", {m.box.center_x(), m.box.center_y()}},
                 {"box_size", {m.box.w_obj, m.box.h_obj}}});
  }
  std::ofstream out(stem + "_scores.json");
  out << j.dump(2) << '\n';

  // overlay: gray image with instance boundaries tinted
  std::vector<uint8_t> rgb(image.size() * 3);
  for (size_t i = 0; i < image.size(); ++i) {
    const uint8_t g = static_cast<uint8_t>(std::clamp(image.data[i], 0.f, 1.f) * 255.f);
    rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = g;
  }
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      const uint32_t id0 = labels.at(y, x);
      if (id0 == 0) continue;
      const bool boundary = (x == 0 || labels.at(y, x - 1) != id0) ||
                            (x + 1 == labels.width || labels.at(y, x + 1) != id0) ||
                            (y == 0 || labels.at(y - 1, x) != id0) ||
                            (y + 1 == labels.height || labels.at(y + 1, x) != id0);
      if (!boundary) continue;
      const size_t i = static_cast<size_t>(y) * labels.width + x;
      rgb[3 * i] = 255;
      rgb[3 * i + 1] = static_cast<uint8_t>(40 * (id0 % 5));
      rgb[3 * i + 2] = static_cast<uint8_t>(60 * (id0 % 3));
    }
  }
  write_rgb_png(stem + "_overlay.png", image.height, image.width, rgb);
}

NDGRAD_NS_END
}  // namespace shapeseg
