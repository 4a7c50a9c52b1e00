#include "bgr/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "bgr/errors.hpp"

namespace bgr {

double FusionConfig::resolved_min_stuff_area(std::size_t height, std::size_t width) const {
  if (min_stuff_area) return *min_stuff_area;
  const double pixels = static_cast<double>(height * width);
  return pixels < 4096.0 ? 0.01 * pixels : 4096.0;
}

PanopticMap fuse(std::span<const InstancePrediction> instances, const SemanticRaster& semantic,
                 const FusionConfig& cfg) {
  const std::size_t n_pix = semantic.height * semantic.width;
  if (semantic.labels.size() != n_pix)
    throw ShapeError("fuse: semantic raster has " + std::to_string(semantic.labels.size()) +
                     " labels for " + std::to_string(semantic.height) + "x" +
                     std::to_string(semantic.width));
  if (!(cfg.keep_frac >= 0.0 && cfg.keep_frac <= 1.0))
    throw ConfigError("fuse: keep_frac must lie in [0,1]");
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].mask.size() != n_pix)
      throw ShapeError("fuse: instance " + std::to_string(i) + " mask has " +
                       std::to_string(instances[i].mask.size()) + " pixels, expected " +
                       std::to_string(n_pix));
    if (!std::isfinite(instances[i].score))
      throw ConfigError("fuse: instance " + std::to_string(i) + " has a non-finite score");
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (instances[i].score >= cfg.score_thresh) order.push_back(i);
  auto normalized = [](const std::vector<std::uint8_t>& m) {
    std::vector<std::uint8_t> out(m.size());
    std::transform(m.begin(), m.end(), out.begin(), [](std::uint8_t v) { return v ? 1 : 0; });
    return out;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ia = instances[a];
    const auto& ib = instances[b];
    if (ia.score != ib.score) return ia.score > ib.score;
    const auto ma = normalized(ia.mask);
    const auto mb = normalized(ib.mask);
    if (ma != mb) return ma > mb;
    return ia.class_id < ib.class_id;
  });

  PanopticMap out;
  out.height = semantic.height;
  out.width = semantic.width;
  out.ids.assign(n_pix, 0);

  for (std::size_t idx : order) {
    const auto& inst = instances[idx];
    std::uint64_t area = 0;
    std::uint64_t free = 0;
    for (std::size_t p = 0; p < n_pix; ++p) {
      if (!inst.mask[p]) continue;
      ++area;
      if (out.ids[p] == 0) ++free;
    }
    if (area == 0) continue;
    if (static_cast<double>(free) / static_cast<double>(area) < cfg.keep_frac || free == 0)
      continue;
    const auto id = static_cast<std::uint32_t>(out.segments.size() + 1);
    for (std::size_t p = 0; p < n_pix; ++p)
      if (inst.mask[p] && out.ids[p] == 0) out.ids[p] = id;
    out.segments.push_back({id, inst.class_id, true, free});
  }

  std::map<int, std::uint64_t> stuff_area;
  for (std::size_t p = 0; p < n_pix; ++p)
    if (out.ids[p] == 0 && semantic.labels[p] >= 0) ++stuff_area[semantic.labels[p]];
  const double min_area = cfg.resolved_min_stuff_area(semantic.height, semantic.width);
  std::map<int, std::uint32_t> stuff_id;
  for (const auto& [cls, area] : stuff_area) {
    if (static_cast<double>(area) < min_area) continue;
    const auto id = static_cast<std::uint32_t>(out.segments.size() + 1);
    stuff_id[cls] = id;
    out.segments.push_back({id, cls, false, area});
  }
  for (std::size_t p = 0; p < n_pix; ++p) {
    if (out.ids[p] != 0 || semantic.labels[p] < 0) continue;
    if (auto it = stuff_id.find(semantic.labels[p]); it != stuff_id.end()) out.ids[p] = it->second;
  }
  return out;
}

}  // namespace bgr
