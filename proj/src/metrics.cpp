#include "bgr/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "bgr/errors.hpp"

namespace bgr {

ClassStats& ClassStats::operator+=(const ClassStats& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  iou_sum += o.iou_sum;
  return *this;
}

PQStats& PQStats::operator+=(const PQStats& o) {
  for (const auto& [cls, s] : o.per_class) per_class[cls] += s;
  return *this;
}

ClassTable class_table_from(const PanopticMap& a, const PanopticMap& b) {
  ClassTable table;
  for (const auto* m : {&a, &b}) {
    for (const auto& s : m->segments) {
      auto [it, inserted] = table.emplace(s.class_id, ClassInfo{"", s.is_thing});
      if (!inserted && it->second.is_thing != s.is_thing)
        throw ConfigError("class " + std::to_string(s.class_id) +
                          " is marked both thing and stuff");
    }
  }
  return table;
}

PQStats panoptic_stats(const PanopticMap& pred, const PanopticMap& gt, const ClassTable& classes) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw ShapeError("panoptic_quality: prediction " + std::to_string(pred.height) + "x" +
                     std::to_string(pred.width) + " vs ground truth " +
                     std::to_string(gt.height) + "x" + std::to_string(gt.width));
  pred.validate();
  gt.validate();
  for (const auto* m : {&pred, &gt})
    for (const auto& s : m->segments)
      if (!classes.contains(s.class_id))
        throw ConfigError("panoptic_quality: class " + std::to_string(s.class_id) +
                          " absent from the class table");

  const std::size_t np = pred.segments.size();
  const std::size_t ng = gt.segments.size();
  // intersections[p][g], with column 0 holding pred pixels on gt void
  std::vector<std::uint64_t> inter((np + 1) * (ng + 1), 0);
  for (std::size_t i = 0; i < pred.ids.size(); ++i) inter[pred.ids[i] * (ng + 1) + gt.ids[i]]++;

  std::vector<bool> pred_matched(np + 1, false);
  std::vector<bool> gt_matched(ng + 1, false);
  PQStats stats;
  for (std::size_t p = 1; p <= np; ++p) {
    const Segment& ps = pred.segments[p - 1];
    const std::uint64_t void_p = inter[p * (ng + 1)];
    for (std::size_t g = 1; g <= ng; ++g) {
      const Segment& gs = gt.segments[g - 1];
      const std::uint64_t i = inter[p * (ng + 1) + g];
      if (i == 0 || ps.class_id != gs.class_id) continue;
      const double uni = static_cast<double>(ps.area + gs.area - i - void_p);
      const double iou = static_cast<double>(i) / uni;
      if (iou <= 0.5) continue;
      if (pred_matched[p] || gt_matched[g])
        throw std::logic_error("panoptic_quality: IoU > 0.5 matched a segment twice");
      pred_matched[p] = true;
      gt_matched[g] = true;
      auto& cs = stats.per_class[gs.class_id];
      cs.tp += 1;
      cs.iou_sum += iou;
    }
  }
  for (std::size_t g = 1; g <= ng; ++g)
    if (!gt_matched[g]) stats.per_class[gt.segments[g - 1].class_id].fn += 1;
  for (std::size_t p = 1; p <= np; ++p) {
    if (pred_matched[p]) continue;
    const Segment& ps = pred.segments[p - 1];
    const std::uint64_t void_p = inter[p * (ng + 1)];
    if (static_cast<double>(void_p) / static_cast<double>(ps.area) > 0.5) continue;
    stats.per_class[ps.class_id].fp += 1;
  }
  return stats;
}

PQResult summarize(const PQStats& stats, const ClassTable& classes) {
  PQResult r;
  auto add = [](QualitySummary& s, const ClassQuality& q) {
    s.pq += q.pq;
    s.sq += q.sq;
    s.rq += q.rq;
    s.classes += 1;
  };
  for (const auto& [cls, s] : stats.per_class) {
    if (s.tp + s.fp + s.fn == 0) continue;
    auto it = classes.find(cls);
    if (it == classes.end())
      throw ConfigError("summarize: class " + std::to_string(cls) + " absent from the class table");
    ClassQuality q;
    q.stats = s;
    q.is_thing = it->second.is_thing;
    q.sq = s.tp > 0 ? s.iou_sum / static_cast<double>(s.tp) : 0.0;
    q.rq = static_cast<double>(s.tp) /
           (static_cast<double>(s.tp) + 0.5 * static_cast<double>(s.fp) +
            0.5 * static_cast<double>(s.fn));
    q.pq = q.sq * q.rq;
    r.per_class[cls] = q;
    add(r.all, q);
    add(q.is_thing ? r.things : r.stuff, q);
  }
  for (auto* s : {&r.all, &r.things, &r.stuff}) {
    if (s->classes == 0) continue;
    const double n = static_cast<double>(s->classes);
    s->pq /= n;
    s->sq /= n;
    s->rq /= n;
  }
  return r;
}

PQResult panoptic_quality(const PanopticMap& pred, const PanopticMap& gt,
                          const ClassTable& classes) {
  return summarize(panoptic_stats(pred, gt, classes), classes);
}

nlohmann::json to_json(const PQResult& result, const ClassTable& classes) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [cls, q] : result.per_class) {
    nlohmann::json e = {{"pq", q.pq},         {"sq", q.sq},         {"rq", q.rq},
                        {"tp", q.stats.tp},   {"fp", q.stats.fp},   {"fn", q.stats.fn},
                        {"iou_sum", q.stats.iou_sum}, {"is_thing", q.is_thing}};
    if (auto it = classes.find(cls); it != classes.end() && !it->second.name.empty())
      e["name"] = it->second.name;
    per[std::to_string(cls)] = e;
  }
  return {{"per_class", per},
          {"PQ", result.all.pq},
          {"SQ", result.all.sq},
          {"RQ", result.all.rq},
          {"PQ_th", result.things.pq},
          {"SQ_th", result.things.sq},
          {"RQ_th", result.things.rq},
          {"PQ_st", result.stuff.pq},
          {"SQ_st", result.stuff.sq},
          {"RQ_st", result.stuff.rq},
          {"n_classes", result.all.classes},
          {"n_things", result.things.classes},
          {"n_stuff", result.stuff.classes}};
}

nlohmann::json rounded(const nlohmann::json& report, int decimals) {
  if (report.is_object() || report.is_array()) {
    nlohmann::json out = report;
    for (auto& v : out) v = rounded(v, decimals);
    return out;
  }
  if (report.is_number_float()) {
    const double scale = std::pow(10.0, decimals);
    return std::round(report.get<double>() * scale) / scale;
  }
  return report;
}

}  // namespace bgr
