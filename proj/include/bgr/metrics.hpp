#pragma once

// Panoptic quality.
//
// Per class: SQ = sum(IoU of matches) / TP, RQ = TP / (TP + FP/2 + FN/2),
// PQ = SQ * RQ. A predicted and a ground-truth segment match when they share
// a class and IoU > 0.5. Ground-truth void pixels are left out of the union,
// and an unmatched prediction lying more than half on void is not a false
// positive. Aggregates are unweighted means over classes with TP+FP+FN > 0.

#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "bgr/panoptic.hpp"

namespace bgr {

struct ClassInfo {
  std::string name;
  bool is_thing = false;
};

using ClassTable = std::map<int, ClassInfo>;

// Builds a table from the segments of the given maps (names are empty).
ClassTable class_table_from(const PanopticMap& a, const PanopticMap& b);

struct ClassStats {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  double iou_sum = 0.0;

  ClassStats& operator+=(const ClassStats& o);
  friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

/// Additive per-class counts; per-image stats are summed before ratios are
/// taken.
struct PQStats {
  std::map<int, ClassStats> per_class;

  PQStats& operator+=(const PQStats& o);
};

struct ClassQuality {
  ClassStats stats;
  bool is_thing = false;
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
};

struct QualitySummary {
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  std::size_t classes = 0;
};

struct PQResult {
  std::map<int, ClassQuality> per_class;  // counted classes only
  QualitySummary all;
  QualitySummary things;
  QualitySummary stuff;
};

PQStats panoptic_stats(const PanopticMap& pred, const PanopticMap& gt, const ClassTable& classes);
PQResult summarize(const PQStats& stats, const ClassTable& classes);
PQResult panoptic_quality(const PanopticMap& pred, const PanopticMap& gt,
                          const ClassTable& classes);

// Full-precision report: {"per_class":{...},"PQ","PQ_th","PQ_st","SQ","RQ",...}.
nlohmann::json to_json(const PQResult& result, const ClassTable& classes = {});
// Same document with every number rounded to 4 decimals, for display.
nlohmann::json rounded(const nlohmann::json& report, int decimals = 4);

}  // namespace bgr
