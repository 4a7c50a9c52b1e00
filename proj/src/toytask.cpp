#include "bgr/toytask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "bgr/errors.hpp"
#include "bgr/random.hpp"

namespace bgr {

void SceneConfig::validate() const {
  if (height < 4 || width < 4)
    throw ConfigError("scene: height and width must be >= 4, got " + std::to_string(height) +
                      "x" + std::to_string(width));
  if (channels == 0) throw ConfigError("scene: channels must be >= 1");
  if (stuff_classes == 0 || thing_classes == 0)
    throw ConfigError("scene: needs at least one stuff and one thing class");
  if (min_bands == 0 || min_bands > max_bands || max_bands > stuff_classes ||
      2 * max_bands > height)
    throw ConfigError("scene: band counts must satisfy 1 <= min <= max <= stuff classes, "
                      "with at least two rows per band");
  if (min_things > max_things) throw ConfigError("scene: min_things exceeds max_things");
  if (!host_stuff.empty() && host_stuff.size() != thing_classes)
    throw ConfigError("scene: host_stuff needs one entry per thing class");
  for (int h : host_stuff)
    if (h < 0 || static_cast<std::size_t>(h) >= stuff_classes)
      throw ConfigError("scene: host stuff class " + std::to_string(h) + " out of range");
  for (double v : {feature_noise, thing_signal, score_noise, proposal_noise})
    if (!(v >= 0.0)) throw ConfigError("scene: noise and signal levels must be >= 0");
  for (double p : {duplicate_prob, label_flip_prob})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("scene: probabilities must lie in [0,1]");
}

int SceneConfig::host_of(std::size_t thing_class) const {
  if (!host_stuff.empty()) return host_stuff[thing_class];
  return static_cast<int>(thing_class % stuff_classes);
}

int stuff_panoptic_id(const SceneConfig&, int stuff_class) { return stuff_class; }

int thing_panoptic_id(const SceneConfig& cfg, int thing_class) {
  return static_cast<int>(cfg.stuff_classes) + thing_class;
}

ClassTable toy_class_table(const SceneConfig& cfg) {
  ClassTable t;
  for (std::size_t s = 0; s < cfg.stuff_classes; ++s)
    t[stuff_panoptic_id(cfg, static_cast<int>(s))] = {"stuff" + std::to_string(s), false};
  for (std::size_t a = 0; a < cfg.thing_classes; ++a)
    t[thing_panoptic_id(cfg, static_cast<int>(a))] = {"thing" + std::to_string(a), true};
  return t;
}

Mat class_embedding_matrix(const SceneConfig& cfg) {
  const std::size_t n = cfg.channels;
  const std::size_t k = cfg.stuff_classes + cfg.thing_classes;
  Rng rng(cfg.embedding_seed);
  Mat e = rng.normal_mat(n, k);
  if (n < k) return e;
  // Gram-Schmidt over columns
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t r = 0; r < n; ++r) dot += e(r, c) * e(r, p);
      for (std::size_t r = 0; r < n; ++r) e(r, c) -= dot * e(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) norm += e(r, c) * e(r, c);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < n; ++r) e(r, c) /= norm;
  }
  return e;
}

namespace {

std::vector<std::size_t> band_rows(std::size_t height, std::size_t bands, Rng& rng) {
  // returns band start rows plus a final sentinel == height
  std::vector<std::size_t> cuts{0};
  for (std::size_t b = 1; b < bands; ++b) {
    auto cut = static_cast<std::int64_t>(b * height / bands) + rng.uniform_int(-1, 1);
    const auto lo = static_cast<std::int64_t>(cuts.back() + 2);
    const auto hi = static_cast<std::int64_t>(height - 2 * (bands - b));
    cuts.push_back(static_cast<std::size_t>(std::clamp(cut, lo, hi)));
  }
  cuts.push_back(height);
  return cuts;
}

std::vector<std::uint8_t> shifted(const std::vector<std::uint8_t>& mask, std::size_t h,
                                  std::size_t w, int dy, int dx) {
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask[y * w + x]) continue;
      const auto ny = static_cast<std::int64_t>(y) + dy;
      const auto nx = static_cast<std::int64_t>(x) + dx;
      if (ny < 0 || nx < 0 || ny >= static_cast<std::int64_t>(h) ||
          nx >= static_cast<std::int64_t>(w))
        continue;
      out[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)] = 1;
    }
  return out;
}

std::vector<double> pooled_feature(const Mat& features, const std::vector<std::uint8_t>& mask) {
  std::vector<double> f(features.rows(), 0.0);
  std::size_t count = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    ++count;
    for (std::size_t c = 0; c < features.rows(); ++c) f[c] += features(c, p);
  }
  for (auto& v : f) v /= static_cast<double>(std::max<std::size_t>(count, 1));
  return f;
}

}  // namespace

ToyScene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t h = cfg.height;
  const std::size_t w = cfg.width;
  const std::size_t n_pix = h * w;

  ToyScene scene;
  scene.height = h;
  scene.width = w;

  // stuff bands
  const auto n_bands = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(cfg.min_bands),
                      static_cast<std::int64_t>(cfg.max_bands)));
  std::vector<int> classes(cfg.stuff_classes);
  std::iota(classes.begin(), classes.end(), 0);
  for (std::size_t i = classes.size(); i > 1; --i)
    std::swap(classes[i - 1],
              classes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
  const auto cuts = band_rows(h, n_bands, rng);
  scene.stuff_labels.assign(n_pix, 0);
  for (std::size_t b = 0; b < n_bands; ++b)
    for (std::size_t y = cuts[b]; y < cuts[b + 1]; ++y)
      for (std::size_t x = 0; x < w; ++x) scene.stuff_labels[y * w + x] = classes[b];

  // things, each fully inside a band of its host class, no overlaps
  std::vector<int> owner(n_pix, -1);
  const auto n_things = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(cfg.min_things),
                      static_cast<std::int64_t>(cfg.max_things)));
  for (std::size_t attempt = 0; attempt < 50 * std::max<std::size_t>(n_things, 1) &&
                                scene.things.size() < n_things;
       ++attempt) {
    const auto b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_bands - 1)));
    std::vector<int> candidates;
    for (std::size_t a = 0; a < cfg.thing_classes; ++a)
      if (cfg.host_of(a) == classes[b]) candidates.push_back(static_cast<int>(a));
    if (candidates.empty()) continue;
    const int cls = candidates[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(candidates.size() - 1)))];
    const std::size_t top = cuts[b];
    const std::size_t band_h = cuts[b + 1] - cuts[b];
    std::vector<std::uint8_t> mask(n_pix, 0);
    if (rng.bernoulli(0.5)) {
      const auto sh = static_cast<std::size_t>(rng.uniform_int(2, 3));
      const auto sw = static_cast<std::size_t>(rng.uniform_int(2, 3));
      if (sh > band_h) continue;
      const auto y0 = top + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(band_h - sh)));
      const auto x0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w - sw)));
      for (std::size_t y = y0; y < y0 + sh; ++y)
        for (std::size_t x = x0; x < x0 + sw; ++x) mask[y * w + x] = 1;
    } else {
      const double r = rng.bernoulli(0.5) ? 1.0 : 1.5;
      if (band_h < 3) continue;
      const auto cy = top + 1 + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(band_h - 3)));
      const auto cx = 1 + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w - 3)));
      for (std::size_t y = cy - 1; y <= cy + 1; ++y)
        for (std::size_t x = cx - 1; x <= cx + 1; ++x) {
          const double dy = static_cast<double>(y) - static_cast<double>(cy);
          const double dx = static_cast<double>(x) - static_cast<double>(cx);
          if (dy * dy + dx * dx <= r * r) mask[y * w + x] = 1;
        }
    }
    bool clash = false;
    for (std::size_t p = 0; p < n_pix && !clash; ++p) clash = mask[p] && owner[p] >= 0;
    if (clash) continue;
    for (std::size_t p = 0; p < n_pix; ++p)
      if (mask[p]) owner[p] = static_cast<int>(scene.things.size());
    scene.things.push_back({cls, std::move(mask)});
  }

  // features: embedding of the one-hot label map plus noise
  const Mat embed = class_embedding_matrix(cfg);
  Mat feat(cfg.channels, n_pix);
  for (std::size_t p = 0; p < n_pix; ++p) {
    const auto s = static_cast<std::size_t>(scene.stuff_labels[p]);
    for (std::size_t c = 0; c < cfg.channels; ++c) feat(c, p) = embed(c, s);
    if (owner[p] >= 0) {
      const auto t = cfg.stuff_classes +
                     static_cast<std::size_t>(scene.things[static_cast<std::size_t>(owner[p])].class_id);
      for (std::size_t c = 0; c < cfg.channels; ++c) feat(c, p) += cfg.thing_signal * embed(c, t);
    }
  }
  if (cfg.feature_noise > 0.0)
    for (auto& v : feat.data()) v += rng.normal(0.0, cfg.feature_noise);

  // coarse scores: 3x3 box-blurred one-hot stuff logits plus noise
  Mat scores(cfg.stuff_classes, n_pix);
  for (std::size_t c = 0; c < cfg.stuff_classes; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        int count = 0;
        for (std::size_t yy = (y == 0 ? 0 : y - 1); yy <= std::min(h - 1, y + 1); ++yy)
          for (std::size_t xx = (x == 0 ? 0 : x - 1); xx <= std::min(w - 1, x + 1); ++xx) {
            acc += scene.stuff_labels[yy * w + xx] == static_cast<int>(c) ? 1.0 : 0.0;
            ++count;
          }
        scores(c, y * w + x) = cfg.score_signal * acc / count;
      }
  if (cfg.score_noise > 0.0)
    for (auto& v : scores.data()) v += rng.normal(0.0, cfg.score_noise);

  // proposals: each ground-truth shape, then optionally a shifted duplicate
  static constexpr int kShifts[4][2] = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
  for (const auto& thing : scene.things) {
    auto add = [&](std::vector<std::uint8_t> mask, double score) {
      Proposal prop;
      prop.feature = pooled_feature(feat, mask);
      if (cfg.proposal_noise > 0.0)
        for (auto& v : prop.feature) v += rng.normal(0.0, cfg.proposal_noise);
      prop.score = score;
      int predicted = thing.class_id;
      if (rng.bernoulli(cfg.label_flip_prob))
        predicted = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.thing_classes - 1)));
      prop.class_id = predicted;
      prop.mask = std::move(mask);
      scene.regions.proposals.push_back(std::move(prop));
      scene.proposal_labels.push_back(thing.class_id);
    };
    add(thing.mask, rng.uniform(0.8, 1.0));
    if (rng.bernoulli(cfg.duplicate_prob)) {
      const auto& s = kShifts[rng.uniform_int(0, 3)];
      auto dup = shifted(thing.mask, h, w, s[0], s[1]);
      const double score = rng.uniform(0.4, 0.8);
      if (std::any_of(dup.begin(), dup.end(), [](std::uint8_t v) { return v != 0; }))
        add(std::move(dup), score);
    }
  }

  scene.features = FeatureMap(std::move(feat), h, w);
  scene.coarse_scores = ScoreMap(std::move(scores), h, w);

  // ground truth: things first, then one segment per stuff class present
  PanopticMap& gt = scene.ground_truth;
  gt.height = h;
  gt.width = w;
  gt.ids.assign(n_pix, 0);
  for (std::size_t i = 0; i < scene.things.size(); ++i) {
    const auto id = static_cast<std::uint32_t>(i + 1);
    std::uint64_t area = 0;
    for (std::size_t p = 0; p < n_pix; ++p)
      if (scene.things[i].mask[p]) {
        gt.ids[p] = id;
        ++area;
      }
    gt.segments.push_back({id, thing_panoptic_id(cfg, scene.things[i].class_id), true, area});
  }
  std::map<int, std::uint64_t> stuff_area;
  for (std::size_t p = 0; p < n_pix; ++p)
    if (gt.ids[p] == 0) ++stuff_area[scene.stuff_labels[p]];
  std::map<int, std::uint32_t> stuff_id;
  for (const auto& [cls, area] : stuff_area) {
    const auto id = static_cast<std::uint32_t>(gt.segments.size() + 1);
    stuff_id[cls] = id;
    gt.segments.push_back({id, stuff_panoptic_id(cfg, cls), false, area});
  }
  for (std::size_t p = 0; p < n_pix; ++p)
    if (gt.ids[p] == 0) gt.ids[p] = stuff_id.at(scene.stuff_labels[p]);
  return scene;
}

EmbeddingTable toy_embeddings(const SceneConfig& cfg) {
  const std::size_t s = cfg.stuff_classes;
  const std::size_t t = cfg.thing_classes;
  EmbeddingTable table;
  table.stuff = Mat(s, s + t);
  table.thing = Mat(t, s + t);
  for (std::size_t i = 0; i < s; ++i) {
    table.stuff(i, i) = 1.0;
    table.stuff_names.push_back("stuff" + std::to_string(i));
  }
  for (std::size_t a = 0; a < t; ++a) {
    table.thing(a, s + a) = 1.0;
    table.thing(a, static_cast<std::size_t>(cfg.host_of(a))) = 0.8;
    table.thing_names.push_back("thing" + std::to_string(a));
  }
  return table;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  auto rows = [](const Mat& m, const std::vector<std::string>& names) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r)
      arr.push_back({{"name", names.at(r)},
                     {"embedding", std::vector<double>(m.row(r).begin(), m.row(r).end())}});
    return arr;
  };
  const nlohmann::json doc = {{"thing_classes", rows(table.thing, table.thing_names)},
                              {"stuff_classes", rows(table.stuff, table.stuff_names)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
  EmbeddingTable table;
  std::size_t dim = 0;
  auto read = [&](const char* key, Mat& m, std::vector<std::string>& names) {
    const auto& arr = doc.at(key);
    std::vector<double> data;
    for (const auto& e : arr) {
      auto v = e.at("embedding").get<std::vector<double>>();
      if (dim == 0) dim = v.size();
      if (v.size() != dim || dim == 0)
        throw ConfigError(path.string() + ": embeddings must share one nonzero length");
      data.insert(data.end(), v.begin(), v.end());
      names.push_back(e.value("name", ""));
    }
    m = Mat(arr.size(), dim, std::move(data));
  };
  read("thing_classes", table.thing, table.thing_names);
  read("stuff_classes", table.stuff, table.stuff_names);
  return table;
}

}  // namespace bgr
