#include "bgr/graphs.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bgr/bgrm.hpp"
#include "bgr/errors.hpp"
#include "bgr/kernels.hpp"

namespace bgr {

ChannelRaster::ChannelRaster(Mat values, std::size_t height, std::size_t width)
    : values_(std::move(values)), height_(height), width_(width) {
  if (height_ == 0 || width_ == 0 || values_.rows() == 0)
    throw ShapeError("raster: channels, height and width must be >= 1");
  if (values_.cols() != height_ * width_)
    throw ShapeError("raster: " + values_.shape_str() + " values for " +
                     std::to_string(height_) + "x" + std::to_string(width_) + " pixels");
  if (!values_.all_finite()) throw NumericError("raster: values must be finite");
}

Mat build_thing_nodes(const RegionSet& regions) {
  if (regions.empty()) return Mat();
  const std::size_t n = regions.proposals.front().feature.size();
  Mat x(regions.size(), n);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& f = regions.proposals[i].feature;
    if (f.size() != n)
      throw ShapeError("build_thing_nodes: proposal " + std::to_string(i) + " has feature length " +
                       std::to_string(f.size()) + ", expected " + std::to_string(n));
    std::copy(f.begin(), f.end(), x.row(i).begin());
  }
  return x;
}

Var class_centers(Var features, Var scores) {
  if (features.cols() != scores.cols())
    throw ShapeError("class_centers: feature map has " + std::to_string(features.cols()) +
                     " pixels, score map has " + std::to_string(scores.cols()));
  // S^T is HW x C; normalizing each class column over HW is a row softmax of S.
  Var weights = ad::softmax(scores, Axis::rows);
  return ad::matmul(weights, ad::transpose(features));
}

StuffNodeSet extract_class_centers(const FeatureMap& features, const ScoreMap& scores,
                                   std::vector<std::string> class_names) {
  if (features.height() != scores.height() || features.width() != scores.width())
    throw ShapeError("extract_class_centers: feature map " + std::to_string(features.height()) +
                     "x" + std::to_string(features.width()) + " vs score map " +
                     std::to_string(scores.height()) + "x" + std::to_string(scores.width()));
  if (!class_names.empty() && class_names.size() != scores.classes())
    throw ShapeError("extract_class_centers: " + std::to_string(class_names.size()) +
                     " names for " + std::to_string(scores.classes()) + " classes");
  Tape tape;
  Var centers = class_centers(tape.constant(features.values()), tape.constant(scores.values()));
  return StuffNodeSet{centers.value(), std::move(class_names)};
}

Mat center_similarity_map(const FeatureMap& features, const StuffNodeSet& nodes,
                          std::size_t class_id) {
  if (class_id >= nodes.centers.rows())
    throw ConfigError("center_similarity_map: class " + std::to_string(class_id) + " out of " +
                      std::to_string(nodes.centers.rows()) + " centers");
  if (nodes.centers.cols() != features.channels())
    throw ShapeError("center_similarity_map: centers have width " +
                     std::to_string(nodes.centers.cols()) + ", features have " +
                     std::to_string(features.channels()) + " channels");
  const Mat pixels = transpose(features.values());  // HW x N
  const Mat center = slice_rows(nodes.centers, class_id, class_id + 1);
  Mat out(features.height(), features.width());
  kernels::cosine_rows(pixels.data(), center.data(), out.data(), pixels.rows(), 1,
                       pixels.cols());
  return out;
}

Mat cosine_similarity_matrix(const Mat& embeddings) {
  const std::size_t n = embeddings.rows();
  Mat sim(n, n);
  kernels::cosine_rows(embeddings.data(), embeddings.data(), sim.data(), n, n, embeddings.cols());
  return sim;
}

Mat cosine_adjacency(const Mat& embeddings) {
  if (embeddings.rows() == 0) throw ShapeError("cosine_adjacency: needs at least one row");
  Mat a = cosine_similarity_matrix(embeddings);
  const std::size_t n = a.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      a(i, j) = std::max(a(i, j), 0.0);
      s += a(i, j);
    }
    for (std::size_t j = 0; j < n; ++j)
      a(i, j) = s > 0.0 ? a(i, j) / s : 1.0 / static_cast<double>(n);
  }
  return a;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void save_raster(const std::filesystem::path& path, const ChannelRaster& raster) {
  save_bgrm(path, raster.values());
  const nlohmann::json meta = {{"layout", "CHW"},
                               {"channels", raster.channels()},
                               {"height", raster.height()},
                               {"width", raster.width()}};
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + sidecar_path(path).string());
  out << meta.dump(2) << '\n';
}

ChannelRaster load_raster(const std::filesystem::path& path) {
  Mat values = load_bgrm(path);
  const auto side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw std::runtime_error("missing raster sidecar " + side.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(side.string() + ": " + e.what(), e.byte);
  }
  if (meta.value("layout", "") != "CHW")
    throw FormatError(side.string() + ": layout must be \"CHW\"", 0);
  const auto channels = meta.at("channels").get<std::size_t>();
  const auto height = meta.at("height").get<std::size_t>();
  const auto width = meta.at("width").get<std::size_t>();
  if (channels != values.rows() || height * width != values.cols())
    throw FormatError(side.string() + ": sidecar " + std::to_string(channels) + "x" +
                          std::to_string(height) + "x" + std::to_string(width) +
                          " disagrees with matrix " + values.shape_str(),
                      4);
  return ChannelRaster(std::move(values), height, width);
}

}  // namespace bgr
