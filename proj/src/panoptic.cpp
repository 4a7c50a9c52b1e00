#include "bgr/panoptic.hpp"

#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "bgr/bgrm.hpp"
#include "bgr/errors.hpp"

namespace bgr {

void PanopticMap::validate() const {
  if (ids.size() != height * width)
    throw std::logic_error("panoptic map: raster has " + std::to_string(ids.size()) +
                           " pixels, expected " + std::to_string(height * width));
  std::vector<std::uint64_t> counts(segments.size() + 1, 0);
  for (std::size_t i = 0; i < segments.size(); ++i)
    if (segments[i].id != i + 1)
      throw std::logic_error("panoptic map: segment ids must be dense from 1, entry " +
                             std::to_string(i) + " has id " + std::to_string(segments[i].id));
  for (std::uint32_t id : ids) {
    if (id > segments.size())
      throw std::logic_error("panoptic map: raster id " + std::to_string(id) +
                             " missing from the segment table");
    ++counts[id];
  }
  for (const auto& s : segments)
    if (counts[s.id] != s.area)
      throw std::logic_error("panoptic map: segment " + std::to_string(s.id) + " has area " +
                             std::to_string(s.area) + " but " + std::to_string(counts[s.id]) +
                             " pixels");
}

const Segment* PanopticMap::find(std::uint32_t id) const {
  if (id == 0 || id > segments.size()) return nullptr;
  return &segments[id - 1];
}

std::vector<std::uint8_t> encode_bgrp(const PanopticMap& map) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (map.height > kMax || map.width > kMax)
    throw ShapeError("encode_bgrp: raster dimensions exceed uint32");
  if (map.ids.size() != map.pixels()) throw ShapeError("encode_bgrp: raster size mismatch");
  std::vector<std::uint8_t> out;
  out.reserve(kBgrpHeaderBytes + 4 * map.ids.size());
  for (char c : {'B', 'G', 'R', 'P'}) out.push_back(static_cast<std::uint8_t>(c));
  le::put_u32(out, static_cast<std::uint32_t>(map.height));
  le::put_u32(out, static_cast<std::uint32_t>(map.width));
  for (std::uint32_t id : map.ids) le::put_u32(out, id);
  return out;
}

PanopticMap decode_bgrp(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kBgrpHeaderBytes)
    throw FormatError("BGRP: truncated header, " + std::to_string(bytes.size()) + " bytes",
                      bytes.size());
  static constexpr char kMagic[4] = {'B', 'G', 'R', 'P'};
  for (std::size_t i = 0; i < 4; ++i)
    if (bytes[i] != static_cast<std::uint8_t>(kMagic[i])) throw FormatError("BGRP: bad magic", i);
  PanopticMap map;
  map.height = le::get_u32(bytes, 4);
  map.width = le::get_u32(bytes, 8);
  const std::size_t expected = kBgrpHeaderBytes + 4 * map.pixels();
  if (bytes.size() != expected)
    throw FormatError("BGRP: " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                          " raster needs " + std::to_string(expected) + " bytes, file has " +
                          std::to_string(bytes.size()),
                      std::min(bytes.size(), expected));
  map.ids.resize(map.pixels());
  for (std::size_t i = 0; i < map.ids.size(); ++i)
    map.ids[i] = le::get_u32(bytes, kBgrpHeaderBytes + 4 * i);
  return map;
}

void save_panoptic(const std::filesystem::path& path, const PanopticMap& map) {
  write_file_bytes(path, encode_bgrp(map));
  nlohmann::json table = nlohmann::json::array();
  for (const auto& s : map.segments)
    table.push_back(
        {{"id", s.id}, {"class_id", s.class_id}, {"is_thing", s.is_thing}, {"area", s.area}});
  const auto side = path.string() + ".json";
  std::ofstream out(side, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + side);
  out << table.dump(2) << '\n';
}

PanopticMap load_panoptic(const std::filesystem::path& path) {
  PanopticMap map = decode_bgrp(read_file_bytes(path));
  const auto side = path.string() + ".json";
  std::ifstream in(side);
  if (!in) throw std::runtime_error("missing segment table " + side);
  nlohmann::json table;
  try {
    table = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(side + ": " + e.what(), e.byte);
  }
  if (!table.is_array()) throw FormatError(side + ": segment table must be an array", 0);
  for (const auto& entry : table) {
    map.segments.push_back({entry.at("id").get<std::uint32_t>(), entry.at("class_id").get<int>(),
                            entry.at("is_thing").get<bool>(),
                            entry.at("area").get<std::uint64_t>()});
  }
  try {
    map.validate();
  } catch (const std::logic_error& e) {
    throw FormatError(path.string() + ": " + e.what(), kBgrpHeaderBytes);
  }
  return map;
}

}  // namespace bgr
