#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace bgr {

struct Segment {
  std::uint32_t id = 0;
  int class_id = 0;
  bool is_thing = false;
  std::uint64_t area = 0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Per-pixel segment ids (0 = void) plus the segment table.
///
/// Invariants (checked by validate()): ids are dense from 1, every nonzero
/// raster id appears exactly once in the table, and each area equals that
/// id's pixel count.
struct PanopticMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> ids;
  std::vector<Segment> segments;

  std::size_t pixels() const noexcept { return height * width; }
  // Throws std::logic_error describing the first broken invariant.
  void validate() const;
  const Segment* find(std::uint32_t id) const;

  friend bool operator==(const PanopticMap&, const PanopticMap&) = default;
};

// BGRP raster: magic "BGRP", uint32 LE height, uint32 LE width, then
// height*width uint32 LE ids. The segment table goes to "<path>.json" as
// [{"id":..,"class_id":..,"is_thing":..,"area":..}, ...].
inline constexpr std::size_t kBgrpHeaderBytes = 12;

std::vector<std::uint8_t> encode_bgrp(const PanopticMap& map);
// Decodes the raster only; segments are left empty.
PanopticMap decode_bgrp(std::span<const std::uint8_t> bytes);

void save_panoptic(const std::filesystem::path& path, const PanopticMap& map);
PanopticMap load_panoptic(const std::filesystem::path& path);

}  // namespace bgr
