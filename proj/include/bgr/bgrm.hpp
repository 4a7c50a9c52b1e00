#pragma once

// "BGRM" matrix files: magic "BGRM", uint32 LE rows, uint32 LE cols, four
// zero bytes, then rows*cols float64 LE in row-major order.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bgr/mat.hpp"

namespace bgr {

inline constexpr std::size_t kBgrmHeaderBytes = 16;

std::vector<std::uint8_t> encode_bgrm(const Mat& m);
// Throws FormatError with the byte offset of the first violation.
Mat decode_bgrm(std::span<const std::uint8_t> bytes);

void save_bgrm(const std::filesystem::path& path, const Mat& m);
Mat load_bgrm(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

namespace le {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset);
double get_f64(std::span<const std::uint8_t> in, std::size_t offset);

}  // namespace le

}  // namespace bgr
