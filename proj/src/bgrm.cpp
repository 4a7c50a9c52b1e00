#include "bgr/bgrm.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "bgr/errors.hpp"

namespace bgr {

namespace le {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

double get_f64(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace le

std::vector<std::uint8_t> encode_bgrm(const Mat& m) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (m.rows() > kMax || m.cols() > kMax)
    throw ShapeError("encode_bgrm: " + m.shape_str() + " exceeds uint32 dimensions");
  std::vector<std::uint8_t> out;
  out.reserve(kBgrmHeaderBytes + 8 * m.size());
  for (char c : {'B', 'G', 'R', 'M'}) out.push_back(static_cast<std::uint8_t>(c));
  le::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  le::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  le::put_u32(out, 0);
  for (double v : m.data()) le::put_f64(out, v);
  return out;
}

Mat decode_bgrm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kBgrmHeaderBytes)
    throw FormatError("BGRM: truncated header, " + std::to_string(bytes.size()) + " bytes",
                      bytes.size());
  static constexpr char kMagic[4] = {'B', 'G', 'R', 'M'};
  for (std::size_t i = 0; i < 4; ++i)
    if (bytes[i] != static_cast<std::uint8_t>(kMagic[i]))
      throw FormatError("BGRM: bad magic", i);
  const std::size_t rows = le::get_u32(bytes, 4);
  const std::size_t cols = le::get_u32(bytes, 8);
  for (std::size_t i = 12; i < 16; ++i)
    if (bytes[i] != 0) throw FormatError("BGRM: reserved header bytes must be zero", i);
  const std::size_t expected = kBgrmHeaderBytes + 8 * rows * cols;
  if (bytes.size() != expected)
    throw FormatError("BGRM: payload for " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " needs " + std::to_string(expected) + " bytes, file has " +
                          std::to_string(bytes.size()),
                      std::min(bytes.size(), expected));
  std::vector<double> data(rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = le::get_f64(bytes, kBgrmHeaderBytes + 8 * i);
  return Mat(rows, cols, std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void save_bgrm(const std::filesystem::path& path, const Mat& m) {
  write_file_bytes(path, encode_bgrm(m));
}

Mat load_bgrm(const std::filesystem::path& path) { return decode_bgrm(read_file_bytes(path)); }

}  // namespace bgr
