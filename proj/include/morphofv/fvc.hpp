#pragma once

// FVC1 bulk vector files.
//
//   bytes 0..3   "FVC1"
//   u32 LE       row count
//   u32 LE       dimension
//   f32 LE       rows * dimension values, row-major
//   u64 LE       sum of the value bytes modulo 2^64

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morphofv/error.hpp"

namespace morphofv {

struct VectorTable {
  std::uint32_t rows = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;  // rows * dim

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * dim, dim);
  }

  void append(std::span<const double> v) {
    if (rows == 0 && values.empty()) dim = static_cast<std::uint32_t>(v.size());
    if (v.size() != dim) throw DimensionError("VectorTable: row length mismatch");
    for (double x : v) values.push_back(static_cast<float>(x));
    ++rows;
  }
};

struct FvcHeader {
  std::uint32_t rows = 0;
  std::uint32_t dim = 0;
};

namespace detail {

inline constexpr std::size_t kFvcHeaderBytes = 12;
inline constexpr std::size_t kFvcTrailerBytes = 8;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFFu));
}

template <typename T>
T get_le(const unsigned char* p) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(p[i]) << (8 * i);
  return value;
}

inline FvcHeader parse_fvc_header(const unsigned char* p, std::size_t size, const std::string& where) {
  if (size < kFvcHeaderBytes) throw FormatError(where + ": truncated FVC1 header");
  if (std::memcmp(p, "FVC1", 4) != 0) throw FormatError(where + ": bad magic, not an FVC1 file");
  return {get_le<std::uint32_t>(p + 4), get_le<std::uint32_t>(p + 8)};
}

}  // namespace detail

inline std::string encode_fvc(const VectorTable& table) {
  if (table.values.size() != static_cast<std::size_t>(table.rows) * table.dim)
    throw DimensionError("encode_fvc: value count does not match rows * dim");
  std::string out = "FVC1";
  detail::put_le(out, table.rows);
  detail::put_le(out, table.dim);
  std::uint64_t checksum = 0;
  for (float f : table.values) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) {
      const auto byte = static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu);
      out.push_back(static_cast<char>(byte));
      checksum += byte;
    }
  }
  detail::put_le(out, checksum);
  return out;
}

inline VectorTable decode_fvc(std::string_view bytes, const std::string& where = "FVC1") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const FvcHeader h = detail::parse_fvc_header(p, bytes.size(), where);
  const std::size_t payload = static_cast<std::size_t>(h.rows) * h.dim * 4;
  if (bytes.size() != detail::kFvcHeaderBytes + payload + detail::kFvcTrailerBytes)
    throw FormatError(where + ": size " + std::to_string(bytes.size()) + " does not match " +
                      std::to_string(h.rows) + " rows of dimension " + std::to_string(h.dim));
  VectorTable table;
  table.rows = h.rows;
  table.dim = h.dim;
  table.values.resize(static_cast<std::size_t>(h.rows) * h.dim);
  std::uint64_t checksum = 0;
  const unsigned char* data = p + detail::kFvcHeaderBytes;
  for (std::size_t i = 0; i < payload; ++i) checksum += data[i];
  for (std::size_t i = 0; i < table.values.size(); ++i)
    table.values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(data + 4 * i));
  if (checksum != detail::get_le<std::uint64_t>(data + payload))
    throw ChecksumError(where + ": checksum mismatch");
  return table;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path);
}

inline VectorTable read_fvc(const std::string& path) { return decode_fvc(read_file_bytes(path), path); }

inline void write_fvc(const std::string& path, const VectorTable& table) { write_file_bytes(path, encode_fvc(table)); }

// Header only; used by manifest validation.
inline FvcHeader read_fvc_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  unsigned char buf[detail::kFvcHeaderBytes] = {};
  in.read(reinterpret_cast<char*>(buf), sizeof(buf));
  return detail::parse_fvc_header(buf, static_cast<std::size_t>(in.gcount()), path);
}

}  // namespace morphofv
