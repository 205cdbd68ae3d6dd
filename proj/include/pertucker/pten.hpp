#pragma once

// PTEN v1 binary tensor format:
//   bytes 0..3  magic "PTEN" (0x50 0x54 0x45 0x4E)
//   byte  4     version, must be 1
//   byte  5     order K (1..255)
//   K x u64     extents, little-endian
//   prod(dims) x f64  values, little-endian IEEE-754, canonical linearization
//                     (mode 0 fastest)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "pertucker/errors.hpp"
#include "pertucker/tensor.hpp"

namespace pertucker::pten {

inline constexpr std::array<std::uint8_t, 4> kMagic{0x50, 0x54, 0x45, 0x4E};
inline constexpr std::uint8_t kVersion = 1;

namespace detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw FormatError("PTEN: truncated payload");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += 8;
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const DenseTensor& x) {
  if (x.order() > std::numeric_limits<std::uint8_t>::max()) throw ArgumentError("PTEN: order exceeds 255");
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(6 + 8 * x.order() + 8 * x.size());
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(x.order()));
  for (std::size_t d : x.dims()) detail::put_u64(out, d);
  for (double v : x.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

/// Decodes one tensor starting at pos; advances pos past it.
inline DenseTensor decode(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + 6 > in.size()) throw FormatError("PTEN: truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), in.begin() + static_cast<std::ptrdiff_t>(pos))) {
    throw FormatError("PTEN: bad magic");
  }
  if (in[pos + 4] != kVersion) {
    throw FormatError("PTEN: unsupported version " + std::to_string(in[pos + 4]));
  }
  const std::size_t order = in[pos + 5];
  if (order == 0) throw FormatError("PTEN: order must be at least 1");
  pos += 6;
  Dims dims(order);
  for (auto& d : dims) d = static_cast<std::size_t>(detail::get_u64(in, pos));
  const std::size_t n = product(dims);
  if (n > (in.size() - pos) / 8) throw FormatError("PTEN: truncated payload");
  std::vector<double> data(n);
  for (auto& v : data) v = std::bit_cast<double>(detail::get_u64(in, pos));
  try {
    return DenseTensor(std::move(dims), std::move(data));
  } catch (const NumericError&) {
    throw FormatError("PTEN: non-finite value in payload");
  }
}

inline DenseTensor decode(std::span<const std::uint8_t> in) {
  std::size_t pos = 0;
  DenseTensor t = decode(in, pos);
  if (pos != in.size()) throw FormatError("PTEN: trailing bytes after payload");
  return t;
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArgumentError("cannot write file: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ArgumentError("write failed: " + path);
}

inline DenseTensor read_file(const std::string& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_file(const std::string& path, const DenseTensor& x) { write_bytes(path, encode(x)); }

/// Matrices travel as 2-mode tensors (rows, cols).
inline DenseTensor from_matrix(const Matrix& m) {
  return DenseTensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                     std::vector<double>(m.data(), m.data() + m.size()));
}

inline Matrix to_matrix(const DenseTensor& t) {
  if (t.order() != 2) throw FormatError("PTEN: expected a 2-mode tensor for a matrix");
  return Eigen::Map<const Matrix>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                                  static_cast<Eigen::Index>(t.dim(1)));
}

}  // namespace pertucker::pten
