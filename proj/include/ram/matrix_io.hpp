// ram/matrix_io.hpp

// Copyright 2026 The ram Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Binary matrix format shared by all model and feature files:
//
//   bytes 0..3   "RAM1"
//   u32          rows      (little-endian)
//   u32          cols      (little-endian)
//   f64 * rows*cols        row-major, IEEE-754 binary64, little-endian
//
// Container files (models, GMMs, transforms) start with their own magic and
// then embed matrices in exactly this layout.

#ifndef RAM_MATRIX_IO_HPP_
#define RAM_MATRIX_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>

#include "ram/error.hpp"
#include "ram/matrix.hpp"

namespace ram {

inline constexpr std::string_view kMatrixMagic = "RAM1";

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("unexpected end of file reading u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& os, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  os.write(b, 8);
}

inline double read_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("unexpected end of file reading f64");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
    throw IoError("bad magic: expected \"" + std::string(magic) + "\"");
}

inline void write_matrix(std::ostream& os, const Matrix& m) {
  require(m.rows() <= std::numeric_limits<std::uint32_t>::max() &&
              m.cols() <= std::numeric_limits<std::uint32_t>::max(),
          "write_matrix: dimensions exceed u32");
  write_magic(os, kMatrixMagic);
  write_u32(os, static_cast<std::uint32_t>(m.rows()));
  write_u32(os, static_cast<std::uint32_t>(m.cols()));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * 8));
  } else {
    for (double v : m.values()) write_f64(os, v);
  }
  if (!os) throw IoError("write_matrix: stream failure");
}

inline Matrix read_matrix(std::istream& is) {
  expect_magic(is, kMatrixMagic);
  const std::uint32_t rows = read_u32(is);
  const std::uint32_t cols = read_u32(is);
  Matrix m(rows, cols);
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * 8)))
      throw IoError("read_matrix: truncated payload");
  } else {
    for (double& v : m.values()) v = read_f64(is);
  }
  if (!m.all_finite()) throw IoError("read_matrix: non-finite entry");
  return m;
}

inline void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_matrix(os, m);
}

inline Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_matrix(is);
}

}  // namespace ram

#endif  // RAM_MATRIX_IO_HPP_
