#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "volssl/error.hpp"

namespace volssl::detail {

inline std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

inline void write_f32le(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float f : values) {
      std::uint32_t u = byteswap32(std::bit_cast<std::uint32_t>(f));
      out.write(reinterpret_cast<const char*>(&u), sizeof(u));
    }
  }
}

// Reads exactly values.size() floats; returns the number actually read.
inline std::size_t read_f32le(std::istream& in, std::span<float> values) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  const auto got = static_cast<std::size_t>(in.gcount()) / sizeof(float);
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < got; ++i) {
      values[i] = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(values[i])));
    }
  }
  return got;
}

// Reads the 5-byte magic plus newline.
inline void expect_magic(std::istream& in, const char* magic) {
  char buf[6] = {};
  in.read(buf, 6);
  if (in.gcount() != 6 || std::memcmp(buf, magic, 5) != 0 || buf[5] != '\n') {
    throw BadMagicError(std::string("expected ") + magic + " header");
  }
}

inline std::string read_header_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw TruncatedError(std::string(what) + ": missing JSON header");
  return line;
}

}  // namespace volssl::detail
