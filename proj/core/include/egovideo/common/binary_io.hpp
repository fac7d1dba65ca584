#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "egovideo/common/error.hpp"

namespace egovideo::io {

static_assert(std::endian::native == std::endian::little,
              "binary containers are written in native little-endian order");

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw InvalidArgument("truncated binary stream");
  return value;
}

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::array<char, 8> buf{};
  in.read(buf.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || std::string_view(buf.data(), magic.size()) != magic) {
    throw InvalidArgument("bad magic: expected \"" + std::string(magic) + "\"");
  }
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const auto n = read_pod<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw InvalidArgument("truncated string in binary stream");
  return s;
}

}  // namespace egovideo::io
