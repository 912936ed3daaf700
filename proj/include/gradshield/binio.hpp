#pragma once

#include <bit>
#include <cstdint>
#include <string>

namespace gradshield::binio {

// Little-endian packing, independent of host byte order.

inline void append_i64(std::string& buf, std::int64_t v) {
  auto u = static_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
}

inline void append_f64(std::string& buf, double v) {
  append_i64(buf, static_cast<std::int64_t>(std::bit_cast<std::uint64_t>(v)));
}

inline std::int64_t read_i64(const std::string& buf, std::size_t at) {
  std::uint64_t u = 0;
  for (int i = 7; i >= 0; --i) {
    u = (u << 8) | static_cast<unsigned char>(buf[at + static_cast<std::size_t>(i)]);
  }
  return static_cast<std::int64_t>(u);
}

inline double read_f64(const std::string& buf, std::size_t at) {
  return std::bit_cast<double>(static_cast<std::uint64_t>(read_i64(buf, at)));
}

}  // namespace gradshield::binio
