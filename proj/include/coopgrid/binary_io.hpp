#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "coopgrid/errors.hpp"

namespace coopgrid::binary {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename UInt>
inline UInt to_little(UInt v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    UInt r = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      r = static_cast<UInt>((r << 8) | ((v >> (8 * i)) & 0xFF));
    }
    return r;
  }
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline void put_f64(std::ostream& out, double d) {
  auto v = to_little(std::bit_cast<std::uint64_t>(d));
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& in, void* dst, std::size_t n) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (!in || static_cast<std::size_t>(in.gcount()) != n) {
    throw IoError("unexpected end of binary stream");
  }
}

inline std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v;
  read_exact(in, &v, sizeof v);
  return to_little(v);
}

inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

inline double get_f64(std::istream& in) {
  std::uint64_t v;
  read_exact(in, &v, sizeof v);
  return std::bit_cast<double>(to_little(v));
}

inline std::string get_string(std::istream& in, std::uint32_t max_len = 1u << 20) {
  const auto n = get_u32(in);
  if (n > max_len) throw IoError("string field too long");
  std::string s(n, '\0');
  if (n) read_exact(in, s.data(), n);
  return s;
}

}  // namespace coopgrid::binary
