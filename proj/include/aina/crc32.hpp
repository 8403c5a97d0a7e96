#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace aina {

namespace detail {
constexpr std::array<uint32_t, 256> make_crc32_table() {
  std::array<uint32_t, 256> table{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}
inline constexpr auto kCrc32Table = make_crc32_table();
}  // namespace detail

// CRC-32 (IEEE 802.3, same polynomial as zlib). crc32("123456789") == 0xcbf43926.
inline uint32_t crc32(const void* data, size_t len, uint32_t crc = 0) {
  const auto* p = static_cast<const unsigned char*>(data);
  crc ^= 0xffffffffu;
  for (size_t i = 0; i < len; ++i)
    crc = detail::kCrc32Table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

}  // namespace aina
