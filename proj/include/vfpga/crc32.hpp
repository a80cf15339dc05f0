// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace vfpga
{

namespace detail
{

inline constexpr std::array<std::uint32_t, 256> make_crc32_table()
{
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i)
    {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
  return table;
}

inline constexpr auto kCrc32Table = make_crc32_table();

} // namespace detail

/// CRC-32 (IEEE 802.3, reflected, init and xor-out 0xFFFFFFFF).
inline std::uint32_t crc32(std::span<const std::uint8_t> data, std::uint32_t crc = 0) noexcept
{
  crc = ~crc;
  for (auto b : data)
    crc = detail::kCrc32Table[(crc ^ b) & 0xff] ^ (crc >> 8);
  return ~crc;
}

} // namespace vfpga
