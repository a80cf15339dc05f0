// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vfpga/error.hpp"

namespace vfpga
{

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Little-endian serializer.
class ByteWriter
{
public:
  void u8(std::uint8_t v)
  { buf_.push_back(v); }

  void u16(std::uint16_t v)
  { put_le(v, 2); }

  void u32(std::uint32_t v)
  { put_le(v, 4); }

  void u64(std::uint64_t v)
  { put_le(v, 8); }

  void i64(std::int64_t v)
  { put_le(static_cast<std::uint64_t>(v), 8); }

  void raw(ByteView data)
  { buf_.insert(buf_.end(), data.begin(), data.end()); }

  void raw(std::string_view s)
  { buf_.insert(buf_.end(), s.begin(), s.end()); }

  /// u32 length followed by the bytes.
  void blob(ByteView data)
  {
    u32(static_cast<std::uint32_t>(data.size()));
    raw(data);
  }

  /// u16 length followed by the characters.
  void str(std::string_view s)
  {
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }

  std::size_t size() const
  { return buf_.size(); }

  Bytes& bytes()
  { return buf_; }

  Bytes take()
  { return std::move(buf_); }

private:
  void put_le(std::uint64_t v, int n)
  {
    for (int i = 0; i < n; ++i)
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  Bytes buf_;
};

/// Little-endian deserializer over a borrowed byte range. Running past the
/// end throws an Error with the category given at construction.
class ByteReader
{
public:
  explicit ByteReader(ByteView data, Errc on_truncation = Errc::FormatError)
    : data_(data), errc_(on_truncation)
  { }

  std::uint8_t u8()
  { return static_cast<std::uint8_t>(get_le(1)); }

  std::uint16_t u16()
  { return static_cast<std::uint16_t>(get_le(2)); }

  std::uint32_t u32()
  { return static_cast<std::uint32_t>(get_le(4)); }

  std::uint64_t u64()
  { return get_le(8); }

  std::int64_t i64()
  { return static_cast<std::int64_t>(get_le(8)); }

  ByteView raw(std::size_t n)
  {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  Bytes blob()
  {
    auto n = u32();
    auto v = raw(n);
    return Bytes(v.begin(), v.end());
  }

  std::string str()
  {
    auto n = u16();
    auto v = raw(n);
    return std::string(v.begin(), v.end());
  }

  std::size_t remaining() const
  { return data_.size() - pos_; }

  std::size_t position() const
  { return pos_; }

  void expect_end() const
  {
    if (remaining() != 0)
      throw Error(errc_, "trailing bytes");
  }

private:
  void need(std::size_t n) const
  {
    if (remaining() < n)
      throw Error(errc_, "truncated input");
  }

  std::uint64_t get_le(int n)
  {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= std::uint64_t(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  ByteView data_;
  std::size_t pos_ = 0;
  Errc errc_;
};

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

/// 64-bit FNV-1a, chainable through the seed.
inline std::uint64_t fnv1a64(ByteView data, std::uint64_t seed = kFnvOffset) noexcept
{
  std::uint64_t h = seed;
  for (auto b : data)
    {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  return h;
}

inline std::uint64_t fnv1a64_u64(std::uint64_t v, std::uint64_t seed = kFnvOffset) noexcept
{
  std::uint8_t tmp[8];
  for (int i = 0; i < 8; ++i)
    tmp[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return fnv1a64(tmp, seed);
}

inline std::string to_hex(ByteView data)
{
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data)
    {
      out.push_back(digits[b >> 4]);
      out.push_back(digits[b & 0xf]);
    }
  return out;
}

inline std::string hex64(std::uint64_t v)
{
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4)
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

inline Bytes from_hex(std::string_view s)
{
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (s.size() % 2 != 0)
    throw Error(Errc::FormatError, "odd-length hex string");
  Bytes out;
  out.reserve(s.size() / 2);
  for (std::size_t i = 0; i < s.size(); i += 2)
    {
      int hi = nibble(s[i]), lo = nibble(s[i + 1]);
      if (hi < 0 || lo < 0)
        throw Error(Errc::FormatError, "bad hex digit");
      out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
  return out;
}

} // namespace vfpga
