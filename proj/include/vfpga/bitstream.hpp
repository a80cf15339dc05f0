// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vfpga/bytes.hpp"
#include "vfpga/crc32.hpp"
#include "vfpga/error.hpp"

namespace vfpga
{

/// Argument slots in every kernel register file.
inline constexpr std::size_t kArgSlots = 8;

enum class KernelKind : std::uint8_t
{
  VecAdd = 1,
  Matmul = 2,
  Sobel = 3,
  RogueWriter = 4,
};

inline constexpr bool kernel_kind_known(KernelKind k) noexcept
{
  auto v = static_cast<std::uint8_t>(k);
  return v >= 1 && v <= 4;
}

inline constexpr std::string_view kernel_kind_name(KernelKind k) noexcept
{
  switch (k)
    {
    case KernelKind::VecAdd: return "vec_add";
    case KernelKind::Matmul: return "matmul";
    case KernelKind::Sobel: return "sobel";
    case KernelKind::RogueWriter: return "rogue_writer";
    }
  return "unknown";
}

inline std::optional<KernelKind> parse_kernel_kind(std::string_view name) noexcept
{
  for (std::uint8_t v = 1; v <= 4; ++v)
    if (kernel_kind_name(static_cast<KernelKind>(v)) == name)
      return static_cast<KernelKind>(v);
  return std::nullopt;
}

struct ParamSlot
{
  std::string name;
  std::uint8_t width = 64;  ///< bits

  bool operator==(const ParamSlot&) const = default;
};

struct KernelDescriptor
{
  KernelKind kind = KernelKind::VecAdd;
  std::vector<ParamSlot> param_schema;
  std::uint32_t static_cycles_per_item = 1;

  bool operator==(const KernelDescriptor&) const = default;
};

/// Canonical descriptor for a kernel kind: argument layout plus the default
/// timing coefficient.
inline KernelDescriptor default_descriptor(KernelKind kind)
{
  KernelDescriptor d;
  d.kind = kind;
  switch (kind)
    {
    case KernelKind::VecAdd:
      d.param_schema = {{"a", 64}, {"b", 64}, {"c", 64}, {"n", 32}};
      d.static_cycles_per_item = 1;
      break;
    case KernelKind::Matmul:
      d.param_schema = {{"a", 64}, {"b", 64}, {"c", 64}, {"n", 32}, {"m", 32}, {"k", 32}};
      d.static_cycles_per_item = 1;
      break;
    case KernelKind::Sobel:
      d.param_schema = {{"src", 64}, {"dst", 64}, {"w", 32}, {"h", 32}};
      d.static_cycles_per_item = 9;
      break;
    case KernelKind::RogueWriter:
      d.param_schema = {{"target", 64}, {"len", 32}, {"pattern", 64}};
      d.static_cycles_per_item = 1;
      break;
    default:
      throw Error(Errc::EncodingError, "unknown kernel kind");
    }
  return d;
}

inline constexpr std::array<char, 4> kBitfileMagic{'V', 'F', 'P', 'B'};
inline constexpr std::uint16_t kBitfileVersion = 1;
inline constexpr std::size_t kBitfileHeaderSize = 4 + 2 + 4 + 4 + 1 + 4 + 4;

struct BitfileHeader
{
  std::array<char, 4> magic = kBitfileMagic;
  std::uint16_t version = kBitfileVersion;
  std::uint32_t device_id = 0;
  std::uint32_t shell_id = 0;
  std::uint8_t prr_id = 0;
  std::uint32_t payload_len = 0;
  std::uint32_t payload_crc = 0;

  bool operator==(const BitfileHeader&) const = default;
};

struct PartialBitfile
{
  BitfileHeader header;
  KernelDescriptor kernel;
  /// Size of the configuration-frame section that follows the descriptor.
  std::uint32_t frame_bytes = 0;
};

namespace detail
{

/// Deterministic filler standing in for configuration frames.
inline void append_frames(ByteWriter& w, std::uint32_t n, std::uint64_t seed)
{
  std::uint64_t x = seed | 1;
  auto& out = w.bytes();
  out.reserve(out.size() + n);
  for (std::uint32_t i = 0; i < n; ++i)
    {
      x ^= x << 13;
      x ^= x >> 7;
      x ^= x << 17;
      out.push_back(static_cast<std::uint8_t>(x));
    }
}

} // namespace detail

/// Produce a partial bitfile for `prr_id`. `frame_bytes` pads the payload
/// with synthetic configuration frames so that the image has a realistic
/// size for reconfiguration timing.
inline Bytes encode_bitfile(const KernelDescriptor& desc, std::uint32_t device_id,
                            std::uint32_t shell_id, unsigned prr_id,
                            std::uint32_t frame_bytes = 0)
{
  if (!kernel_kind_known(desc.kind))
    throw Error(Errc::EncodingError, "unknown kernel kind");
  if (prr_id > 0xff)
    throw Error(Errc::EncodingError, "prr_id does not fit in 8 bits");
  if (desc.param_schema.size() > kArgSlots)
    throw Error(Errc::EncodingError, "parameter schema exceeds register file");

  ByteWriter payload;
  payload.u8(static_cast<std::uint8_t>(desc.kind));
  payload.u32(desc.static_cycles_per_item);
  payload.u8(static_cast<std::uint8_t>(desc.param_schema.size()));
  for (const auto& p : desc.param_schema)
    {
      if (p.name.size() > 0xff)
        throw Error(Errc::EncodingError, "parameter name too long");
      payload.u8(static_cast<std::uint8_t>(p.name.size()));
      payload.raw(p.name);
      payload.u8(p.width);
    }
  payload.u32(frame_bytes);
  detail::append_frames(payload, frame_bytes,
                        0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(desc.kind) + 1)
                          ^ (std::uint64_t(prr_id) << 32));

  const Bytes& body = payload.bytes();
  ByteWriter out;
  out.raw(std::string_view(kBitfileMagic.data(), kBitfileMagic.size()));
  out.u16(kBitfileVersion);
  out.u32(device_id);
  out.u32(shell_id);
  out.u8(static_cast<std::uint8_t>(prr_id));
  out.u32(static_cast<std::uint32_t>(body.size()));
  out.u32(crc32(body));
  out.raw(body);
  return out.take();
}

/// Parse and verify a partial bitfile. Structural problems raise
/// FormatError; a checksum mismatch raises CrcError.
inline PartialBitfile decode_bitfile(ByteView bytes)
{
  ByteReader r(bytes, Errc::FormatError);
  PartialBitfile out;
  auto magic = r.raw(4);
  std::copy(magic.begin(), magic.end(), out.header.magic.begin());
  if (out.header.magic != kBitfileMagic)
    throw Error(Errc::FormatError, "bad magic");
  out.header.version = r.u16();
  if (out.header.version != kBitfileVersion)
    throw Error(Errc::FormatError, "unsupported version");
  out.header.device_id = r.u32();
  out.header.shell_id = r.u32();
  out.header.prr_id = r.u8();
  out.header.payload_len = r.u32();
  out.header.payload_crc = r.u32();
  if (r.remaining() != out.header.payload_len)
    throw Error(Errc::FormatError, "payload length mismatch");
  auto body = r.raw(out.header.payload_len);
  if (crc32(body) != out.header.payload_crc)
    throw Error(Errc::CrcError, "payload checksum mismatch");

  ByteReader p(body, Errc::FormatError);
  auto kind = static_cast<KernelKind>(p.u8());
  if (!kernel_kind_known(kind))
    throw Error(Errc::FormatError, "unknown kernel kind");
  out.kernel.kind = kind;
  out.kernel.static_cycles_per_item = p.u32();
  auto nparams = p.u8();
  if (nparams > kArgSlots)
    throw Error(Errc::FormatError, "parameter schema exceeds register file");
  for (unsigned i = 0; i < nparams; ++i)
    {
      ParamSlot slot;
      auto len = p.u8();
      auto name = p.raw(len);
      slot.name.assign(name.begin(), name.end());
      slot.width = p.u8();
      out.kernel.param_schema.push_back(std::move(slot));
    }
  out.frame_bytes = p.u32();
  p.raw(out.frame_bytes);
  p.expect_end();
  return out;
}

/// The control block's own check: device and shell identity only. The
/// region id carried in the header is not consulted.
inline bool cb_compatibility_check(const PartialBitfile& bitfile, std::uint32_t device_id,
                                   std::uint32_t shell_id) noexcept
{
  return bitfile.header.device_id == device_id && bitfile.header.shell_id == shell_id;
}

} // namespace vfpga
