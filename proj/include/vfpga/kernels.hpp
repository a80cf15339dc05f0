// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <concepts>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <vector>

#include "vfpga/bitstream.hpp"
#include "vfpga/error.hpp"

namespace vfpga::kernels
{

/// What a kernel sees of device memory: bounds-checked block reads and
/// writes that throw Error (DmaFault, GuardFault) without partial effects.
template <typename P>
concept MemoryPort = requires(P& port, std::uint64_t addr, std::span<std::uint8_t> out,
                              std::span<const std::uint8_t> in) {
  port.read(addr, out);
  port.write(addr, in);
  { port.size() } -> std::convertible_to<std::uint64_t>;
};

using ArgArray = std::array<std::uint64_t, kArgSlots>;

struct KernelPlan
{
  std::uint64_t cycles = 0;
  Errc status = Errc::Ok;
};

namespace detail
{

inline constexpr std::uint64_t kMaxWork = std::uint64_t(1) << 40;

inline std::uint64_t mask_width(std::uint64_t v, std::uint8_t width)
{ return width >= 64 ? v : v & ((std::uint64_t(1) << width) - 1); }

inline std::vector<std::uint32_t> read_words(auto& port, std::uint64_t addr, std::uint64_t count)
{
  std::vector<std::uint8_t> raw(count * 4);
  port.read(addr, std::span<std::uint8_t>(raw));
  std::vector<std::uint32_t> out(count);
  for (std::uint64_t i = 0; i < count; ++i)
    out[i] = std::uint32_t(raw[4 * i]) | std::uint32_t(raw[4 * i + 1]) << 8
           | std::uint32_t(raw[4 * i + 2]) << 16 | std::uint32_t(raw[4 * i + 3]) << 24;
  return out;
}

inline void write_words(auto& port, std::uint64_t addr, const std::vector<std::uint32_t>& words)
{
  std::vector<std::uint8_t> raw(words.size() * 4);
  for (std::size_t i = 0; i < words.size(); ++i)
    for (int b = 0; b < 4; ++b)
      raw[4 * i + b] = static_cast<std::uint8_t>(words[i] >> (8 * b));
  port.write(addr, std::span<const std::uint8_t>(raw));
}

/// Refuse work whose footprint cannot possibly fit in device memory before
/// allocating host-side scratch for it.
inline void require_fits(auto& port, std::uint64_t bytes)
{
  if (bytes > static_cast<std::uint64_t>(port.size()))
    throw Error(Errc::DmaFault, "kernel footprint exceeds device memory");
}

} // namespace detail

/// Argument values as the kernel sees them: each slot truncated to its
/// declared width.
inline ArgArray bind_args(const KernelDescriptor& desc, const ArgArray& regs)
{
  ArgArray out{};
  for (std::size_t i = 0; i < desc.param_schema.size() && i < kArgSlots; ++i)
    out[i] = detail::mask_width(regs[i], desc.param_schema[i].width);
  return out;
}

/// Cycle count and argument validity, computed at launch time.
inline KernelPlan plan(const KernelDescriptor& desc, const ArgArray& regs)
{
  auto a = bind_args(desc, regs);
  std::uint64_t cpi = desc.static_cycles_per_item;
  KernelPlan p;
  switch (desc.kind)
    {
    case KernelKind::VecAdd:
      p.cycles = cpi * a[3];
      break;
    case KernelKind::Matmul:
      {
        std::uint64_t n = a[3], m = a[4], k = a[5];
        if ((n && m && k) && (n > detail::kMaxWork / m || n * m > detail::kMaxWork / k))
          return {0, Errc::KernelArgError};
        p.cycles = cpi * n * m * k;
        break;
      }
    case KernelKind::Sobel:
      if (a[2] < 3 || a[3] < 3)
        return {0, Errc::KernelArgError};
      p.cycles = cpi * a[2] * a[3];
      break;
    case KernelKind::RogueWriter:
      p.cycles = cpi * a[1];
      break;
    default:
      return {0, Errc::KernelArgError};
    }
  return p;
}

/// c[i] = a[i] + b[i] over 32-bit lanes, wrapping.
template <MemoryPort Port>
void execute_vec_add(Port& port, std::uint64_t a_addr, std::uint64_t b_addr,
                     std::uint64_t c_addr, std::uint64_t n)
{
  if (n == 0)
    return;
  detail::require_fits(port, n * 4);
  auto a = detail::read_words(port, a_addr, n);
  auto b = detail::read_words(port, b_addr, n);
  std::vector<std::uint32_t> c(n);
  for (std::uint64_t i = 0; i < n; ++i)
    c[i] = a[i] + b[i];
  detail::write_words(port, c_addr, c);
}

/// C(n x k) = A(n x m) * B(m x k), row-major 32-bit integers, wrapping.
template <MemoryPort Port>
void execute_matmul(Port& port, std::uint64_t a_addr, std::uint64_t b_addr,
                    std::uint64_t c_addr, std::uint64_t n, std::uint64_t m, std::uint64_t k)
{
  if (n == 0 || k == 0)
    return;
  detail::require_fits(port, n * m * 4);
  detail::require_fits(port, m * k * 4);
  detail::require_fits(port, n * k * 4);
  auto a = detail::read_words(port, a_addr, n * m);
  auto b = detail::read_words(port, b_addr, m * k);
  std::vector<std::uint32_t> c(n * k, 0);
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t p = 0; p < m; ++p)
      {
        std::uint32_t aip = a[i * m + p];
        for (std::uint64_t j = 0; j < k; ++j)
          c[i * k + j] += aip * b[p * k + j];
      }
  detail::write_words(port, c_addr, c);
}

/// 3x3 Sobel magnitude |Gx| + |Gy| clamped to 255 on 8-bit grayscale; the
/// one-pixel border is written as zero.
template <MemoryPort Port>
void execute_sobel(Port& port, std::uint64_t src_addr, std::uint64_t dst_addr,
                   std::uint64_t w, std::uint64_t h)
{
  if (w < 3 || h < 3)
    throw Error(Errc::KernelArgError, "sobel needs w, h >= 3");
  detail::require_fits(port, w * h);
  std::vector<std::uint8_t> src(w * h);
  port.read(src_addr, std::span<std::uint8_t>(src));
  std::vector<std::uint8_t> dst(w * h, 0);
  auto px = [&](std::uint64_t x, std::uint64_t y) { return static_cast<int>(src[y * w + x]); };
  for (std::uint64_t y = 1; y + 1 < h; ++y)
    for (std::uint64_t x = 1; x + 1 < w; ++x)
      {
        int gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1))
               - (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
        int gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1))
               - (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
        dst[y * w + x] = static_cast<std::uint8_t>(std::min(255, std::abs(gx) + std::abs(gy)));
      }
  port.write(dst_addr, std::span<const std::uint8_t>(dst));
}

/// Writes `len` bytes at `target`, cycling through the little-endian bytes
/// of `pattern`. Nothing but the device's range guard stands in its way.
template <MemoryPort Port>
void execute_rogue_writer(Port& port, std::uint64_t target, std::uint64_t len,
                          std::uint64_t pattern)
{
  if (len == 0)
    return;
  detail::require_fits(port, len);
  std::vector<std::uint8_t> data(len);
  for (std::uint64_t i = 0; i < len; ++i)
    data[i] = static_cast<std::uint8_t>(pattern >> (8 * (i % 8)));
  port.write(target, std::span<const std::uint8_t>(data));
}

/// Run the functional model for `desc` with register-file arguments. Memory
/// faults and argument errors are reported through the returned status.
template <MemoryPort Port>
Errc execute(const KernelDescriptor& desc, const ArgArray& regs, Port& port)
{
  auto a = bind_args(desc, regs);
  try
    {
      switch (desc.kind)
        {
        case KernelKind::VecAdd:
          execute_vec_add(port, a[0], a[1], a[2], a[3]);
          break;
        case KernelKind::Matmul:
          if (plan(desc, regs).status != Errc::Ok)
            return Errc::KernelArgError;
          execute_matmul(port, a[0], a[1], a[2], a[3], a[4], a[5]);
          break;
        case KernelKind::Sobel:
          execute_sobel(port, a[0], a[1], a[2], a[3]);
          break;
        case KernelKind::RogueWriter:
          execute_rogue_writer(port, a[0], a[1], a[2]);
          break;
        default:
          return Errc::KernelArgError;
        }
    }
  catch (const Error& e)
    {
      return e.code();
    }
  return Errc::Ok;
}

} // namespace vfpga::kernels
