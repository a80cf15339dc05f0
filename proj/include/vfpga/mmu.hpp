// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vfpga/error.hpp"

namespace vfpga
{

using VmId = std::uint32_t;

struct MemHandle
{
  std::uint64_t base_addr = 0;
  std::uint64_t size = 0;       ///< bytes requested, kept for bounds checks
  std::uint32_t first_index = 0;
  std::uint32_t count = 0;      ///< segments spanned
  VmId owner = 0;

  bool contains(std::uint64_t addr) const
  { return addr >= base_addr && addr - base_addr < size; }

  bool operator==(const MemHandle&) const = default;
};

/// Half-open range of segment indices an allocation must fall in.
struct SegmentWindow
{
  std::size_t begin = 0;
  std::size_t end = 0;
};

namespace mmu
{

/// One mark per segment, 0 free / 1 used, scanned linearly.
class BitmapBackend
{
public:
  explicit BitmapBackend(std::size_t count)
    : marks_(count, 0)
  { }

  std::optional<std::size_t> first_fit(std::size_t count, SegmentWindow w) const
  {
    std::size_t run = 0;
    for (std::size_t i = w.begin; i < w.end; ++i)
      {
        run = marks_[i] ? 0 : run + 1;
        if (run == count)
          return i + 1 - count;
      }
    return std::nullopt;
  }

  void mark_used(std::size_t first, std::size_t count)
  { std::fill_n(marks_.begin() + static_cast<std::ptrdiff_t>(first), count, 1); }

  void mark_free(std::size_t first, std::size_t count)
  { std::fill_n(marks_.begin() + static_cast<std::ptrdiff_t>(first), count, 0); }

  bool used(std::size_t i) const
  { return marks_[i] != 0; }

  std::size_t size() const
  { return marks_.size(); }

private:
  std::vector<std::uint8_t> marks_;
};

/// Sorted, coalesced list of free runs.
class FreeListBackend
{
public:
  explicit FreeListBackend(std::size_t count)
    : size_(count)
  {
    if (count)
      runs_.push_back({0, count});
  }

  std::optional<std::size_t> first_fit(std::size_t count, SegmentWindow w) const
  {
    for (const auto& r : runs_)
      {
        auto lo = std::max(r.first, w.begin);
        auto hi = std::min(r.first + r.count, w.end);
        if (hi > lo && hi - lo >= count)
          return lo;
        if (r.first >= w.end)
          break;
      }
    return std::nullopt;
  }

  void mark_used(std::size_t first, std::size_t count)
  {
    for (auto it = runs_.begin(); it != runs_.end(); ++it)
      {
        if (first < it->first || first + count > it->first + it->count)
          continue;
        Run tail{first + count, it->first + it->count - (first + count)};
        it->count = first - it->first;
        auto next = std::next(it);
        if (tail.count)
          runs_.insert(next, tail);
        if (it->count == 0)
          runs_.erase(it);
        return;
      }
  }

  void mark_free(std::size_t first, std::size_t count)
  {
    auto it = runs_.begin();
    while (it != runs_.end() && it->first < first)
      ++it;
    it = runs_.insert(it, {first, count});
    if (auto next = std::next(it); next != runs_.end() && it->first + it->count == next->first)
      {
        it->count += next->count;
        runs_.erase(next);
      }
    if (it != runs_.begin())
      {
        auto prev = std::prev(it);
        if (prev->first + prev->count == it->first)
          {
            prev->count += it->count;
            runs_.erase(it);
          }
      }
  }

  bool used(std::size_t i) const
  {
    for (const auto& r : runs_)
      if (i >= r.first && i < r.first + r.count)
        return false;
    return true;
  }

  std::size_t size() const
  { return size_; }

private:
  struct Run
  {
    std::size_t first;
    std::size_t count;
  };

  std::size_t size_;
  std::list<Run> runs_;
};

} // namespace mmu

/// Software MMU over device DDR: fixed-size segments, first-fit contiguous
/// allocation, per-VM ownership. Not synchronized; the VMM serializes it.
template <typename Backend = mmu::BitmapBackend>
class SegmentPool
{
public:
  SegmentPool(std::uint64_t ddr_size, std::uint64_t segment_size)
    : segment_size_(segment_size), ddr_size_(ddr_size),
      backend_(checked_count(ddr_size, segment_size)), owners_(backend_.size())
  { }

  std::uint64_t segment_size() const
  { return segment_size_; }

  std::size_t segment_count() const
  { return owners_.size(); }

  std::uint64_t ddr_size() const
  { return ddr_size_; }

  SegmentWindow whole() const
  { return {0, segment_count()}; }

  /// Lowest-index run of free segments covering `size` bytes.
  MemHandle allocate(VmId vm, std::uint64_t size)
  { return allocate(vm, size, whole()); }

  MemHandle allocate(VmId vm, std::uint64_t size, SegmentWindow window)
  {
    if (size == 0)
      throw Error(Errc::InvalidSize, "allocation of zero bytes");
    window.end = std::min(window.end, segment_count());
    std::uint64_t count = size / segment_size_ + (size % segment_size_ != 0);
    if (count > segment_count())
      throw Error(Errc::OutOfDeviceMemory, "request larger than device memory");
    auto first = backend_.first_fit(static_cast<std::size_t>(count), window);
    if (!first)
      throw Error(Errc::OutOfDeviceMemory,
                  "no run of " + std::to_string(count) + " free segments");
    backend_.mark_used(*first, static_cast<std::size_t>(count));
    for (std::size_t i = *first; i < *first + count; ++i)
      owners_[i] = vm;
    MemHandle h;
    h.base_addr = *first * segment_size_;
    h.size = size;
    h.first_index = static_cast<std::uint32_t>(*first);
    h.count = static_cast<std::uint32_t>(count);
    h.owner = vm;
    live_.emplace(h.first_index, h);
    return h;
  }

  void free(const MemHandle& h)
  {
    auto it = live_.find(h.first_index);
    if (it == live_.end() || !(it->second == h))
      throw Error(Errc::InvalidHandle, "handle is not live in this pool");
    backend_.mark_free(h.first_index, h.count);
    for (std::size_t i = h.first_index; i < std::size_t(h.first_index) + h.count; ++i)
      owners_[i].reset();
    live_.erase(it);
  }

  std::optional<VmId> owner_of(std::uint64_t addr) const
  {
    if (addr >= ddr_size_)
      throw Error(Errc::InvalidAddress, "address beyond device memory");
    return owners_[addr / segment_size_];
  }

  /// Live handle whose span covers `addr`, if any.
  std::optional<MemHandle> handle_at(std::uint64_t addr) const
  {
    if (addr >= ddr_size_)
      return std::nullopt;
    auto seg = static_cast<std::uint32_t>(addr / segment_size_);
    auto it = live_.upper_bound(seg);
    if (it == live_.begin())
      return std::nullopt;
    --it;
    if (seg < it->second.first_index + it->second.count)
      return it->second;
    return std::nullopt;
  }

  std::vector<std::uint8_t> marks() const
  {
    std::vector<std::uint8_t> out(segment_count());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = backend_.used(i) ? 1 : 0;
    return out;
  }

  std::size_t used_segments() const
  {
    return static_cast<std::size_t>(
      std::count_if(owners_.begin(), owners_.end(), [](const auto& o) { return o.has_value(); }));
  }

  const std::map<std::uint32_t, MemHandle>& live() const
  { return live_; }

  /// Compact one-line dump for trace logs: runs of "owner:count".
  std::string dump() const
  {
    std::ostringstream os;
    std::size_t i = 0;
    while (i < owners_.size())
      {
        std::size_t j = i;
        while (j < owners_.size() && owners_[j] == owners_[i])
          ++j;
        if (i)
          os << ' ';
        if (owners_[i])
          os << *owners_[i];
        else
          os << '-';
        os << 'x' << (j - i);
        i = j;
      }
    return os.str();
  }

private:
  static std::size_t checked_count(std::uint64_t ddr_size, std::uint64_t segment_size)
  {
    if (segment_size == 0 || ddr_size == 0 || ddr_size % segment_size != 0)
      throw Error(Errc::ConfigError, "ddr_size must be a non-zero multiple of segment_size");
    return static_cast<std::size_t>(ddr_size / segment_size);
  }

  std::uint64_t segment_size_;
  std::uint64_t ddr_size_;
  Backend backend_;
  std::vector<std::optional<VmId>> owners_;
  std::map<std::uint32_t, MemHandle> live_;
};

} // namespace vfpga
