// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vfpga/bitstream.hpp"
#include "vfpga/bytes.hpp"
#include "vfpga/error.hpp"
#include "vfpga/kernels.hpp"
#include "vfpga/sim.hpp"

namespace vfpga
{

inline constexpr std::uint64_t KiB = 1024;
inline constexpr std::uint64_t MiB = 1024 * KiB;
inline constexpr std::uint64_t GiB = 1024 * MiB;

inline constexpr unsigned kMaxPrrs = 8;

/// Timing parameters of the simulated board and host software path.
struct CostModel
{
  std::uint64_t clock_hz = 200'000'000;
  std::uint64_t dma_bandwidth = 6'000'000'000;        ///< bytes/s
  Duration dma_latency = std::chrono::microseconds(10);
  std::uint64_t pr_bandwidth = 41'943'040;            ///< bytes/s; 4 MiB in 0.1 s
  Duration full_reconfig_time = std::chrono::milliseconds(2500);
  Duration sw_call_overhead = std::chrono::microseconds(20);
  std::uint64_t staging_copy_bandwidth = 2'000'000'000; ///< bytes/s

  void validate() const
  {
    if (clock_hz == 0 || dma_bandwidth == 0 || pr_bandwidth == 0 || staging_copy_bandwidth == 0
        || dma_latency <= Duration::zero() || full_reconfig_time <= Duration::zero()
        || sw_call_overhead <= Duration::zero())
      throw Error(Errc::ConfigError, "cost model parameters must be strictly positive");
  }

  bool operator==(const CostModel&) const = default;
};

struct DeviceConfig
{
  unsigned prr_count = 4;
  std::uint64_t ddr_size = 2 * GiB;
  std::uint32_t device_id = 1;
  std::uint32_t shell_id = 7;
  bool range_guard = false;
  CostModel cost;
  /// Optional per-region clocks; empty means one shared clock at cost.clock_hz.
  std::vector<std::uint64_t> prr_clock_hz;

  void validate() const
  {
    if (prr_count < 1 || prr_count > kMaxPrrs)
      throw Error(Errc::ConfigError, "prr_count must be in 1..8");
    if (ddr_size == 0)
      throw Error(Errc::ConfigError, "ddr_size must be positive");
    if (!prr_clock_hz.empty() && prr_clock_hz.size() != prr_count)
      throw Error(Errc::ConfigError, "per-region clock list must match prr_count");
    for (auto hz : prr_clock_hz)
      if (hz == 0)
        throw Error(Errc::ConfigError, "per-region clock must be positive");
    cost.validate();
  }

  bool operator==(const DeviceConfig&) const = default;
};

/// Flat device DDR backed by lazily materialized pages. Untouched memory
/// reads as zero. An optional per-region (base, limit) guard table models
/// hardware that restricts what each region's kernel may reach.
class DeviceMemory
{
public:
  static constexpr std::uint64_t kPageSize = 64 * KiB;

  explicit DeviceMemory(std::uint64_t size)
    : size_(size)
  { }

  std::uint64_t size() const
  { return size_; }

  bool in_range(std::uint64_t addr, std::uint64_t len) const
  { return len <= size_ && addr <= size_ - len; }

  void read(std::uint64_t addr, std::span<std::uint8_t> out) const
  {
    if (!in_range(addr, out.size()))
      throw Error(Errc::DmaFault, "read outside device memory");
    std::size_t done = 0;
    while (done < out.size())
      {
        auto page = (addr + done) / kPageSize;
        auto off = (addr + done) % kPageSize;
        auto n = std::min<std::uint64_t>(kPageSize - off, out.size() - done);
        auto it = pages_.find(page);
        if (it == pages_.end())
          std::memset(out.data() + done, 0, n);
        else
          std::memcpy(out.data() + done, it->second.data() + off, n);
        done += n;
      }
  }

  Bytes read(std::uint64_t addr, std::uint64_t len) const
  {
    if (!in_range(addr, len))
      throw Error(Errc::DmaFault, "read outside device memory");
    Bytes out(len);
    read(addr, std::span<std::uint8_t>(out));
    return out;
  }

  void write(std::uint64_t addr, std::span<const std::uint8_t> in)
  {
    if (!in_range(addr, in.size()))
      throw Error(Errc::DmaFault, "write outside device memory");
    std::size_t done = 0;
    while (done < in.size())
      {
        auto page = (addr + done) / kPageSize;
        auto off = (addr + done) % kPageSize;
        auto n = std::min<std::uint64_t>(kPageSize - off, in.size() - done);
        auto chunk = in.subspan(done, n);
        auto it = pages_.find(page);
        if (it == pages_.end())
          {
            if (std::all_of(chunk.begin(), chunk.end(), [](auto b) { return b == 0; }))
              {
                done += n;
                continue;
              }
            it = pages_.emplace(page, Bytes(kPageSize, 0)).first;
          }
        std::memcpy(it->second.data() + off, chunk.data(), n);
        done += n;
      }
  }

  /// Content digest: identical memory images hash identically no matter
  /// which pages happen to be materialized.
  std::uint64_t digest() const
  {
    std::uint64_t h = fnv1a64_u64(size_);
    for (const auto& [index, page] : pages_)
      {
        if (std::all_of(page.begin(), page.end(), [](auto b) { return b == 0; }))
          continue;
        h = fnv1a64_u64(index, h);
        h = fnv1a64(page, h);
      }
    return h;
  }

  void set_guard(unsigned prr, std::uint64_t base, std::uint64_t limit)
  {
    if (guard_.size() <= prr)
      guard_.resize(prr + 1);
    guard_[prr] = std::make_pair(base, limit);
  }

  std::optional<std::pair<std::uint64_t, std::uint64_t>> guard(unsigned prr) const
  {
    if (prr >= guard_.size())
      return std::nullopt;
    return guard_[prr];
  }

private:
  std::uint64_t size_;
  std::map<std::uint64_t, Bytes> pages_;
  std::vector<std::optional<std::pair<std::uint64_t, std::uint64_t>>> guard_;
};

/// Status register, mask register and the single MSI line shared by all
/// regions. Pure state machine; the device turns "send MSI" into an event.
class IrqBank
{
public:
  explicit IrqBank(unsigned lines)
    : lines_(lines), mask_(valid_bits())
  { }

  std::uint32_t valid_bits() const
  { return lines_ >= 32 ? ~0u : (1u << lines_) - 1; }

  /// Latch a completion. True when the caller must send an MSI.
  bool raise(unsigned line)
  {
    std::uint32_t bit = 1u << line;
    status_ |= bit;
    if ((bit & ~mask_) && !msi_pending_)
      return fire();
    return false;
  }

  void ack(unsigned line)
  { status_ &= ~(1u << line); }

  /// Replace the mask. Unmasking a latched bit re-raises the MSI.
  bool write_mask(std::uint32_t mask)
  {
    mask_ = mask & valid_bits();
    if (!msi_pending_ && (status_ & ~mask_))
      return fire();
    return false;
  }

  void msi_delivered()
  { msi_pending_ = false; }

  std::uint32_t status() const
  { return status_; }

  std::uint32_t mask() const
  { return mask_; }

  bool msi_pending() const
  { return msi_pending_; }

  std::uint64_t msi_count() const
  { return msi_count_; }

private:
  bool fire()
  {
    msi_pending_ = true;
    ++msi_count_;
    return true;
  }

  unsigned lines_;
  std::uint32_t status_ = 0;
  std::uint32_t mask_;
  bool msi_pending_ = false;
  std::uint64_t msi_count_ = 0;
};

enum class SlotState : std::uint8_t
{
  Empty,
  Configuring,
  Ready,
  Running,
};

inline constexpr std::string_view slot_state_name(SlotState s)
{
  switch (s)
    {
    case SlotState::Empty: return "Empty";
    case SlotState::Configuring: return "Configuring";
    case SlotState::Ready: return "Ready";
    case SlotState::Running: return "Running";
    }
  return "?";
}

/// Register layout shared by every kernel kind.
inline constexpr unsigned kRegControl = 0;
inline constexpr unsigned kRegStatus = 1;
inline constexpr unsigned kRegArgBase = 2;
inline constexpr unsigned kRegisterCount = kRegArgBase + static_cast<unsigned>(kArgSlots);

namespace status_bits
{
inline constexpr std::uint64_t kDone = 1;
inline constexpr std::uint64_t kError = 2;
inline constexpr std::uint64_t kLoaded = 4;
inline constexpr std::uint64_t kRunning = 8;
} // namespace status_bits

struct KernelRegisterFile
{
  bool start = false;
  bool done = false;
  bool error = false;
  kernels::ArgArray args{};

  bool operator==(const KernelRegisterFile&) const = default;
};

struct PrrSlot
{
  unsigned index = 0;
  SlotState state = SlotState::Empty;
  bool frozen = false;
  std::optional<KernelDescriptor> kernel;
  KernelRegisterFile registers;
  /// Bumped on reconfiguration and scrub; stale completions compare it.
  std::uint64_t generation = 0;
  SimTime launched_at{0};
  SimTime completed_at{0};
  Errc last_status = Errc::Ok;
};

enum class RegAccess : std::uint8_t
{
  Ack,
  Ignored,
};

struct RegRead
{
  std::uint64_t value = 0;
  RegAccess access = RegAccess::Ack;
};

enum class DmaDirection : std::uint8_t
{
  HostToDevice,
  DeviceToHost,
};

struct DmaWindow
{
  SimTime start{0};
  SimTime end{0};
};

/// Something the device did on its own, reported to the trace sink.
struct DeviceEvent
{
  std::string_view op;
  std::optional<unsigned> prr;
  Errc outcome = Errc::Ok;
  std::uint64_t digest = 0;
};

/// The simulated board: a shell with `prr_count` regions, one PR control
/// block, the interrupt controller, DDR and a DMA engine. All timed effects
/// go through the simulator's event queue.
class Device
{
public:
  using TraceSink = std::function<void(const DeviceEvent&)>;
  using MsiHandler = std::function<void()>;
  using PrDone = std::function<void(Errc)>;
  using DmaDone = std::function<void(Bytes)>;

  Device(Simulator& sim, DeviceConfig cfg)
    : sim_(sim), cfg_(std::move(cfg)), memory_(cfg_.ddr_size), irq_(cfg_.prr_count)
  {
    cfg_.validate();
    slots_.resize(cfg_.prr_count);
    for (unsigned i = 0; i < cfg_.prr_count; ++i)
      slots_[i].index = i;
    guard_enabled_ = cfg_.range_guard;
    if (guard_enabled_)
      for (unsigned i = 0; i < cfg_.prr_count; ++i)
        {
          auto part = cfg_.ddr_size / cfg_.prr_count;
          memory_.set_guard(i, part * i, part * (i + 1));
        }
  }

  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  const DeviceConfig& config() const
  { return cfg_; }

  unsigned prr_count() const
  { return cfg_.prr_count; }

  Simulator& sim()
  { return sim_; }

  void set_trace_sink(TraceSink sink)
  { trace_ = std::move(sink); }

  void set_msi_handler(MsiHandler handler)
  { msi_handler_ = std::move(handler); }

  const PrrSlot& slot(unsigned prr) const
  {
    check_region(prr);
    return slots_[prr];
  }

  DeviceMemory& memory()
  { return memory_; }

  const DeviceMemory& memory() const
  { return memory_; }

  std::uint64_t clock_hz(unsigned prr) const
  { return cfg_.prr_clock_hz.empty() ? cfg_.cost.clock_hz : cfg_.prr_clock_hz.at(prr); }

  // -- partial reconfiguration ------------------------------------------

  bool pr_busy() const
  { return pr_in_flight_; }

  /// Start reconfiguring through the control block. The CB decodes the
  /// file, checks its CRC and its device/shell identity, then writes the
  /// frames into the region they were compiled for. It cannot tell whether
  /// that region is the one `prr_id` names: the returned index is the
  /// region actually frozen and reconfigured. Errors leave every slot as
  /// it was.
  unsigned pr_reconfigure(unsigned prr_id, ByteView bitfile, PrDone done = {})
  {
    check_region(prr_id);
    PartialBitfile pb;
    try
      {
        pb = decode_bitfile(bitfile);
        if (!cb_compatibility_check(pb, cfg_.device_id, cfg_.shell_id))
          throw Error(Errc::Incompatible, "bitfile built for another device or shell");
        if (pb.header.prr_id >= cfg_.prr_count)
          throw Error(Errc::InvalidRegion, "bitfile targets a region this shell lacks");
        if (pr_in_flight_)
          throw Error(Errc::Busy, "control block busy");
        auto s = slots_[pb.header.prr_id].state;
        if (s == SlotState::Configuring || s == SlotState::Running)
          throw Error(Errc::Busy, "region is " + std::string(slot_state_name(s)));
      }
    catch (const Error& e)
      {
        emit("dev.pr_error", prr_id, e.code());
        throw;
      }

    unsigned target = pb.header.prr_id;
    auto& slot = slots_[target];
    slot.state = SlotState::Configuring;
    slot.frozen = true;
    slot.kernel.reset();
    slot.registers = {};
    ++slot.generation;
    irq_.ack(target);
    pr_in_flight_ = true;
    emit("dev.pr_begin", target, Errc::Ok, pb.header.payload_crc);

    auto duration = transfer_time(bitfile.size(), cfg_.cost.pr_bandwidth);
    sim_.schedule_in(duration, [this, target, kernel = pb.kernel, done = std::move(done)] {
      auto& s = slots_[target];
      s.state = SlotState::Ready;
      s.frozen = false;
      s.kernel = kernel;
      pr_in_flight_ = false;
      emit("dev.pr_end", target, Errc::Ok);
      if (done)
        done(Errc::Ok);
    });
    return target;
  }

  // -- kernel register file ---------------------------------------------

  RegAccess write_kernel_register(unsigned prr, unsigned reg, std::uint64_t value)
  {
    check_region(prr);
    check_register(reg);
    auto& slot = slots_[prr];
    if (slot.frozen)
      {
        emit("dev.frozen_access", prr, Errc::FrozenAccess, reg);
        return RegAccess::Ignored;
      }
    if (reg >= kRegArgBase)
      {
        slot.registers.args[reg - kRegArgBase] = value;
        return RegAccess::Ack;
      }
    if (reg == kRegControl && (value & 1) && slot.state == SlotState::Ready && slot.kernel)
      launch(slot);
    return RegAccess::Ack;
  }

  RegRead read_kernel_register(unsigned prr, unsigned reg)
  {
    check_region(prr);
    check_register(reg);
    auto& slot = slots_[prr];
    if (slot.frozen)
      {
        emit("dev.frozen_access", prr, Errc::FrozenAccess, reg);
        return {0, RegAccess::Ignored};
      }
    const auto& r = slot.registers;
    if (reg == kRegControl)
      return {r.start ? 1u : 0u, RegAccess::Ack};
    if (reg == kRegStatus)
      {
        std::uint64_t v = 0;
        if (r.done) v |= status_bits::kDone;
        if (r.error) v |= status_bits::kError;
        if (slot.kernel) v |= status_bits::kLoaded;
        if (slot.state == SlotState::Running) v |= status_bits::kRunning;
        return {v, RegAccess::Ack};
      }
    return {r.args[reg - kRegArgBase], RegAccess::Ack};
  }

  // -- interrupt controller ---------------------------------------------

  void raise_irq(unsigned prr)
  {
    check_region(prr);
    if (irq_.raise(prr))
      schedule_msi();
  }

  std::uint32_t read_irq_status() const
  { return irq_.status(); }

  std::uint32_t irq_mask() const
  { return irq_.mask(); }

  void write_irq_mask(std::uint32_t mask)
  {
    if (irq_.write_mask(mask))
      schedule_msi();
  }

  void ack_irq(unsigned prr)
  {
    check_region(prr);
    irq_.ack(prr);
  }

  const IrqBank& irq() const
  { return irq_; }

  // -- DMA engine -------------------------------------------------------

  /// Queue a transfer on the single DMA engine. Range is checked up front;
  /// the copy itself lands when the transfer completes. For device-to-host
  /// the read bytes are handed to `done`.
  DmaWindow dma_transfer(DmaDirection dir, Bytes staging, std::uint64_t device_addr,
                         std::uint64_t len, DmaDone done = {})
  {
    if (!memory_.in_range(device_addr, len))
      {
        emit("dev.dma_fault", std::nullopt, Errc::DmaFault, device_addr);
        throw Error(Errc::DmaFault, "transfer outside device memory");
      }
    if (dir == DmaDirection::HostToDevice && staging.size() != len)
      throw Error(Errc::InvalidSize, "staging buffer does not match transfer length");
    DmaWindow w;
    w.start = std::max(sim_.now(), dma_free_at_);
    w.end = w.start + cfg_.cost.dma_latency + transfer_time(len, cfg_.cost.dma_bandwidth);
    dma_free_at_ = w.end;
    sim_.schedule_at(w.end, [this, dir, staging = std::move(staging), device_addr, len,
                             done = std::move(done)]() mutable {
      Bytes result;
      if (dir == DmaDirection::HostToDevice)
        memory_.write(device_addr, staging);
      else
        result = memory_.read(device_addr, len);
      if (done)
        done(std::move(result));
    });
    return w;
  }

  SimTime dma_free_at() const
  { return dma_free_at_; }

  // -- kernel-side memory ----------------------------------------------

  void enable_guard(bool on)
  { guard_enabled_ = on; }

  bool guard_enabled() const
  { return guard_enabled_; }

  void set_guard_range(unsigned prr, std::uint64_t base, std::uint64_t limit)
  {
    check_region(prr);
    memory_.set_guard(prr, base, limit);
  }

  /// [base, limit) the region's kernel may touch when the guard is on.
  std::pair<std::uint64_t, std::uint64_t> guard_range(unsigned prr) const
  {
    check_region(prr);
    return memory_.guard(prr).value_or(std::make_pair(std::uint64_t(0), cfg_.ddr_size));
  }

  /// A kernel's own DDR access. With the guard off any in-DDR address is
  /// reachable regardless of who owns it.
  Bytes kernel_read(unsigned prr, std::uint64_t addr, std::uint64_t len)
  {
    check_kernel_access(prr, addr, len);
    return memory_.read(addr, len);
  }

  void kernel_write(unsigned prr, std::uint64_t addr, ByteView data)
  {
    check_kernel_access(prr, addr, data.size());
    memory_.write(addr, data);
  }

  // -- housekeeping -----------------------------------------------------

  /// Return a region to Empty: kernel dropped, registers cleared, any
  /// in-flight completion discarded and its latched interrupt acked.
  void scrub(unsigned prr)
  {
    check_region(prr);
    auto& slot = slots_[prr];
    if (slot.state == SlotState::Configuring)
      throw Error(Errc::Busy, "cannot scrub a region while it is configuring");
    slot.state = SlotState::Empty;
    slot.frozen = false;
    slot.kernel.reset();
    slot.registers = {};
    ++slot.generation;
    irq_.ack(prr);
    emit("dev.scrub", prr, Errc::Ok);
  }

  std::uint64_t digest() const
  { return memory_.digest(); }

private:
  /// Kernel view of device memory bound to one region.
  struct RegionPort
  {
    Device* dev;
    unsigned prr;

    void read(std::uint64_t addr, std::span<std::uint8_t> out)
    {
      dev->check_kernel_access(prr, addr, out.size());
      dev->memory_.read(addr, out);
    }

    void write(std::uint64_t addr, std::span<const std::uint8_t> in)
    {
      dev->check_kernel_access(prr, addr, in.size());
      dev->memory_.write(addr, in);
    }

    std::uint64_t size() const
    { return dev->memory_.size(); }
  };

  void check_region(unsigned prr) const
  {
    if (prr >= cfg_.prr_count)
      throw Error(Errc::InvalidRegion, "region " + std::to_string(prr) + " does not exist");
  }

  static void check_register(unsigned reg)
  {
    if (reg >= kRegisterCount)
      throw Error(Errc::InvalidRegion, "register index " + std::to_string(reg) + " out of range");
  }

  void check_kernel_access(unsigned prr, std::uint64_t addr, std::uint64_t len) const
  {
    if (!memory_.in_range(addr, len))
      throw Error(Errc::DmaFault, "kernel access outside device memory");
    if (guard_enabled_)
      {
        auto [base, limit] = guard_range(prr);
        if (addr < base || len > limit - base || addr - base > limit - base - len)
          throw Error(Errc::GuardFault, "kernel access outside region window");
      }
  }

  void launch(PrrSlot& slot)
  {
    auto& r = slot.registers;
    r.start = true;
    r.done = false;
    r.error = false;
    slot.state = SlotState::Running;
    slot.launched_at = sim_.now();
    auto plan = kernels::plan(*slot.kernel, r.args);
    auto gen = slot.generation;
    unsigned prr = slot.index;
    sim_.schedule_in(cycles_time(plan.cycles, clock_hz(prr)), [this, prr, gen, plan] {
      auto& s = slots_[prr];
      if (s.generation != gen || s.state != SlotState::Running)
        return;
      Errc status = plan.status;
      if (status == Errc::Ok)
        {
          RegionPort port{this, prr};
          status = kernels::execute(*s.kernel, s.registers.args, port);
        }
      s.registers.start = false;
      s.registers.done = true;
      s.registers.error = status != Errc::Ok;
      s.state = SlotState::Ready;
      s.completed_at = sim_.now();
      s.last_status = status;
      emit("dev.kernel_done", prr, status, plan.cycles);
      raise_irq(prr);
    });
  }

  void schedule_msi()
  {
    sim_.schedule_in(Duration::zero(), [this] {
      irq_.msi_delivered();
      emit("dev.msi", std::nullopt, Errc::Ok, irq_.status());
      if (msi_handler_)
        msi_handler_();
    });
  }

  void emit(std::string_view op, std::optional<unsigned> prr, Errc outcome,
            std::uint64_t digest = 0)
  {
    if (trace_)
      trace_(DeviceEvent{op, prr, outcome, digest});
  }

  Simulator& sim_;
  DeviceConfig cfg_;
  DeviceMemory memory_;
  IrqBank irq_;
  std::vector<PrrSlot> slots_;
  bool pr_in_flight_ = false;
  bool guard_enabled_ = false;
  SimTime dma_free_at_{0};
  TraceSink trace_;
  MsiHandler msi_handler_;
};

} // namespace vfpga
