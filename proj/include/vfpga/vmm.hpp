// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vfpga/bitstream.hpp"
#include "vfpga/device.hpp"
#include "vfpga/error.hpp"
#include "vfpga/mmu.hpp"
#include "vfpga/sim.hpp"
#include "vfpga/trace.hpp"

namespace vfpga
{

using RequestId = std::uint32_t;

/// Where virtual time goes, for the overhead breakdown.
enum class Phase : std::uint8_t
{
  Software = 0,
  Transfer = 1,
  Kernel = 2,
  Reconfiguration = 3,
};

inline constexpr std::size_t kPhaseCount = 4;

inline constexpr std::string_view phase_name(Phase p)
{
  switch (p)
    {
    case Phase::Software: return "software";
    case Phase::Transfer: return "transfer";
    case Phase::Kernel: return "kernel";
    case Phase::Reconfiguration: return "reconfiguration";
    }
  return "?";
}

/// A contiguous stretch of one request's lifetime, including time spent
/// queued for the resource that then served it.
struct Segment
{
  Phase phase = Phase::Software;
  SimTime begin{0};
  SimTime end{0};

  bool operator==(const Segment&) const = default;
};

/// Delivered to a session's handlers: Irq for its region's kernel
/// completions, Status for completion of a forwarded request.
struct Notification
{
  enum class Kind : std::uint8_t
  {
    Irq = 1,
    Status = 2,
  };

  Kind kind = Kind::Status;
  VmId vm = 0;
  RequestId request = 0;
  Errc status = Errc::Ok;
  SimTime time{0};
  std::vector<Segment> segments;
  Bytes data;
  std::uint64_t seq = 0;

  bool operator==(const Notification&) const = default;
};

enum class InterfaceId : std::uint8_t
{
  KernelCra = 0,
  Memory = 1,
  Reprogram = 2,
};

struct InterfaceInfo
{
  bool pass_through = false;
  unsigned prr = 0;
  std::uint32_t arg_slots = 0;
  std::uint32_t register_count = 0;
  std::uint64_t segment_size = 0;
  std::uint64_t ddr_size = 0;

  bool operator==(const InterfaceInfo&) const = default;
};

struct VmmConfig
{
  std::uint64_t segment_size = 1 * MiB;
  std::size_t reprogram_queue_depth = 16;
  bool scrub_on_detach = true;
  /// Native baseline: no mediation charge and no staging copies.
  bool native = false;

  bool operator==(const VmmConfig&) const = default;
};

struct SystemConfig
{
  DeviceConfig device;
  VmmConfig vmm;

  bool operator==(const SystemConfig&) const = default;

  void validate() const
  {
    device.validate();
    if (vmm.segment_size == 0 || device.ddr_size % vmm.segment_size != 0)
      throw Error(Errc::ConfigError, "ddr_size must be a multiple of segment_size");
    if (vmm.reprogram_queue_depth == 0)
      throw Error(Errc::ConfigError, "reprogram queue depth must be positive");
    if (device.range_guard
        && (device.ddr_size % device.prr_count != 0
            || (device.ddr_size / device.prr_count) % vmm.segment_size != 0))
      throw Error(Errc::ConfigError,
                  "with the range guard on, each region's share of DDR must be whole segments");
  }

  /// Every field that influences simulated behavior, in fixed order.
  std::string canonical() const
  {
    const auto& c = device.cost;
    std::ostringstream os;
    os << "prr_count=" << device.prr_count << ";ddr_size=" << device.ddr_size
       << ";device_id=" << device.device_id << ";shell_id=" << device.shell_id
       << ";range_guard=" << device.range_guard << ";clock_hz=" << c.clock_hz
       << ";dma_bandwidth=" << c.dma_bandwidth << ";dma_latency=" << c.dma_latency.count()
       << ";pr_bandwidth=" << c.pr_bandwidth
       << ";full_reconfig_time=" << c.full_reconfig_time.count()
       << ";sw_call_overhead=" << c.sw_call_overhead.count()
       << ";staging_copy_bandwidth=" << c.staging_copy_bandwidth << ";prr_clock_hz=";
    for (auto hz : device.prr_clock_hz)
      os << hz << ',';
    os << ";segment_size=" << vmm.segment_size
       << ";reprogram_queue_depth=" << vmm.reprogram_queue_depth
       << ";scrub_on_detach=" << vmm.scrub_on_detach << ";native=" << vmm.native;
    return os.str();
  }

  std::uint64_t fingerprint() const
  {
    auto s = canonical();
    return fnv1a64(ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }
};

struct Session
{
  VmId vm = 0;
  unsigned prr = 0;
  std::uint64_t token = 0;
  std::map<std::uint64_t, MemHandle> handles;  ///< keyed by base address
  std::deque<Notification> inbox;
};

/// The broker. Owns the simulated device and the software MMU, mediates
/// memory and reprogram requests, passes register access through to each
/// VM's own region, and demultiplexes the shared MSI to sessions.
///
/// Forwarded requests are accepted (or refused) at the current virtual
/// time and complete later; completion is reported as a Status
/// notification in the session's inbox.
class Vmm
{
public:
  explicit Vmm(SystemConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))), device_(sim_, cfg_.device),
      pool_(cfg_.device.ddr_size, cfg_.vmm.segment_size)
  {
    device_.set_msi_handler([this] { route_msi(); });
    device_.set_trace_sink([this](const DeviceEvent& e) {
      TraceEvent t;
      t.time = sim_.now();
      if (e.prr)
        if (auto* s = session_for_prr(*e.prr))
          t.vm = s->vm;
      t.op = std::string(e.op);
      t.arg_digest = e.digest;
      t.outcome = e.outcome;
      trace_.record(std::move(t));
    });
  }

  Vmm(const Vmm&) = delete;
  Vmm& operator=(const Vmm&) = delete;

  const SystemConfig& config() const
  { return cfg_; }

  Simulator& sim()
  { return sim_; }

  const Simulator& sim() const
  { return sim_; }

  Device& device()
  { return device_; }

  const SegmentPool<>& pool() const
  { return pool_; }

  TraceLog& trace()
  { return trace_; }

  const TraceLog& trace() const
  { return trace_; }

  std::uint64_t digest() const
  { return device_.digest(); }

  // -- sessions -----------------------------------------------------------

  /// Give `vm` the lowest-index free region and enable its interrupt.
  Session& attach_vm(VmId vm)
  {
    if (sessions_.count(vm))
      throw Error(Errc::AlreadyAttached, "vm " + std::to_string(vm) + " already attached");
    std::optional<unsigned> prr;
    for (unsigned i = 0; i < device_.prr_count() && !prr; ++i)
      if (!session_for_prr(i) && device_.slot(i).state != SlotState::Configuring)
        prr = i;
    if (!prr)
      throw Error(Errc::NoRegionAvailable, "all regions are assigned");
    Session s;
    s.vm = vm;
    s.prr = *prr;
    s.token = fnv1a64_u64(++attach_counter_, fnv1a64_u64(vm)) | 1;
    device_.ack_irq(*prr);
    device_.write_irq_mask(device_.irq_mask() & ~(1u << *prr));
    return sessions_.emplace(vm, std::move(s)).first->second;
  }

  /// Release everything the session holds. The region is scrubbed unless
  /// configured otherwise.
  void detach_vm(VmId vm)
  {
    auto& s = session(vm);
    auto prr = s.prr;
    auto before = pr_queue_.size();
    std::erase_if(pr_queue_, [vm](const PrJob& j) { return j.vm == vm; });
    pending_reprograms_ -= before - pr_queue_.size();
    for (const auto& [base, h] : s.handles)
      {
        if (inflight_.count(base))
          deferred_release_.insert(base);
        else
          pool_.free(h);
      }
    device_.write_irq_mask(device_.irq_mask() | (1u << prr));
    device_.ack_irq(prr);
    sessions_.erase(vm);
    if (cfg_.vmm.scrub_on_detach && device_.slot(prr).state != SlotState::Configuring)
      device_.scrub(prr);
  }

  Session& session(VmId vm)
  {
    auto it = sessions_.find(vm);
    if (it == sessions_.end())
      throw Error(Errc::NotAttached, "vm " + std::to_string(vm) + " is not attached");
    return it->second;
  }

  const Session* find_session(VmId vm) const
  {
    auto it = sessions_.find(vm);
    return it == sessions_.end() ? nullptr : &it->second;
  }

  Session* session_by_token(std::uint64_t token)
  {
    for (auto& [vm, s] : sessions_)
      if (s.token == token)
        return &s;
    return nullptr;
  }

  Session* session_for_prr(unsigned prr)
  {
    for (auto& [vm, s] : sessions_)
      if (s.prr == prr)
        return &s;
    return nullptr;
  }

  const std::map<VmId, Session>& sessions() const
  { return sessions_; }

  // -- forwarded: reprogram ---------------------------------------------

  /// Legality check, then FIFO hand-off to the single control block. A
  /// bitfile compiled for another VM's region never reaches the device.
  void handle_reprogram(VmId vm, RequestId req, ByteView bitfile)
  {
    auto& s = session(vm);
    auto pb = decode_bitfile(bitfile);
    if (pb.header.prr_id != s.prr)
      throw Error(Errc::PermissionDenied, "bitfile targets region "
                                            + std::to_string(pb.header.prr_id)
                                            + ", session owns region " + std::to_string(s.prr));
    if (!cb_compatibility_check(pb, cfg_.device.device_id, cfg_.device.shell_id))
      throw Error(Errc::Incompatible, "bitfile built for another device or shell");
    if (pending_reprograms_ >= cfg_.vmm.reprogram_queue_depth)
      throw Error(Errc::Busy, "reprogram queue full");
    ++pending_reprograms_;
    auto t0 = sim_.now();
    auto cpu = reserve_cpu(overhead());
    sim_.schedule_at(cpu.end, [this, job = PrJob{vm, req, Bytes(bitfile.begin(), bitfile.end()),
                                                 t0, cpu.end}]() mutable {
      pr_queue_.push_back(std::move(job));
      pump_reconfiguration();
    });
  }

  std::size_t pending_reprograms() const
  { return pending_reprograms_; }

  // -- forwarded: memory ------------------------------------------------

  MemHandle handle_alloc(VmId vm, RequestId req, std::uint64_t size)
  {
    auto& s = session(vm);
    auto h = pool_.allocate(vm, size, window_for(s.prr));
    s.handles.emplace(h.base_addr, h);
    finish_after_cpu(vm, req, overhead());
    return h;
  }

  void handle_free(VmId vm, RequestId req, std::uint64_t base)
  {
    auto& s = session(vm);
    auto it = s.handles.find(base);
    if (it == s.handles.end())
      {
        auto other = pool_.handle_at(base);
        if (other && other->base_addr == base)
          throw Error(Errc::PermissionDenied, "handle belongs to another vm");
        throw Error(Errc::InvalidHandle, "no live handle at this address");
      }
    if (inflight_.count(base))
      throw Error(Errc::Busy, "transfer in flight on this buffer");
    pool_.free(it->second);
    s.handles.erase(it);
    finish_after_cpu(vm, req, overhead());
  }

  void handle_free(VmId vm, RequestId req, const MemHandle& h)
  { handle_free(vm, req, h.base_addr); }

  /// VM-copy write: guest memory to host staging, then DMA to the device.
  void handle_write_buffer(VmId vm, RequestId req, std::uint64_t addr, Bytes data)
  {
    auto& s = session(vm);
    auto h = resolve(s, addr, data.size());
    auto t0 = sim_.now();
    auto len = data.size();
    auto cpu = reserve_cpu(overhead() + staging(len));
    ++inflight_[h.base_addr];
    sim_.schedule_at(cpu.end, [this, vm, req, addr, t0, cpu, base = h.base_addr,
                               data = std::move(data)]() mutable {
      auto len = data.size();
      device_.dma_transfer(DmaDirection::HostToDevice, std::move(data), addr, len,
                           [this, vm, req, t0, cpu, base](Bytes) {
                             release_inflight(base);
                             complete(vm, req, Errc::Ok,
                                      {{Phase::Software, t0, cpu.end},
                                       {Phase::Transfer, cpu.end, sim_.now()}});
                           });
    });
  }

  void handle_write_buffer(VmId vm, RequestId req, const MemHandle& h, std::uint64_t offset,
                           Bytes data)
  {
    check_handle_bounds(h, offset, data.size());
    handle_write_buffer(vm, req, h.base_addr + offset, std::move(data));
  }

  /// VM-copy read: DMA to host staging, then copy into the guest. The data
  /// arrives with the Status notification.
  void handle_read_buffer(VmId vm, RequestId req, std::uint64_t addr, std::uint64_t len)
  {
    auto& s = session(vm);
    auto h = resolve(s, addr, len);
    auto t0 = sim_.now();
    auto cpu = reserve_cpu(overhead());
    ++inflight_[h.base_addr];
    sim_.schedule_at(cpu.end, [this, vm, req, addr, len, t0, cpu, base = h.base_addr] {
      device_.dma_transfer(
        DmaDirection::DeviceToHost, {}, addr, len,
        [this, vm, req, t0, cpu, base, len](Bytes data) {
          auto dma_end = sim_.now();
          auto copy = reserve_cpu(staging(len));
          sim_.schedule_at(copy.end, [this, vm, req, t0, cpu, dma_end, copy, base,
                                      data = std::move(data)]() mutable {
            release_inflight(base);
            complete(vm, req, Errc::Ok,
                     {{Phase::Software, t0, cpu.end},
                      {Phase::Transfer, cpu.end, dma_end},
                      {Phase::Software, dma_end, copy.end}},
                     std::move(data));
          });
        });
    });
  }

  void handle_read_buffer(VmId vm, RequestId req, const MemHandle& h, std::uint64_t offset,
                          std::uint64_t len)
  {
    check_handle_bounds(h, offset, len);
    handle_read_buffer(vm, req, h.base_addr + offset, len);
  }

  InterfaceInfo handle_get_info(VmId vm, RequestId req, InterfaceId iface)
  {
    auto& s = session(vm);
    InterfaceInfo info;
    info.pass_through = iface == InterfaceId::KernelCra;
    info.prr = s.prr;
    info.arg_slots = static_cast<std::uint32_t>(kArgSlots);
    info.register_count = kRegisterCount;
    info.segment_size = cfg_.vmm.segment_size;
    info.ddr_size = cfg_.device.ddr_size;
    finish_after_cpu(vm, req, overhead());
    return info;
  }

  // -- pass-through ------------------------------------------------------

  RegAccess reg_write(VmId vm, unsigned reg, std::uint64_t value)
  { return device_.write_kernel_register(session(vm).prr, reg, value); }

  RegRead reg_read(VmId vm, unsigned reg)
  { return device_.read_kernel_register(session(vm).prr, reg); }

  // -- completion bookkeeping --------------------------------------------

  using CompletionHook = std::function<void(VmId, RequestId, Errc)>;

  /// Called whenever a forwarded request finishes, after its notification
  /// is queued.
  void set_completion_hook(CompletionHook hook)
  { on_complete_ = std::move(hook); }

  bool completed(VmId vm, RequestId req) const
  { return done_.count({vm, req}) != 0; }

  void forget_completion(VmId vm, RequestId req)
  { done_.erase({vm, req}); }

  bool has_irq(VmId vm) const
  {
    auto* s = find_session(vm);
    if (!s)
      return false;
    return std::any_of(s->inbox.begin(), s->inbox.end(),
                       [](const auto& n) { return n.kind == Notification::Kind::Irq; });
  }

  std::vector<Notification> drain(VmId vm)
  {
    std::vector<Notification> out;
    auto it = sessions_.find(vm);
    if (it == sessions_.end())
      return out;
    auto& inbox = it->second.inbox;
    out.assign(std::make_move_iterator(inbox.begin()), std::make_move_iterator(inbox.end()));
    inbox.clear();
    return out;
  }

  /// Every session's notifications, merged in delivery order.
  std::vector<Notification> drain_all()
  {
    std::vector<Notification> out;
    for (auto& [vm, s] : sessions_)
      {
        for (auto& n : s.inbox)
          out.push_back(std::move(n));
        s.inbox.clear();
      }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
    return out;
  }

  // -- interrupt routing --------------------------------------------------

  /// ISR for the shared MSI: find sources in the status register, mask
  /// them for the duration, ack, hand each to its owning session, then
  /// re-enable the owned ones. Completions latched meanwhile arrive with
  /// a later MSI. Unowned sources are logged and stay masked.
  void route_msi()
  {
    auto status = device_.read_irq_status();
    auto sources = status & ~device_.irq_mask();
    if (!sources)
      return;
    device_.write_irq_mask(device_.irq_mask() | sources);
    std::uint32_t reenable = 0;
    for (unsigned prr = 0; prr < device_.prr_count(); ++prr)
      {
        std::uint32_t bit = 1u << prr;
        if (!(sources & bit))
          continue;
        device_.ack_irq(prr);
        if (auto* s = session_for_prr(prr))
          {
            dispatch_irq(*s);
            reenable |= bit;
          }
        else
          {
            TraceEvent t;
            t.time = sim_.now();
            t.op = "dev.orphan_irq";
            t.arg_digest = prr;
            trace_.record(std::move(t));
          }
      }
    ++isr_runs_;
    device_.write_irq_mask(device_.irq_mask() & ~reenable);
  }

  std::uint64_t isr_runs() const
  { return isr_runs_; }

private:
  struct CpuWindow
  {
    SimTime start{0};
    SimTime end{0};
  };

  struct PrJob
  {
    VmId vm;
    RequestId req;
    Bytes bitfile;
    SimTime issued{0};
    SimTime queued{0};
  };

  Duration overhead() const
  { return cfg_.vmm.native ? Duration::zero() : cfg_.device.cost.sw_call_overhead; }

  Duration staging(std::uint64_t len) const
  {
    if (cfg_.vmm.native)
      return Duration::zero();
    return transfer_time(len, cfg_.device.cost.staging_copy_bandwidth);
  }

  /// The broker's request-processing context is one FIFO server.
  CpuWindow reserve_cpu(Duration d)
  {
    CpuWindow w;
    w.start = std::max(sim_.now(), cpu_free_at_);
    w.end = w.start + d;
    cpu_free_at_ = w.end;
    return w;
  }

  SegmentWindow window_for(unsigned prr) const
  {
    if (!device_.guard_enabled())
      return pool_.whole();
    auto [base, limit] = device_.guard_range(prr);
    return {static_cast<std::size_t>(base / cfg_.vmm.segment_size),
            static_cast<std::size_t>(limit / cfg_.vmm.segment_size)};
  }

  static void check_handle_bounds(const MemHandle& h, std::uint64_t offset, std::uint64_t len)
  {
    if (offset > h.size || len > h.size - offset)
      throw Error(Errc::OutOfBounds, "access beyond buffer end");
  }

  /// Ownership first, then bounds; nothing has moved if either fails.
  MemHandle resolve(const Session& s, std::uint64_t addr, std::uint64_t len) const
  {
    auto it = s.handles.upper_bound(addr);
    if (it == s.handles.begin())
      throw Error(Errc::PermissionDenied, "address not in any buffer of this vm");
    --it;
    const auto& h = it->second;
    if (!h.contains(addr) && !(addr == h.base_addr + h.size && len == 0))
      throw Error(Errc::PermissionDenied, "address not in any buffer of this vm");
    if (len > h.base_addr + h.size - addr)
      throw Error(Errc::OutOfBounds, "access beyond buffer end");
    return h;
  }

  void release_inflight(std::uint64_t base)
  {
    auto it = inflight_.find(base);
    if (it == inflight_.end())
      return;
    if (--it->second > 0)
      return;
    inflight_.erase(it);
    if (deferred_release_.erase(base))
      if (auto h = pool_.handle_at(base))
        pool_.free(*h);
  }

  void finish_after_cpu(VmId vm, RequestId req, Duration d)
  {
    auto t0 = sim_.now();
    auto cpu = reserve_cpu(d);
    sim_.schedule_at(cpu.end, [this, vm, req, t0, cpu] {
      complete(vm, req, Errc::Ok, {{Phase::Software, t0, cpu.end}});
    });
  }

  void complete(VmId vm, RequestId req, Errc status, std::vector<Segment> segments,
                Bytes data = {})
  {
    auto it = sessions_.find(vm);
    if (it == sessions_.end())
      return;
    Notification n;
    n.kind = Notification::Kind::Status;
    n.vm = vm;
    n.request = req;
    n.status = status;
    n.time = sim_.now();
    n.segments = std::move(segments);
    n.data = std::move(data);
    n.seq = next_notification_seq_++;
    it->second.inbox.push_back(std::move(n));
    done_.insert({vm, req});
    if (on_complete_)
      on_complete_(vm, req, status);
  }

  void pump_reconfiguration()
  {
    while (!device_.pr_busy() && !pr_queue_.empty())
      {
        auto job = std::move(pr_queue_.front());
        pr_queue_.pop_front();
        --pending_reprograms_;
        auto* s = find_session(job.vm);
        if (!s)
          continue;
        auto prr = s->prr;
        try
          {
            device_.pr_reconfigure(prr, job.bitfile, [this, job, prr](Errc e) {
              complete(job.vm, job.req, e,
                       {{Phase::Software, job.issued, job.queued},
                        {Phase::Reconfiguration, job.queued, sim_.now()}});
              if (!session_for_prr(prr) && cfg_.vmm.scrub_on_detach)
                device_.scrub(prr);
              pump_reconfiguration();
            });
          }
        catch (const Error& e)
          {
            complete(job.vm, job.req, e.code(),
                     {{Phase::Software, job.issued, job.queued},
                      {Phase::Reconfiguration, job.queued, sim_.now()}});
          }
      }
  }

  void dispatch_irq(const Session& s)
  {
    const auto& slot = device_.slot(s.prr);
    auto launched = slot.launched_at;
    auto completed = slot.completed_at;
    auto status = slot.last_status;
    auto cpu = reserve_cpu(overhead());
    sim_.schedule_at(cpu.end, [this, vm = s.vm, prr = s.prr, launched, completed, status, cpu] {
      auto it = sessions_.find(vm);
      if (it == sessions_.end() || it->second.prr != prr)
        return;
      Notification n;
      n.kind = Notification::Kind::Irq;
      n.vm = vm;
      n.status = status;
      n.time = sim_.now();
      n.segments = {{Phase::Kernel, launched, completed}, {Phase::Software, completed, cpu.end}};
      n.seq = next_notification_seq_++;
      it->second.inbox.push_back(std::move(n));
    });
  }

  SystemConfig cfg_;
  Simulator sim_;
  Device device_;
  SegmentPool<> pool_;
  TraceLog trace_;
  std::map<VmId, Session> sessions_;
  std::deque<PrJob> pr_queue_;
  std::size_t pending_reprograms_ = 0;
  std::map<std::uint64_t, int> inflight_;
  std::set<std::uint64_t> deferred_release_;
  std::set<std::pair<VmId, RequestId>> done_;
  SimTime cpu_free_at_{0};
  std::uint64_t attach_counter_ = 0;
  std::uint64_t next_notification_seq_ = 0;
  std::uint64_t isr_runs_ = 0;
  CompletionHook on_complete_;
};

} // namespace vfpga
