// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "vfpga/bitstream.hpp"
#include "vfpga/client.hpp"
#include "vfpga/config.hpp"
#include "vfpga/guest.hpp"
#include "vfpga/service.hpp"
#include "vfpga/transport.hpp"

namespace vfpga::bench
{

// -- helpers ------------------------------------------------------------------

/// Bitfile for `kind` as the hidden PR compile step would emit it for a
/// given device, shell and region.
inline Bytes compile(KernelKind kind, const DeviceConfig& dev, unsigned prr,
                     std::uint32_t frame_bytes, std::optional<std::uint32_t> cycles = std::nullopt)
{
  auto desc = default_descriptor(kind);
  if (cycles)
    desc.static_cycles_per_item = *cycles;
  return encode_bitfile(desc, dev.device_id, dev.shell_id, prr, frame_bytes);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0)
{ return fnv1a64_u64(c, fnv1a64_u64(b, fnv1a64_u64(a))); }

inline Bytes make_fill(Fill fill, std::uint8_t byte, std::uint64_t size, std::uint64_t seed)
{
  Bytes out(size, 0);
  switch (fill)
    {
    case Fill::Zero:
      break;
    case Fill::Byte:
      std::fill(out.begin(), out.end(), byte);
      break;
    case Fill::Iota:
      for (std::uint64_t i = 0; i < size; ++i)
        out[i] = static_cast<std::uint8_t>((i / 4) >> (8 * (i % 4)));
      break;
    case Fill::Random:
      {
        std::mt19937_64 rng(seed);
        for (std::uint64_t i = 0; i < size; i += 8)
          {
            auto v = rng();
            for (std::uint64_t b = 0; b < 8 && i + b < size; ++b)
              out[i + b] = static_cast<std::uint8_t>(v >> (8 * b));
          }
        break;
      }
    }
  return out;
}

inline std::string format_seconds(Duration d)
{
  std::ostringstream os;
  os << std::fixed << std::setprecision(12) << to_seconds(d);
  return os.str();
}

inline std::string format_ratio(double v)
{
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

// -- breakdown ------------------------------------------------------------------

using PhaseTimes = std::array<Duration, kPhaseCount>;

/// Attribute every instant of [0, total) to one phase. Where segments
/// overlap the highest-priority phase wins (kernel, transfer,
/// reconfiguration, software); uncovered time is software.
inline PhaseTimes attribute(const std::vector<Segment>& segments, SimTime total)
{
  static constexpr std::array<Phase, kPhaseCount> priority{Phase::Kernel, Phase::Transfer,
                                                           Phase::Reconfiguration, Phase::Software};
  std::vector<std::pair<SimTime, std::pair<int, int>>> edges;
  for (const auto& s : segments)
    {
      auto b = std::clamp(s.begin, SimTime(0), total);
      auto e = std::clamp(s.end, SimTime(0), total);
      if (e <= b)
        continue;
      edges.push_back({b, {static_cast<int>(s.phase), +1}});
      edges.push_back({e, {static_cast<int>(s.phase), -1}});
    }
  std::sort(edges.begin(), edges.end());
  PhaseTimes out{};
  std::array<int, kPhaseCount> open{};
  SimTime cursor(0);
  auto flush = [&](SimTime upto) {
    if (upto <= cursor)
      return;
    Phase winner = Phase::Software;
    for (auto p : priority)
      if (open[static_cast<std::size_t>(p)] > 0)
        {
          winner = p;
          break;
        }
    out[static_cast<std::size_t>(winner)] += upto - cursor;
    cursor = upto;
  };
  for (const auto& [t, ev] : edges)
    {
      flush(t);
      open[static_cast<std::size_t>(ev.first)] += ev.second;
    }
  flush(total);
  return out;
}

struct VmReport
{
  VmId vm = 0;
  unsigned prr = 0;
  SimTime finish{0};
  std::size_t ops = 0;
  std::uint64_t launches = 0;
  std::uint64_t irqs = 0;
  std::vector<std::string> errors;  ///< "line:ErrorName"
  std::vector<std::uint64_t> reads; ///< digest of each read's data
  PhaseTimes busy{};                ///< raw per-phase sums, may overlap
};

struct BreakdownReport
{
  std::uint64_t config_fingerprint = 0;
  std::uint64_t seed = 0;
  SimTime total{0};
  PhaseTimes components{};
  std::uint64_t digest = 0;
  std::uint64_t trace_events = 0;
  std::vector<VmReport> vms;
  std::shared_ptr<BreakdownReport> native;

  Duration component(Phase p) const
  { return components[static_cast<std::size_t>(p)]; }

  double share(Phase p) const
  {
    return total.count() == 0 ? 0.0
                              : static_cast<double>(component(p).count())
                                  / static_cast<double>(total.count());
  }

  Duration component_sum() const
  {
    Duration s{0};
    for (auto c : components)
      s += c;
    return s;
  }

  std::string to_text() const
  {
    std::ostringstream os;
    write(os, "");
    if (native)
      {
        native->write(os, "native.");
        // The baseline runs VM 0's script alone, so compare against VM 0.
        auto mediated = vms.empty() ? total : vms.front().finish;
        double slowdown = native->total.count() == 0
                            ? 0.0
                            : static_cast<double>(mediated.count())
                                / static_cast<double>(native->total.count());
        os << "native.vm0_slowdown = " << format_ratio(slowdown) << '\n';
      }
    return os.str();
  }

private:
  void write(std::ostream& os, const std::string& prefix) const
  {
    os << prefix << "config = " << hex64(config_fingerprint) << '\n';
    os << prefix << "seed = " << seed << '\n';
    os << prefix << "total_ps = " << total.count() << '\n';
    os << prefix << "total_s = " << format_seconds(total) << '\n';
    for (std::size_t i = 0; i < kPhaseCount; ++i)
      os << prefix << phase_name(Phase(i)) << "_ps = " << components[i].count() << '\n';
    for (std::size_t i = 0; i < kPhaseCount; ++i)
      os << prefix << phase_name(Phase(i)) << "_share = " << format_ratio(share(Phase(i))) << '\n';
    os << prefix << "sum_matches_total = " << (component_sum() == total ? "yes" : "no") << '\n';
    os << prefix << "digest = " << hex64(digest) << '\n';
    os << prefix << "trace_events = " << trace_events << '\n';
    os << prefix << "vms = " << vms.size() << '\n';
    for (const auto& v : vms)
      {
        auto p = prefix + "vm." + std::to_string(v.vm) + ".";
        os << p << "prr = " << v.prr << '\n';
        os << p << "finish_ps = " << v.finish.count() << '\n';
        os << p << "ops = " << v.ops << '\n';
        os << p << "launches = " << v.launches << '\n';
        os << p << "irqs = " << v.irqs << '\n';
        os << p << "errors = ";
        if (v.errors.empty())
          os << "none";
        for (std::size_t i = 0; i < v.errors.size(); ++i)
          os << (i ? "," : "") << v.errors[i];
        os << '\n' << p << "reads = ";
        if (v.reads.empty())
          os << "none";
        for (std::size_t i = 0; i < v.reads.size(); ++i)
          os << (i ? "," : "") << hex64(v.reads[i]);
        os << '\n';
        for (std::size_t i = 0; i < kPhaseCount; ++i)
          os << p << phase_name(Phase(i)) << "_ps = " << v.busy[i].count() << '\n';
      }
  }
};

// -- scenario runner ----------------------------------------------------------------

/// Drives every VM's script against one broker through a Transport. Each
/// forwarded op is issued asynchronously and the VM waits for its Status
/// notification; virtual time moves only through control-side advance
/// requests, so in-process and socket runs exchange identical frames.
class ScenarioRunner
{
public:
  ScenarioRunner(const ScenarioConfig& cfg, Transport& transport)
    : cfg_(cfg), control_(transport)
  {
    control_.set_sink([this](const Notification& n) { on_notification(n); });
    for (const auto& script : cfg_.vms)
      {
        auto st = std::make_unique<VmState>(transport);
        st->script = &script;
        st->report.vm = script.vm;
        st->client.set_sink([this](const Notification& n) { on_notification(n); });
        states_.push_back(std::move(st));
      }
  }

  BreakdownReport run()
  {
    auto q = control_.query();
    if (q.config_fingerprint != cfg_.system.fingerprint())
      throw Error(Errc::ConfigMismatch, "broker runs a different configuration");
    for (auto& st : states_)
      {
        st->report.prr = st->client.attach(st->script->vm);
        by_vm_[st->script->vm] = st.get();
      }

    while (true)
      {
        issue_ready();
        if (std::all_of(states_.begin(), states_.end(), [](auto& s) { return s->done(); }))
          break;
        SimTime wake = kNever;
        for (auto& st : states_)
          if (st->wait == Wait::Until)
            wake = std::min(wake, st->until);
        auto before = notifications_seen_;
        auto a = control_.advance_until(wake);
        now_ = a.now;
        bool woke = false;
        for (auto& st : states_)
          if (st->wait == Wait::Until && st->until <= now_)
            {
              st->wait = Wait::None;
              st->report.finish = now_;
              ++st->pc;
              woke = true;
            }
        if (a.ran == 0 && notifications_seen_ == before && !woke)
          throw Error(Errc::DeadlockDetected, stuck_list());
      }

    BreakdownReport rep;
    rep.config_fingerprint = cfg_.system.fingerprint();
    rep.seed = cfg_.seed;
    for (auto& st : states_)
      {
        rep.total = std::max(rep.total, st->report.finish);
        rep.vms.push_back(st->report);
      }
    rep.components = attribute(segments_, rep.total);
    auto fin = control_.query();
    rep.digest = fin.digest;
    rep.trace_events = fin.trace_events;
    return rep;
  }

  /// Current trace of the broker this runner talks to.
  std::string export_trace()
  { return control_.export_trace(); }

  SimTime now() const
  { return now_; }

private:
  enum class Wait
  {
    None,
    Request,
    Irq,
    Until,
  };

  struct VmState
  {
    explicit VmState(Transport& t)
      : client(t)
    { }

    const VmScript* script = nullptr;
    VmmClient client;
    std::size_t pc = 0;
    Wait wait = Wait::None;
    RequestId request = 0;
    SimTime until{0};
    std::map<std::string, MemHandle> buffers;
    VmReport report;

    bool done() const
    { return wait == Wait::None && pc >= script->ops.size(); }

    const ScriptOp& op() const
    { return script->ops[pc]; }
  };

  void issue_ready()
  {
    bool progress = true;
    while (progress)
      {
        progress = false;
        for (auto& st : states_)
          while (st->wait == Wait::None && st->pc < st->script->ops.size())
            {
              issue(*st);
              progress = true;
            }
      }
  }

  void fail_op(VmState& st, Errc e)
  {
    st.report.errors.push_back(std::to_string(st.op().line) + ":" + std::string(errc_name(e)));
  }

  /// Either completes the op immediately (pc advances) or parks the VM.
  void issue(VmState& st)
  {
    const auto& op = st.op();
    ++st.report.ops;
    auto await = [&](const VmmClient::Reply& r) {
      if (!r.ok())
        {
          fail_op(st, r.status);
          st.report.finish = now_;
          ++st.pc;
          return;
        }
      st.wait = Wait::Request;
      st.request = r.request;
    };
    const auto& dev = cfg_.system.device;
    switch (op.kind)
      {
      case OpKind::Reprogram:
        {
          auto prr = op.prr.value_or(st.client.prr());
          await(st.client.reprogram_async(
            compile(op.kernel, dev, prr, cfg_.bitfile_frame_bytes, op.cycles)));
          return;
        }
      case OpKind::ReprogramFile:
        {
          std::ifstream in(op.path, std::ios::binary);
          if (!in)
            {
              fail_op(st, Errc::IoError);
              ++st.pc;
              return;
            }
          Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
          await(st.client.reprogram_async(data));
          return;
        }
      case OpKind::Alloc:
        {
          auto r = st.client.alloc_async(op.size);
          if (r.ok())
            st.buffers[op.buffer] = VmmClient::decode_handle(r);
          await(r);
          return;
        }
      case OpKind::Write:
        {
          auto it = st.buffers.find(op.buffer);
          if (it == st.buffers.end())
            {
              fail_op(st, Errc::InvalidHandle);
              ++st.pc;
              return;
            }
          auto data = make_fill(op.fill, op.byte, it->second.size,
                                mix_seed(cfg_.seed, st.script->vm, st.pc));
          await(st.client.write_async(it->second.base_addr, data));
          return;
        }
      case OpKind::Read:
        {
          auto it = st.buffers.find(op.buffer);
          if (it == st.buffers.end())
            {
              fail_op(st, Errc::InvalidHandle);
              ++st.pc;
              return;
            }
          await(st.client.read_async(it->second.base_addr, it->second.size));
          return;
        }
      case OpKind::Free:
        {
          auto it = st.buffers.find(op.buffer);
          if (it == st.buffers.end())
            {
              fail_op(st, Errc::InvalidHandle);
              ++st.pc;
              return;
            }
          auto r = st.client.free_async(it->second.base_addr);
          if (r.ok())
            st.buffers.erase(it);
          await(r);
          return;
        }
      case OpKind::Launch:
        launch(st);
        st.report.finish = now_;
        ++st.pc;
        return;
      case OpKind::Wait:
        if (st.report.irqs >= st.report.launches)
          {
            st.report.finish = std::max(st.report.finish, now_);
            ++st.pc;
          }
        else
          st.wait = Wait::Irq;
        return;
      case OpKind::Sleep:
        st.wait = Wait::Until;
        st.until = now_ + op.sleep;
        segments_.push_back({Phase::Software, now_, st.until});
        st.report.busy[static_cast<std::size_t>(Phase::Software)] += op.sleep;
        return;
      }
  }

  void launch(VmState& st)
  {
    const auto& op = st.op();
    auto status = st.client.reg_read(kRegStatus);
    if (status.access == RegAccess::Ignored)
      return fail_op(st, Errc::FrozenAccess);
    if (!(status.value & status_bits::kLoaded))
      return fail_op(st, Errc::NoKernelLoaded);
    for (std::size_t i = 0; i < op.args.size(); ++i)
      {
        std::uint64_t v = 0;
        if (auto* name = std::get_if<std::string>(&op.args[i]))
          {
            auto it = st.buffers.find(*name);
            if (it == st.buffers.end())
              return fail_op(st, Errc::InvalidHandle);
            v = it->second.base_addr;
          }
        else
          v = std::get<std::uint64_t>(op.args[i]);
        if (st.client.reg_write(kRegArgBase + static_cast<unsigned>(i), v) == RegAccess::Ignored)
          return fail_op(st, Errc::FrozenAccess);
      }
    if (st.client.reg_write(kRegControl, 1) == RegAccess::Ignored)
      return fail_op(st, Errc::FrozenAccess);
    ++st.report.launches;
  }

  void on_notification(const Notification& n)
  {
    ++notifications_seen_;
    auto it = by_vm_.find(n.vm);
    if (it == by_vm_.end())
      return;
    auto& st = *it->second;
    for (const auto& s : n.segments)
      {
        segments_.push_back(s);
        st.report.busy[static_cast<std::size_t>(s.phase)] += s.end - s.begin;
      }
    if (n.kind == Notification::Kind::Irq)
      {
        ++st.report.irqs;
        if (n.status != Errc::Ok)
          st.report.errors.push_back("irq:" + std::string(errc_name(n.status)));
        if (st.wait == Wait::Irq && st.report.irqs >= st.report.launches)
          {
            st.wait = Wait::None;
            st.report.finish = n.time;
            ++st.pc;
          }
        return;
      }
    if (st.wait != Wait::Request || n.request != st.request)
      return;
    if (n.status != Errc::Ok)
      fail_op(st, n.status);
    if (st.op().kind == OpKind::Read && n.status == Errc::Ok)
      st.report.reads.push_back(fnv1a64(n.data));
    st.wait = Wait::None;
    st.report.finish = n.time;
    ++st.pc;
  }

  std::string stuck_list() const
  {
    std::string out = "no runnable events; stuck:";
    for (const auto& st : states_)
      if (!st->done())
        out += " vm " + std::to_string(st->script->vm) + " (line "
               + std::to_string(st->op().line) + ")";
    return out;
  }

  const ScenarioConfig& cfg_;
  VmmClient control_;
  std::vector<std::unique_ptr<VmState>> states_;
  std::map<VmId, VmState*> by_vm_;
  std::vector<Segment> segments_;
  std::uint64_t notifications_seen_ = 0;
  SimTime now_{0};
};

enum class RunMode
{
  InProcess,
  Wire,
};

struct RunOutcome
{
  BreakdownReport report;
  std::string trace;
  SimTime final_time{0};
};

inline std::string temp_socket_path()
{
  static std::atomic<unsigned> counter{0};
  auto dir = std::filesystem::temp_directory_path();
  return (dir / ("vfpga-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".sock"))
    .string();
}

/// Run `cfg` against a fresh broker, in process or through a private
/// socket server.
inline RunOutcome run_once(const ScenarioConfig& cfg, RunMode mode)
{
  VmmService service(cfg.system);
  RunOutcome out;
  auto drive = [&](Transport& t) {
    ScenarioRunner runner(cfg, t);
    out.report = runner.run();
    out.trace = runner.export_trace();
    out.final_time = runner.now();
  };
  if (mode == RunMode::InProcess)
    {
      InProcessTransport t(service);
      drive(t);
    }
  else
    {
      VmmServer server(service, temp_socket_path());
      SocketTransport t(server.path());
      drive(t);
    }
  return out;
}

/// Single-VM variant of `cfg` with mediation costs removed.
inline ScenarioConfig native_variant(const ScenarioConfig& cfg)
{
  ScenarioConfig n = cfg;
  n.system.vmm.native = true;
  n.vms.resize(1);
  return n;
}

/// The run command: the scenario itself plus its native baseline.
inline RunOutcome run_scenario(const ScenarioConfig& cfg, RunMode mode = RunMode::InProcess,
                               bool with_native = true)
{
  cfg.validate();
  auto out = run_once(cfg, mode);
  if (with_native)
    out.report.native =
      std::make_shared<BreakdownReport>(run_once(native_variant(cfg), mode).report);
  return out;
}

/// Same as run_scenario but against an already running broker.
inline RunOutcome run_remote(const ScenarioConfig& cfg, Transport& transport)
{
  cfg.validate();
  RunOutcome out;
  ScenarioRunner runner(cfg, transport);
  out.report = runner.run();
  out.trace = runner.export_trace();
  out.final_time = runner.now();
  return out;
}

// -- multiplexing ---------------------------------------------------------------------

struct MultiplexResult
{
  unsigned tenants = 0;
  SimTime shared_makespan{0};     ///< N VMs on an N-region device
  SimTime single_makespan{0};     ///< one VM alone
  Duration single_reconfig{0};    ///< its partial-reconfiguration share
  SimTime serialized_makespan{0}; ///< N full-device passes, full reconfig between tenants
  bool win = false;
};

/// N identical tenants sharing one device through regions versus taking
/// turns on the whole device, each turn paying a full reconfiguration in
/// place of the partial one.
inline MultiplexResult check_multiplexing(const ScenarioConfig& base, unsigned n)
{
  if (base.vms.empty())
    throw Error(Errc::ConfigError, "multiplexing check needs a VM script");
  MultiplexResult r;
  r.tenants = n;

  auto single = base;
  single.vms.resize(1);
  single.system.device.prr_count = std::max(1u, base.system.device.prr_count);
  auto one = run_once(single, RunMode::InProcess).report;
  r.single_makespan = one.total;
  r.single_reconfig = one.component(Phase::Reconfiguration);

  auto shared = base;
  shared.system.device.prr_count = n;
  shared.vms.clear();
  for (unsigned i = 0; i < n; ++i)
    {
      auto script = base.vms.front();
      script.vm = i;
      shared.vms.push_back(script);
    }
  r.shared_makespan = run_once(shared, RunMode::InProcess).report.total;
  r.serialized_makespan =
    (r.single_makespan - r.single_reconfig + base.system.device.cost.full_reconfig_time) * n;
  r.win = r.shared_makespan < r.serialized_makespan;
  return r;
}

// -- microbenchmarks --------------------------------------------------------------------

struct PcieSample
{
  std::uint64_t bytes = 0;
  Duration elapsed{0};
  double rate = 0;  ///< bytes per second
};

inline std::vector<std::uint64_t> default_pcie_sizes()
{
  std::vector<std::uint64_t> sizes;
  for (std::uint64_t s = 4 * KiB; s <= 256 * MiB; s *= 4)
    sizes.push_back(s);
  return sizes;
}

/// Host-to-device DMA on an otherwise idle board, one transfer per size.
inline std::vector<PcieSample> microbench_pcie(const DeviceConfig& dev,
                                               const std::vector<std::uint64_t>& sizes)
{
  std::vector<PcieSample> out;
  for (auto bytes : sizes)
    {
      Simulator sim;
      auto cfg = dev;
      cfg.ddr_size = std::max(cfg.ddr_size, bytes);
      Device d(sim, cfg);
      auto w = d.dma_transfer(DmaDirection::HostToDevice, Bytes(bytes, 0), 0, bytes);
      sim.run();
      PcieSample s;
      s.bytes = bytes;
      s.elapsed = w.end - w.start;
      s.rate = static_cast<double>(bytes) / to_seconds(s.elapsed);
      out.push_back(s);
    }
  return out;
}

struct KernelProbe
{
  unsigned prr = 0;
  std::uint64_t cycles = 0;
  Duration elapsed{0};
  std::uint64_t bytes_moved = 0;

  double hz() const
  { return static_cast<double>(cycles) / to_seconds(elapsed); }

  double bandwidth() const
  { return static_cast<double>(bytes_moved) / to_seconds(elapsed); }
};

/// Run vec_add over `n` elements on region `prr` and time it from start
/// to done.
inline KernelProbe probe_vec_add(const DeviceConfig& dev, unsigned prr, std::uint64_t n)
{
  Simulator sim;
  Device d(sim, dev);
  auto part = dev.range_guard ? d.guard_range(prr) : std::make_pair(std::uint64_t(0), dev.ddr_size);
  if (part.second - part.first < 12 * n)
    throw Error(Errc::ConfigError, "probe vectors do not fit in device memory");
  d.pr_reconfigure(prr, compile(KernelKind::VecAdd, dev, prr, 0));
  sim.run();
  auto a = part.first, b = a + 4 * n, c = b + 4 * n;
  d.write_kernel_register(prr, kRegArgBase + 0, a);
  d.write_kernel_register(prr, kRegArgBase + 1, b);
  d.write_kernel_register(prr, kRegArgBase + 2, c);
  d.write_kernel_register(prr, kRegArgBase + 3, n);
  d.write_kernel_register(prr, kRegControl, 1);
  sim.run();
  const auto& slot = d.slot(prr);
  KernelProbe p;
  p.prr = prr;
  p.cycles = n * default_descriptor(KernelKind::VecAdd).static_cycles_per_item;
  p.elapsed = slot.completed_at - slot.launched_at;
  p.bytes_moved = 12 * n;
  return p;
}

/// Effective clock of every region.
inline std::vector<KernelProbe> microbench_freq(const DeviceConfig& dev, std::uint64_t n = 1'000'000)
{
  std::vector<KernelProbe> out;
  for (unsigned prr = 0; prr < dev.prr_count; ++prr)
    out.push_back(probe_vec_add(dev, prr, n));
  return out;
}

/// Kernel-side DDR streaming rate: vec_add reads two words and writes one
/// per cycle.
inline KernelProbe microbench_membw(const DeviceConfig& dev, std::uint64_t n = 4'000'000)
{ return probe_vec_add(dev, 0, n); }

// -- attacks ------------------------------------------------------------------------------

enum class AttackKind
{
  CrossReprogram,
  CrossRead,
  HwCorrupt,
};

inline std::string_view attack_name(AttackKind k)
{
  switch (k)
    {
    case AttackKind::CrossReprogram: return "cross_reprogram";
    case AttackKind::CrossRead: return "cross_read";
    case AttackKind::HwCorrupt: return "hw_corrupt";
    }
  return "?";
}

inline std::optional<AttackKind> parse_attack(std::string_view name)
{
  for (auto k : {AttackKind::CrossReprogram, AttackKind::CrossRead, AttackKind::HwCorrupt})
    if (attack_name(k) == name)
      return k;
  return std::nullopt;
}

struct AttackVerdict
{
  AttackKind kind = AttackKind::CrossRead;
  bool guard = false;
  std::string expected;
  std::string observed;
  bool pass = false;
  std::vector<std::string> details;

  std::string to_text() const
  {
    std::ostringstream os;
    os << "attack = " << attack_name(kind) << '\n';
    os << "guard = " << (guard ? "on" : "off") << '\n';
    os << "expected = " << expected << '\n';
    os << "observed = " << observed << '\n';
    for (const auto& d : details)
      os << "detail = " << d << '\n';
    os << "verdict = " << (pass ? "pass" : "fail") << '\n';
    return os.str();
  }
};

namespace detail
{

inline Errc status_of(const std::function<void()>& f)
{
  try
    {
      f();
    }
  catch (const Error& e)
    {
      return e.code();
    }
  return Errc::Ok;
}

} // namespace detail

/// Victim is VM 0, attacker VM 1, both on one broker with `guard` deciding
/// whether the device confines each region's kernel to its DDR share.
inline AttackVerdict run_attack(AttackKind kind, SystemConfig sys, bool guard, std::uint64_t seed,
                                std::uint32_t frame_bytes = 64 * KiB)
{
  if (sys.device.prr_count < 2)
    throw Error(Errc::ConfigError, "attack scenarios need at least two regions");
  sys.device.range_guard = guard;
  sys.validate();
  VmmService service(sys);
  InProcessTransport transport(service);
  GuestSession victim(transport, 0);
  GuestSession attacker(transport, 1);
  Runtime vrt(victim);
  Runtime art(attacker);
  const auto& dev = sys.device;

  AttackVerdict v;
  v.kind = kind;
  v.guard = guard;

  vrt.program(compile(KernelKind::VecAdd, dev, victim.prr(), frame_bytes));
  auto secret_buf = vrt.create_buffer(64 * KiB);
  auto secret = make_fill(Fill::Random, 0, secret_buf.size(), mix_seed(seed, 0xa77ac));
  vrt.write_buffer(secret_buf, 0, secret);

  switch (kind)
    {
    case AttackKind::CrossReprogram:
      {
        auto& device = service.vmm().device();
        auto before_gen = device.slot(victim.prr()).generation;
        auto before_kernel = device.slot(victim.prr()).kernel;
        auto rogue = compile(KernelKind::RogueWriter, dev, victim.prr(), frame_bytes);
        auto e = detail::status_of([&] { art.program(rogue); });
        service.vmm().sim().run();
        bool untouched = device.slot(victim.prr()).generation == before_gen
                         && device.slot(victim.prr()).kernel == before_kernel;
        v.expected = "PermissionDenied, victim region untouched";
        v.observed = std::string(errc_name(e)) + (untouched ? ", victim region untouched"
                                                            : ", victim region reconfigured");
        v.pass = e == Errc::PermissionDenied && untouched;
        break;
      }
    case AttackKind::CrossRead:
      {
        auto e_read = detail::status_of(
          [&] { attacker.client().read(secret_buf.address(), secret_buf.size()); });
        auto e_write = detail::status_of(
          [&] { attacker.client().write(secret_buf.address(), Bytes(16, 0xee)); });
        auto e_free = detail::status_of([&] { attacker.client().free(secret_buf.address()); });
        bool intact = vrt.read_buffer(secret_buf, 0, secret_buf.size()) == secret;
        v.details = {"read: " + std::string(errc_name(e_read)),
                     "write: " + std::string(errc_name(e_write)),
                     "free: " + std::string(errc_name(e_free))};
        v.expected = "PermissionDenied on read, write and free; victim data intact";
        bool all_denied = e_read == Errc::PermissionDenied && e_write == Errc::PermissionDenied
                          && e_free == Errc::PermissionDenied;
        v.observed = std::string(all_denied ? "PermissionDenied on read, write and free"
                                            : "some cross access allowed")
                     + (intact ? "; victim data intact" : "; victim data changed");
        v.pass = all_denied && intact;
        break;
      }
    case AttackKind::HwCorrupt:
      {
        art.program(compile(KernelKind::RogueWriter, dev, attacker.prr(), frame_bytes));
        std::uint64_t pattern = 0xdeadbeefcafef00dULL ^ seed;
        art.set_kernel_args({secret_buf.address(), 4096, pattern});
        art.launch();
        art.wait();
        auto status = art.last_status();
        bool corrupted = vrt.read_buffer(secret_buf, 0, secret_buf.size()) != secret;
        v.details = {"kernel status: " + std::string(errc_name(status)),
                     "victim buffer at 0x" + hex64(secret_buf.address())};
        if (guard)
          {
            v.expected = "GuardFault, victim data intact";
            v.pass = status == Errc::GuardFault && !corrupted;
          }
        else
          {
            v.expected = "victim data corrupted";
            v.pass = status == Errc::Ok && corrupted;
          }
        v.observed = std::string(corrupted ? "victim data corrupted" : "victim data intact")
                     + (status == Errc::Ok ? "" : ", " + std::string(errc_name(status)));
        if (guard && status == Errc::GuardFault)
          v.observed = "GuardFault, victim data " + std::string(corrupted ? "corrupted" : "intact");
        break;
      }
    }
  return v;
}

} // namespace vfpga::bench
