// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every check compares the library against the independent
// models in oracles.hpp or against fixed thresholds; nothing here reuses
// library code to compute an expected value.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vfpga/vfpga.hpp"

using namespace vfpga;
using namespace std::chrono_literals;

namespace
{

struct Outcome
{
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{ return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string config_path(const std::string& name)
{ return std::string(VFPGA_CONFIG_DIR) + "/" + name; }

Errc status_of(const std::function<void()>& f)
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

Bytes to_bytes(const std::vector<std::uint32_t>& w)
{
  Bytes out(w.size() * 4);
  for (std::size_t i = 0; i < w.size(); ++i)
    for (int b = 0; b < 4; ++b)
      out[4 * i + b] = static_cast<std::uint8_t>(w[i] >> (8 * b));
  return out;
}

std::vector<std::uint32_t> to_words(const Bytes& b, std::size_t offset, std::size_t n)
{
  std::vector<std::uint32_t> out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 4; ++k)
      out[i] |= std::uint32_t(b[offset + 4 * i + k]) << (8 * k);
  return out;
}

// -- 1 ------------------------------------------------------------------------

template <typename Backend>
bool allocator_matches(std::uint64_t seed, std::string& why)
{
  constexpr std::uint64_t seg = 1 * MiB;
  constexpr std::size_t nseg = 64;
  SegmentPool<Backend> pool(nseg * seg, seg);
  oracle::FirstFit ref(nseg);
  std::mt19937_64 rng(seed);
  std::vector<MemHandle> live;
  for (int op = 0; op < 10'000; ++op)
    {
      if (live.empty() || rng() % 100 < 55)
        {
          auto owner = static_cast<VmId>(rng() % 4);
          auto size = 1 + rng() % (6 * seg);
          auto count = (size + seg - 1) / seg;
          auto want = ref.allocate(owner, count);
          std::optional<MemHandle> got;
          try
            {
              got = pool.allocate(owner, size);
            }
          catch (const Error& e)
            {
              if (e.code() != Errc::OutOfDeviceMemory)
                {
                  why = "unexpected error " + std::string(errc_name(e.code()));
                  return false;
                }
            }
          if (got.has_value() != want.has_value() || (got && got->first_index != *want))
            {
              why = "placement differs at op " + std::to_string(op);
              return false;
            }
          if (got)
            live.push_back(*got);
        }
      else
        {
          auto i = rng() % live.size();
          pool.free(live[i]);
          ref.release(live[i].first_index, live[i].count);
          live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
        }
      if (pool.marks() != ref.marks())
        {
          why = "segment map differs at op " + std::to_string(op);
          return false;
        }
      for (std::size_t s = 0; s < nseg; ++s)
        if (pool.owner_of(s * seg) != ref.owner(s))
          {
            why = "owner differs at op " + std::to_string(op);
            return false;
          }
    }
  return true;
}

Outcome criterion_allocator()
{
  auto t0 = Clock::now();
  std::string why;
  bool ok = allocator_matches<mmu::BitmapBackend>(101, why)
            && allocator_matches<mmu::FreeListBackend>(101, why);
  auto secs = seconds_since(t0) / 2;
  std::ostringstream os;
  os << "10000 ops x 2 backends, " << secs << " s per backend";
  if (!why.empty())
    os << ", " << why;
  return {ok && secs < 5.0, os.str()};
}

// -- 2 ------------------------------------------------------------------------

struct Tenant
{
  std::unique_ptr<GuestSession> session;
  std::unique_ptr<Runtime> runtime;
  struct Buf
  {
    GuestBuffer buf;
    Bytes shadow;
  };
  std::vector<Buf> bufs;
};

Outcome criterion_isolation()
{
  constexpr int kScenarios = 120;
  std::mt19937_64 rng(202);
  std::uint64_t attempts = 0, denied = 0, byte_violations = 0, kernels_run = 0;
  std::string first_problem;
  for (int sc = 0; sc < kScenarios; ++sc)
    {
      SystemConfig sys;
      sys.device.prr_count = 4;
      sys.device.ddr_size = 64 * MiB;
      VmmService svc(sys);
      InProcessTransport t(svc);
      auto nvm = oracle::uniform(rng, 2, 4);
      std::vector<Tenant> vms(nvm);
      for (std::size_t v = 0; v < nvm; ++v)
        {
          vms[v].session = std::make_unique<GuestSession>(t, static_cast<VmId>(v));
          vms[v].runtime = std::make_unique<Runtime>(*vms[v].session);
          vms[v].runtime->program(
            encode_bitfile(default_descriptor(KernelKind::VecAdd), sys.device.device_id,
                           sys.device.shell_id, vms[v].session->prr(), 4 * KiB));
        }
      auto& memory = svc.vmm().device().memory();

      for (int op = 0; op < 40; ++op)
        {
          auto v = oracle::uniform(rng, 0, nvm - 1);
          auto& me = vms[v];
          auto& rt = *me.runtime;
          auto kind = rng() % 10;
          if (kind <= 1 || me.bufs.empty())
            {
              auto size = 1 + rng() % (64 * KiB);
              try
                {
                  auto b = rt.create_buffer(size);
                  auto data = oracle::random_bytes(rng, size);
                  rt.write_buffer(b, 0, data);
                  me.bufs.push_back({b, data});
                }
              catch (const Error& e)
                {
                  if (e.code() != Errc::OutOfDeviceMemory)
                    throw;
                }
            }
          else if (kind <= 3)
            {
              auto& b = me.bufs[rng() % me.bufs.size()];
              auto off = oracle::uniform(rng, 0, b.shadow.size() - 1);
              auto len = oracle::uniform(rng, 1, b.shadow.size() - off);
              auto data = oracle::random_bytes(rng, len);
              rt.write_buffer(b.buf, off, data);
              std::copy(data.begin(), data.end(), b.shadow.begin() + static_cast<std::ptrdiff_t>(off));
            }
          else if (kind == 4)
            {
              auto& b = me.bufs[rng() % me.bufs.size()];
              auto off = oracle::uniform(rng, 0, b.shadow.size() - 1);
              auto len = oracle::uniform(rng, 1, b.shadow.size() - off);
              auto got = rt.read_buffer(b.buf, off, len);
              if (!std::equal(got.begin(), got.end(), b.shadow.begin() + static_cast<std::ptrdiff_t>(off)))
                {
                  ++byte_violations;
                  if (first_problem.empty())
                    first_problem = "own read mismatch";
                }
            }
          else if (kind == 5)
            {
              auto i = rng() % me.bufs.size();
              rt.release_buffer(me.bufs[i].buf);
              me.bufs.erase(me.bufs.begin() + static_cast<std::ptrdiff_t>(i));
            }
          else if (kind == 6)
            {
              auto& b = me.bufs[rng() % me.bufs.size()];
              auto n = b.shadow.size() / 12;
              if (n == 0)
                continue;
              auto addr = b.buf.address();
              rt.set_kernel_args({addr, addr + 4 * n, addr + 8 * n, n});
              rt.launch();
              rt.wait();
              ++kernels_run;
              auto sum = oracle::vec_add(to_words(b.shadow, 0, n), to_words(b.shadow, 4 * n, n));
              auto bytes = to_bytes(sum);
              std::copy(bytes.begin(), bytes.end(), b.shadow.begin() + static_cast<std::ptrdiff_t>(8 * n));
            }
          else
            {
              // Injected cross-tenant request against a random victim.
              auto w = oracle::uniform(rng, 0, nvm - 2);
              if (w >= v)
                ++w;
              auto& victim = vms[w];
              auto& client = me.session->client();
              Errc e = Errc::Ok;
              auto which = rng() % 4;
              if (which == 3 || victim.bufs.empty())
                e = status_of([&] {
                  client.reprogram(encode_bitfile(default_descriptor(KernelKind::RogueWriter),
                                                  sys.device.device_id, sys.device.shell_id,
                                                  victim.session->prr(), 4 * KiB));
                });
              else
                {
                  auto& vb = victim.bufs[rng() % victim.bufs.size()];
                  auto off = oracle::uniform(rng, 0, vb.shadow.size() - 1);
                  if (which == 0)
                    e = status_of([&] { client.read(vb.buf.address() + off, 1); });
                  else if (which == 1)
                    e = status_of([&] { client.write(vb.buf.address() + off, Bytes{0x5a}); });
                  else
                    e = status_of([&] { client.free(vb.buf.address()); });
                }
              ++attempts;
              if (e == Errc::PermissionDenied)
                ++denied;
              else if (first_problem.empty())
                first_problem = "cross request returned " + std::string(errc_name(e));
            }

          // Every live buffer of every tenant must hold exactly its shadow.
          for (auto& tenant : vms)
            for (auto& b : tenant.bufs)
              if (memory.read(b.buf.address(), b.shadow.size()) != b.shadow)
                {
                  ++byte_violations;
                  if (first_problem.empty())
                    first_problem = "buffer contents diverged in scenario " + std::to_string(sc);
                }
        }
    }
  std::ostringstream os;
  os << kScenarios << " scenarios, " << attempts << " cross requests, " << denied
     << " denied, " << byte_violations << " byte violations, " << kernels_run << " kernels";
  if (!first_problem.empty())
    os << ", " << first_problem;
  return {attempts > 0 && denied == attempts && byte_violations == 0, os.str()};
}

// -- 3 ------------------------------------------------------------------------

Outcome criterion_hw_corrupt()
{
  auto sys = load_scenario(config_path("attack.ini")).system;
  int trials = 0, passed = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed)
    for (bool guard : {false, true})
      {
        ++trials;
        if (bench::run_attack(bench::AttackKind::HwCorrupt, sys, guard, seed).pass)
          ++passed;
      }
  return {passed == trials, std::to_string(passed) + "/" + std::to_string(trials)
                              + " trials (corrupted with guard off, GuardFault with guard on)"};
}

// -- 4 ------------------------------------------------------------------------

Outcome criterion_irq_demux()
{
  auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  constexpr int kSchedules = 1000;
  std::uint64_t completions = 0, collisions = 0;
  std::string problem;
  for (int sched = 0; sched < kSchedules && problem.empty(); ++sched)
    {
      SystemConfig sys;
      sys.device.prr_count = 4;
      sys.device.ddr_size = 64 * MiB;
      Vmm vmm(sys);
      std::vector<MemHandle> bufs;
      std::vector<int> remaining(4), launched(4, 0), irqs(4, 0);
      for (VmId v = 0; v < 4; ++v)
        {
          vmm.attach_vm(v);
          vmm.handle_reprogram(
            v, 1, encode_bitfile(default_descriptor(KernelKind::VecAdd), 1, 7, v, 0));
          bufs.push_back(vmm.handle_alloc(v, 2, 1 * MiB));
          remaining[v] = static_cast<int>(oracle::uniform(rng, 1, 6));
        }
      vmm.sim().run();
      vmm.drain_all();
      auto start = [&](VmId v) {
        auto n = oracle::uniform(rng, 1, 4) * 100;  // coarse sizes make completions coincide
        auto a = bufs[v].base_addr;
        vmm.reg_write(v, kRegArgBase + 0, a);
        vmm.reg_write(v, kRegArgBase + 1, a + 4 * n);
        vmm.reg_write(v, kRegArgBase + 2, a + 8 * n);
        vmm.reg_write(v, kRegArgBase + 3, n);
        vmm.reg_write(v, kRegControl, 1);
        ++launched[v];
        --remaining[v];
      };
      for (VmId v = 0; v < 4; ++v)
        start(v);
      auto trace_from = vmm.trace().size();
      while (vmm.sim().step())
        for (VmId v = 0; v < 4; ++v)
          for (const auto& n : vmm.drain(v))
            if (n.kind == Notification::Kind::Irq)
              {
                ++irqs[v];
                if (remaining[v] > 0)
                  start(v);
              }

      // Feed the device's own event order through the reference automaton.
      oracle::IrqAutomaton model(4);
      model.set_mask(0);
      std::vector<std::uint64_t> model_dispatch(4, 0);
      std::uint64_t msis = 0;
      const auto& events = vmm.trace().events();
      for (std::size_t i = trace_from; i < events.size(); ++i)
        {
          const auto& e = events[i];
          if (e.op == "dev.kernel_done" && e.vm)
            model.raise(*e.vm);
          else if (e.op == "dev.msi")
            {
              ++msis;
              auto lines = model.deliver();
              if (lines.size() > 1)
                ++collisions;
              for (auto l : lines)
                ++model_dispatch[l];
            }
        }
      for (VmId v = 0; v < 4; ++v)
        {
          completions += static_cast<std::uint64_t>(launched[v]);
          if (irqs[v] != launched[v])
            problem = "vm " + std::to_string(v) + " saw " + std::to_string(irqs[v])
                      + " interrupts for " + std::to_string(launched[v]) + " completions";
          else if (model_dispatch[v] != static_cast<std::uint64_t>(irqs[v]))
            problem = "reference dispatched " + std::to_string(model_dispatch[v]) + " to vm "
                      + std::to_string(v) + ", broker " + std::to_string(irqs[v]);
        }
      if (problem.empty() && msis != model.msi_count())
        problem = "MSI count " + std::to_string(msis) + " vs reference "
                  + std::to_string(model.msi_count());
      if (problem.empty() && model.status() != 0)
        problem = "reference left lines latched";
    }
  auto secs = seconds_since(t0);
  std::ostringstream os;
  os << kSchedules << " schedules, " << completions << " completions, " << collisions
     << " shared-MSI collisions, " << secs << " s";
  if (!problem.empty())
    os << ", " << problem;
  return {problem.empty() && collisions > 0 && secs < 10.0, os.str()};
}

// -- 5 ------------------------------------------------------------------------

Outcome criterion_bitfile()
{
  std::mt19937_64 rng(505);
  int roundtrips = 0;
  for (int i = 0; i < 1000; ++i)
    {
      KernelDescriptor d;
      d.kind = static_cast<KernelKind>(1 + rng() % 4);
      d.static_cycles_per_item = static_cast<std::uint32_t>(rng());
      for (auto k = rng() % (kArgSlots + 1); k > 0; --k)
        {
          ParamSlot p;
          for (auto c = rng() % 10; c > 0; --c)
            p.name.push_back(static_cast<char>('a' + rng() % 26));
          p.width = static_cast<std::uint8_t>(rng() % 65);
          d.param_schema.push_back(p);
        }
      auto dev = static_cast<std::uint32_t>(rng()), shell = static_cast<std::uint32_t>(rng());
      unsigned prr = rng() % 256;
      auto pb = decode_bitfile(encode_bitfile(d, dev, shell, prr, rng() % 512));
      if (pb.kernel == d && pb.header.device_id == dev && pb.header.shell_id == shell
          && pb.header.prr_id == prr)
        ++roundtrips;
    }

  int detected = 0;
  auto clean = encode_bitfile(default_descriptor(KernelKind::Matmul), 1, 7, 2, 1024);
  for (int i = 0; i < 1000; ++i)
    {
      auto c = clean;
      auto bit = kBitfileHeaderSize * 8 + rng() % ((c.size() - kBitfileHeaderSize) * 8);
      c[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      if (status_of([&] { decode_bitfile(c); }) == Errc::CrcError)
        ++detected;
    }

  // The check sees only device and shell ids, so its verdict cannot move
  // with the region field.
  bool independent = true;
  for (std::uint32_t dev : {1u, 2u})
    for (std::uint32_t shell : {7u, 8u})
      {
        std::optional<bool> verdict;
        for (unsigned prr = 0; prr < 256; ++prr)
          {
            auto pb = decode_bitfile(encode_bitfile(default_descriptor(KernelKind::VecAdd), dev,
                                                    shell, prr));
            bool ok = cb_compatibility_check(pb, 1, 7);
            if (verdict && *verdict != ok)
              independent = false;
            verdict = ok;
          }
      }

  std::ostringstream os;
  os << roundtrips << "/1000 round trips, " << detected << "/1000 bit flips detected, verdict "
     << (independent ? "independent of" : "depends on") << " region id over 0..255";
  return {roundtrips == 1000 && detected == 1000 && independent, os.str()};
}

// -- 6 ------------------------------------------------------------------------

kernels::ArgArray args_of(std::initializer_list<std::uint64_t> v)
{
  kernels::ArgArray a{};
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

Outcome criterion_kernels()
{
  std::mt19937_64 rng(606);
  int ok_add = 0, ok_mm = 0, ok_sobel = 0;
  for (int i = 0; i < 500; ++i)
    {
      auto n = oracle::uniform(rng, 0, 4096);
      auto a = oracle::random_words(rng, n), b = oracle::random_words(rng, n);
      oracle::FlatPort port(12 * n + 4);
      port.put_words(0, a);
      port.put_words(4 * n, b);
      if (kernels::execute(default_descriptor(KernelKind::VecAdd), args_of({0, 4 * n, 8 * n, n}),
                           port)
            == Errc::Ok
          && port.get_words(8 * n, n) == oracle::vec_add(a, b))
        ++ok_add;
    }
  for (int i = 0; i < 500; ++i)
    {
      auto n = oracle::uniform(rng, 1, 16), m = oracle::uniform(rng, 1, 16),
           k = oracle::uniform(rng, 1, 16);
      auto a = oracle::random_words(rng, n * m), b = oracle::random_words(rng, m * k);
      oracle::FlatPort port(3 * 1024 + 16);
      port.put_words(0, a);
      port.put_words(1024, b);
      if (kernels::execute(default_descriptor(KernelKind::Matmul),
                           args_of({0, 1024, 2048, n, m, k}), port)
            == Errc::Ok
          && port.get_words(2048, n * k) == oracle::matmul(a, b, n, m, k))
        ++ok_mm;
    }
  for (int i = 0; i < 500; ++i)
    {
      auto w = oracle::uniform(rng, 3, 64), h = oracle::uniform(rng, 3, 64);
      auto src = oracle::random_bytes(rng, w * h);
      oracle::FlatPort port(2 * w * h);
      std::copy(src.begin(), src.end(), port.bytes.begin());
      if (kernels::execute(default_descriptor(KernelKind::Sobel), args_of({0, w * h, w, h}), port)
            == Errc::Ok
          && std::equal(port.bytes.begin() + static_cast<std::ptrdiff_t>(w * h), port.bytes.end(),
                        oracle::sobel(src, w, h).begin()))
        ++ok_sobel;
    }
  std::ostringstream os;
  os << "vec_add " << ok_add << "/500, matmul " << ok_mm << "/500, sobel " << ok_sobel << "/500";
  return {ok_add == 500 && ok_mm == 500 && ok_sobel == 500, os.str()};
}

// -- 7 ------------------------------------------------------------------------

Outcome criterion_multiplexing()
{
  auto base = load_scenario(config_path("multiplex.ini"));
  bool all = base.system.device.cost.full_reconfig_time == 2500ms
             && base.system.device.cost.pr_bandwidth == CostModel{}.pr_bandwidth;
  std::ostringstream os;
  os << "full reconfig " << bench::format_seconds(base.system.device.cost.full_reconfig_time)
     << " s";
  for (unsigned n : {2u, 3u, 4u})
    {
      auto r = bench::check_multiplexing(base, n);
      // Recompute the serialized bound here from its definition.
      auto serialized = (r.single_makespan - r.single_reconfig
                         + base.system.device.cost.full_reconfig_time)
                        * static_cast<std::int64_t>(n);
      bool win = r.shared_makespan < serialized && serialized == r.serialized_makespan;
      all = all && win;
      os << "; N=" << n << " shared " << bench::format_seconds(r.shared_makespan) << " s vs "
         << bench::format_seconds(serialized) << " s " << (win ? "win" : "LOSS");
    }
  return {all, os.str()};
}

// -- 8 ------------------------------------------------------------------------

Outcome criterion_calibration()
{
  auto cfg = load_scenario(config_path("calibration.ini"));
  auto rep = bench::run_scenario(cfg, bench::RunMode::InProcess, false).report;
  double total = static_cast<double>(rep.total.count());
  double sum = 0;
  for (std::size_t i = 0; i < kPhaseCount; ++i)
    sum += static_cast<double>(rep.components[i].count());
  double rel = total == 0 ? 1.0 : std::abs(sum - total) / total;
  double sw = total == 0 ? 0.0 : static_cast<double>(rep.component(Phase::Software).count()) / total;
  bool single_vec_add = cfg.vms.size() == 1 && !cfg.vms[0].ops.empty()
                        && cfg.vms[0].ops[0].kernel == KernelKind::VecAdd;
  std::ostringstream os;
  os << "software share " << sw << " (window 0.45..0.65), component sum relative error " << rel
     << ", total " << bench::format_seconds(rep.total) << " s";
  return {single_vec_add && sw >= 0.45 && sw <= 0.65 && rel <= 1e-9, os.str()};
}

// -- 9 ------------------------------------------------------------------------

ScenarioConfig random_scenario(std::mt19937_64& rng)
{
  ScenarioConfig cfg;
  cfg.seed = rng();
  cfg.bitfile_frame_bytes = static_cast<std::uint32_t>(oracle::uniform(rng, 1, 64) * KiB);
  cfg.system.device.prr_count = 4;
  cfg.system.device.ddr_size = 256 * MiB;
  cfg.system.device.range_guard = rng() % 2;
  auto nvm = oracle::uniform(rng, 1, 4);
  int line = 1;
  for (std::size_t v = 0; v < nvm; ++v)
    {
      VmScript s;
      s.vm = static_cast<VmId>(v);
      auto op = [&](OpKind k) {
        ScriptOp o;
        o.kind = k;
        o.line = line++;
        return o;
      };
      auto kernel = static_cast<KernelKind>(1 + rng() % 3);
      auto rp = op(OpKind::Reprogram);
      rp.kernel = kernel;
      s.ops.push_back(rp);
      std::uint64_t n = oracle::uniform(rng, 1, 4096);
      std::uint64_t bytes = 0;
      std::vector<LaunchArg> largs;
      switch (kernel)
        {
        case KernelKind::VecAdd:
          bytes = 4 * n;
          largs = {std::string("a"), std::string("b"), std::string("c"), n};
          break;
        case KernelKind::Matmul:
          n = oracle::uniform(rng, 1, 32);
          bytes = 4 * n * n;
          largs = {std::string("a"), std::string("b"), std::string("c"), n, n, n};
          break;
        default:
          n = oracle::uniform(rng, 3, 64);
          bytes = n * n;
          largs = {std::string("a"), std::string("c"), n, n};
          break;
        }
      for (const char* name : {"a", "b", "c"})
        {
          auto al = op(OpKind::Alloc);
          al.buffer = name;
          al.size = bytes;
          s.ops.push_back(al);
        }
      for (const char* name : {"a", "b"})
        {
          auto wr = op(OpKind::Write);
          wr.buffer = name;
          wr.fill = rng() % 2 ? Fill::Random : Fill::Iota;
          s.ops.push_back(wr);
        }
      if (rng() % 2)
        {
          auto sl = op(OpKind::Sleep);
          sl.sleep = Duration(static_cast<std::int64_t>(oracle::uniform(rng, 1, 500)) * 1'000'000);
          s.ops.push_back(sl);
        }
      for (auto reps = oracle::uniform(rng, 1, 2); reps > 0; --reps)
        {
          auto la = op(OpKind::Launch);
          la.args = largs;
          s.ops.push_back(la);
          s.ops.push_back(op(OpKind::Wait));
        }
      auto rd = op(OpKind::Read);
      rd.buffer = "c";
      s.ops.push_back(rd);
      if (rng() % 2)
        for (const char* name : {"a", "b", "c"})
          {
            auto fr = op(OpKind::Free);
            fr.buffer = name;
            s.ops.push_back(fr);
          }
      cfg.vms.push_back(std::move(s));
    }
  cfg.validate();
  return cfg;
}

Outcome criterion_replay()
{
  std::mt19937_64 rng(909);
  int matched = 0, runs = 0;
  std::string problem;
  for (int i = 0; i < 20; ++i)
    {
      auto cfg = random_scenario(rng);
      for (auto mode : {bench::RunMode::InProcess, bench::RunMode::Wire})
        {
          ++runs;
          auto out = bench::run_once(cfg, mode);
          auto rep = replay(out.trace, cfg.system);
          if (rep.digest == out.report.digest && rep.final_time == out.final_time)
            ++matched;
          else if (problem.empty())
            problem = "scenario " + std::to_string(i) + " diverged on replay";
        }
    }
  std::ostringstream os;
  os << matched << "/" << runs << " runs replayed bit-identically (20 scenarios x in-process, wire)";
  if (!problem.empty())
    os << ", " << problem;
  return {matched == runs, os.str()};
}

// -- 10 -----------------------------------------------------------------------

Outcome criterion_microbench()
{
  DeviceConfig dev;
  bool freq_ok = true;
  std::ostringstream os;
  for (const auto& p : bench::microbench_freq(dev))
    if (std::abs(p.hz() - 200e6) > 1e-6 * 200e6)
      freq_ok = false;
  auto samples = bench::microbench_pcie(dev, {4 * KiB, 256 * MiB});
  const double configured = 6e9;
  double big = samples[1].rate / configured, small = samples[0].rate / configured;
  bool big_ok = std::abs(big - 1.0) <= 0.01;
  bool small_ok = samples[0].rate < configured && samples[0].rate < samples[1].rate;
  os << "freq " << (freq_ok ? "200 MHz on every region" : "off target") << ", 256 MiB at "
     << big << " of configured, 4 KiB at " << small;
  return {freq_ok && big_ok && small_ok, os.str()};
}

} // namespace

int main()
{
  struct Entry
  {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Entry entries[] = {
    {1, "allocator matches brute-force first fit", criterion_allocator},
    {2, "randomized multi-tenant isolation", criterion_isolation},
    {3, "kernel DDR corruption with and without guard", criterion_hw_corrupt},
    {4, "interrupt demultiplexing exactly once", criterion_irq_demux},
    {5, "bitfile round trip, corruption, region-blind check", criterion_bitfile},
    {6, "kernels match reference implementations", criterion_kernels},
    {7, "region sharing beats full-device turns", criterion_multiplexing},
    {8, "calibrated overhead breakdown", criterion_calibration},
    {9, "trace replay determinism", criterion_replay},
    {10, "microbenchmark sanity", criterion_microbench},
  };
  int failures = 0;
  for (const auto& e : entries)
    {
      Outcome o;
      try
        {
          o = e.run();
        }
      catch (const std::exception& ex)
        {
          o = {false, std::string("exception: ") + ex.what()};
        }
      if (!o.pass)
        ++failures;
      std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << e.id << ": " << e.name << " ("
                << o.detail << ")" << std::endl;
    }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
