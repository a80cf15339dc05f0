// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vfpga/device.hpp"

using namespace vfpga;
using namespace std::chrono_literals;

namespace
{

DeviceConfig small_config(unsigned prrs = 4)
{
  DeviceConfig c;
  c.prr_count = prrs;
  c.ddr_size = 64 * MiB;
  return c;
}

Bytes bitfile(KernelKind k, unsigned prr, std::uint32_t frames = 0, std::uint32_t dev = 1,
              std::uint32_t shell = 7)
{ return encode_bitfile(default_descriptor(k), dev, shell, prr, frames); }

struct Fixture
{
  explicit Fixture(DeviceConfig c = small_config())
    : dev(sim, c)
  {
    dev.set_trace_sink([this](const DeviceEvent& e) { events.push_back(std::string(e.op)); });
  }

  void load(unsigned prr, KernelKind k)
  {
    dev.pr_reconfigure(prr, bitfile(k, prr));
    sim.run();
  }

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

  Simulator sim;
  Device dev;
  std::vector<std::string> events;
};

} // namespace

TEST(DeviceMemory, SparseReadsZeroAndDigestIgnoresZeroPages)
{
  DeviceMemory a(4 * MiB), b(4 * MiB);
  EXPECT_EQ(a.read(123, 16), Bytes(16, 0));
  EXPECT_EQ(a.digest(), b.digest());
  a.write(1 * MiB, Bytes(100, 0));  // zero write materializes nothing observable
  EXPECT_EQ(a.digest(), b.digest());
  Bytes data{1, 2, 3};
  a.write(DeviceMemory::kPageSize - 1, data);  // straddles a page boundary
  EXPECT_EQ(a.read(DeviceMemory::kPageSize - 1, 3), data);
  EXPECT_NE(a.digest(), b.digest());
  a.write(DeviceMemory::kPageSize - 1, Bytes(3, 0));
  EXPECT_EQ(a.digest(), b.digest());
}

TEST(DeviceMemory, OutOfRange)
{
  DeviceMemory m(1 * MiB);
  EXPECT_THROW(m.read(1 * MiB - 1, 2), Error);
  EXPECT_THROW(m.write(~0ULL, Bytes(2, 1)), Error);
}

TEST(PartialReconfiguration, ConfiguresFreezesThenReady)
{
  Fixture f;
  auto bits = bitfile(KernelKind::VecAdd, 0, 4 * MiB);
  EXPECT_EQ(f.dev.pr_reconfigure(0, bits), 0u);
  EXPECT_EQ(f.dev.slot(0).state, SlotState::Configuring);
  EXPECT_TRUE(f.dev.slot(0).frozen);
  EXPECT_TRUE(f.dev.pr_busy());
  EXPECT_EQ(f.dev.write_kernel_register(0, kRegControl, 1), RegAccess::Ignored);
  EXPECT_EQ(f.dev.read_kernel_register(0, kRegStatus).access, RegAccess::Ignored);
  f.sim.run();
  EXPECT_EQ(f.dev.slot(0).state, SlotState::Ready);
  EXPECT_FALSE(f.dev.slot(0).frozen);
  EXPECT_EQ(f.dev.slot(0).kernel->kind, KernelKind::VecAdd);
  // Duration is the image size over the PR bandwidth.
  EXPECT_EQ(f.sim.now(), transfer_time(bits.size(), CostModel{}.pr_bandwidth));
  EXPECT_GE(f.sim.now(), 100ms);
  EXPECT_EQ(std::count(f.events.begin(), f.events.end(), "dev.frozen_access"), 2);
  EXPECT_EQ(f.events.back(), "dev.pr_end");
}

TEST(PartialReconfiguration, WrongDeviceOrShellRejectedWithoutStateChange)
{
  Fixture f;
  auto gen = f.dev.slot(1).generation;
  EXPECT_EQ(f.status_of([&] { f.dev.pr_reconfigure(1, bitfile(KernelKind::VecAdd, 1, 0, 2, 7)); }),
            Errc::Incompatible);
  EXPECT_EQ(f.status_of([&] { f.dev.pr_reconfigure(1, bitfile(KernelKind::VecAdd, 1, 0, 1, 8)); }),
            Errc::Incompatible);
  EXPECT_EQ(f.dev.slot(1).state, SlotState::Empty);
  EXPECT_EQ(f.dev.slot(1).generation, gen);
  EXPECT_EQ(f.events.back(), "dev.pr_error");
}

TEST(PartialReconfiguration, CorruptFileRejected)
{
  Fixture f;
  auto bits = bitfile(KernelKind::VecAdd, 0);
  bits.back() ^= 1;
  EXPECT_EQ(f.status_of([&] { f.dev.pr_reconfigure(0, bits); }), Errc::CrcError);
  bits.pop_back();
  EXPECT_EQ(f.status_of([&] { f.dev.pr_reconfigure(0, bits); }), Errc::FormatError);
  EXPECT_EQ(f.dev.slot(0).state, SlotState::Empty);
}

// The control block trusts the region id baked into the file.
TEST(PartialReconfiguration, HeaderRegionWinsOverRequestedRegion)
{
  Fixture f;
  EXPECT_EQ(f.dev.pr_reconfigure(0, bitfile(KernelKind::Sobel, 2)), 2u);
  f.sim.run();
  EXPECT_EQ(f.dev.slot(2).state, SlotState::Ready);
  EXPECT_EQ(f.dev.slot(0).state, SlotState::Empty);
}

TEST(PartialReconfiguration, SingleControlBlockAndRunningSlotBusy)
{
  Fixture f;
  f.dev.pr_reconfigure(0, bitfile(KernelKind::VecAdd, 0));
  EXPECT_EQ(f.status_of([&] { f.dev.pr_reconfigure(1, bitfile(KernelKind::VecAdd, 1)); }),
            Errc::Busy);
  f.sim.run();
  f.dev.write_kernel_register(0, kRegArgBase + 3, 1'000'000);
  f.dev.write_kernel_register(0, kRegControl, 1);
  EXPECT_EQ(f.dev.slot(0).state, SlotState::Running);
  EXPECT_EQ(f.status_of([&] { f.dev.pr_reconfigure(0, bitfile(KernelKind::Matmul, 0)); }),
            Errc::Busy);
  EXPECT_EQ(f.status_of([&] { f.dev.pr_reconfigure(9, bitfile(KernelKind::Matmul, 0)); }),
            Errc::InvalidRegion);
  EXPECT_EQ(f.status_of([&] { f.dev.pr_reconfigure(0, bitfile(KernelKind::Matmul, 6)); }),
            Errc::InvalidRegion);
}

TEST(KernelRegisters, LaunchRunsKernelAndRaisesInterrupt)
{
  Fixture f;
  f.load(1, KernelKind::VecAdd);
  std::vector<std::uint32_t> a{1, 2, 3}, b{4, 5, 6};
  oracle::FlatPort scratch(24);
  scratch.put_words(0, a);
  scratch.put_words(12, b);
  f.dev.memory().write(0x1000, scratch.bytes);
  for (auto [reg, v] : {std::pair{0u, 0x1000u}, {1u, 0x100Cu}, {2u, 0x2000u}, {3u, 3u}})
    EXPECT_EQ(f.dev.write_kernel_register(1, kRegArgBase + reg, v), RegAccess::Ack);
  int msis = 0;
  f.dev.set_msi_handler([&] { ++msis; });
  f.dev.write_irq_mask(0);  // lines start masked
  auto start = f.sim.now();
  f.dev.write_kernel_register(1, kRegControl, 1);
  EXPECT_TRUE(f.dev.read_kernel_register(1, kRegStatus).value & status_bits::kRunning);
  f.sim.run();
  EXPECT_EQ(f.sim.now() - start, cycles_time(3, 200'000'000));
  auto st = f.dev.read_kernel_register(1, kRegStatus).value;
  EXPECT_TRUE(st & status_bits::kDone);
  EXPECT_TRUE(st & status_bits::kLoaded);
  EXPECT_FALSE(st & status_bits::kError);
  auto c = f.dev.memory().read(0x2000, 12);
  oracle::FlatPort out(12);
  out.bytes = c;
  EXPECT_EQ(out.get_words(0, 3), (std::vector<std::uint32_t>{5, 7, 9}));
  EXPECT_EQ(msis, 1);
  EXPECT_EQ(f.dev.read_irq_status(), 0b10u);
}

TEST(KernelRegisters, StartWithoutKernelDoesNothing)
{
  Fixture f;
  EXPECT_EQ(f.dev.write_kernel_register(0, kRegControl, 1), RegAccess::Ack);
  EXPECT_EQ(f.dev.slot(0).state, SlotState::Empty);
  EXPECT_TRUE(f.sim.empty());
  EXPECT_EQ(f.dev.read_kernel_register(0, kRegStatus).value, 0u);
}

TEST(KernelRegisters, IndexOutOfRange)
{
  Fixture f;
  EXPECT_EQ(f.status_of([&] { f.dev.write_kernel_register(0, kRegisterCount, 1); }),
            Errc::InvalidRegion);
  EXPECT_EQ(f.status_of([&] { f.dev.read_kernel_register(4, 0); }), Errc::InvalidRegion);
}

TEST(KernelRegisters, PerRegionClock)
{
  auto c = small_config(2);
  c.prr_clock_hz = {200'000'000, 100'000'000};
  Fixture f(c);
  f.load(1, KernelKind::VecAdd);
  f.dev.write_kernel_register(1, kRegArgBase + 3, 1000);
  auto t0 = f.sim.now();
  f.dev.write_kernel_register(1, kRegControl, 1);
  f.sim.run();
  EXPECT_EQ(f.sim.now() - t0, cycles_time(1000, 100'000'000));
}

TEST(IrqBank, MaskedRaiseLatchesWithoutMsiUntilUnmasked)
{
  IrqBank bank(4);
  EXPECT_EQ(bank.mask(), 0xfu);
  EXPECT_FALSE(bank.raise(2));
  EXPECT_EQ(bank.status(), 0b100u);
  EXPECT_TRUE(bank.write_mask(0));
  EXPECT_TRUE(bank.msi_pending());
  EXPECT_FALSE(bank.raise(1));  // coalesced into the pending MSI
  bank.msi_delivered();
  bank.ack(2);
  bank.ack(1);
  EXPECT_EQ(bank.status(), 0u);
  EXPECT_EQ(bank.msi_count(), 1u);
}

// Property: the bank and the reference automaton agree on status and MSI
// count over random raise/mask/deliver/ack sequences.
TEST(IrqBank, PropertyMatchesAutomaton)
{
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial)
    {
      IrqBank bank(4);
      oracle::IrqAutomaton ref(4);
      for (int step = 0; step < 60; ++step)
        {
          switch (rng() % 3)
            {
            case 0:
              {
                unsigned line = rng() % 4;
                bank.raise(line);
                ref.raise(line);
                break;
              }
            case 1:
              {
                auto m = static_cast<std::uint32_t>(rng() % 16);
                bank.write_mask(m);
                ref.set_mask(m);
                break;
              }
            default:
              if (bank.msi_pending())
                {
                  bank.msi_delivered();
                  auto sources = bank.status() & ~bank.mask();
                  for (unsigned l = 0; l < 4; ++l)
                    if ((sources >> l) & 1)
                      bank.ack(l);
                  ref.deliver();
                }
            }
          ASSERT_EQ(bank.status(), ref.status());
          ASSERT_EQ(bank.msi_count(), ref.msi_count());
        }
    }
}

TEST(Dma, TimingSerializesOnOneEngine)
{
  Fixture f;
  auto w1 = f.dev.dma_transfer(DmaDirection::HostToDevice, Bytes(4096, 1), 0, 4096);
  auto w2 = f.dev.dma_transfer(DmaDirection::HostToDevice, Bytes(4096, 2), 4096, 4096);
  CostModel c;
  EXPECT_EQ(w1.start, Duration(0));
  EXPECT_EQ(w1.end, c.dma_latency + transfer_time(4096, c.dma_bandwidth));
  EXPECT_EQ(w2.start, w1.end);
  EXPECT_EQ(f.dev.dma_free_at(), w2.end);
  // Data lands only at completion.
  EXPECT_EQ(f.dev.memory().read(0, 1)[0], 0);
  Bytes readback;
  f.dev.dma_transfer(DmaDirection::DeviceToHost, {}, 4095, 2, [&](Bytes b) { readback = b; });
  f.sim.run();
  EXPECT_EQ(readback, (Bytes{1, 2}));
}

TEST(Dma, FaultsAndSizeMismatch)
{
  Fixture f;
  EXPECT_EQ(f.status_of([&] {
              f.dev.dma_transfer(DmaDirection::DeviceToHost, {}, 64 * MiB - 1, 2);
            }),
            Errc::DmaFault);
  EXPECT_EQ(f.events.back(), "dev.dma_fault");
  EXPECT_EQ(f.status_of([&] { f.dev.dma_transfer(DmaDirection::HostToDevice, Bytes(3), 0, 4); }),
            Errc::InvalidSize);
}

TEST(Guard, PartitionsAndFaults)
{
  auto c = small_config(4);
  c.range_guard = true;
  Fixture f(c);
  EXPECT_TRUE(f.dev.guard_enabled());
  auto [b1, l1] = f.dev.guard_range(1);
  EXPECT_EQ(b1, 16 * MiB);
  EXPECT_EQ(l1, 32 * MiB);
  EXPECT_NO_THROW(f.dev.kernel_write(1, 16 * MiB, Bytes(16, 1)));
  EXPECT_NO_THROW(f.dev.kernel_write(1, 32 * MiB - 16, Bytes(16, 1)));
  EXPECT_EQ(f.status_of([&] { f.dev.kernel_write(1, 32 * MiB - 15, Bytes(16, 1)); }),
            Errc::GuardFault);
  EXPECT_EQ(f.status_of([&] { f.dev.kernel_read(1, 0, 1); }), Errc::GuardFault);
  f.dev.enable_guard(false);
  EXPECT_NO_THROW(f.dev.kernel_read(1, 0, 1));
}

TEST(Guard, RogueWriterBlockedOrNot)
{
  for (bool guard : {false, true})
    {
      auto c = small_config(2);
      c.range_guard = guard;
      Fixture f(c);
      f.load(1, KernelKind::RogueWriter);
      f.dev.memory().write(0, Bytes(64, 0xAA));
      f.dev.write_kernel_register(1, kRegArgBase + 0, 0);
      f.dev.write_kernel_register(1, kRegArgBase + 1, 64);
      f.dev.write_kernel_register(1, kRegArgBase + 2, 0x0101010101010101ULL);
      f.dev.write_kernel_register(1, kRegControl, 1);
      f.sim.run();
      auto now = f.dev.memory().read(0, 64);
      if (guard)
        {
          EXPECT_EQ(now, Bytes(64, 0xAA));
          EXPECT_EQ(f.dev.slot(1).last_status, Errc::GuardFault);
          EXPECT_TRUE(f.dev.read_kernel_register(1, kRegStatus).value & status_bits::kError);
        }
      else
        {
          EXPECT_EQ(now, Bytes(64, 0x01));
          EXPECT_EQ(f.dev.slot(1).last_status, Errc::Ok);
        }
    }
}

TEST(Scrub, DropsKernelAndSuppressesStaleCompletion)
{
  Fixture f;
  f.load(0, KernelKind::VecAdd);
  f.dev.write_kernel_register(0, kRegArgBase + 3, 1000);
  f.dev.write_kernel_register(0, kRegControl, 1);
  f.dev.scrub(0);
  f.sim.run();
  EXPECT_EQ(f.dev.slot(0).state, SlotState::Empty);
  EXPECT_EQ(f.dev.read_irq_status(), 0u);
  EXPECT_EQ(std::count(f.events.begin(), f.events.end(), "dev.kernel_done"), 0);
  f.dev.pr_reconfigure(1, bitfile(KernelKind::VecAdd, 1));
  EXPECT_THROW(f.dev.scrub(1), Error);
}

TEST(Device, ConfigValidation)
{
  Simulator sim;
  auto c = small_config();
  c.prr_count = 9;
  EXPECT_THROW(Device(sim, c), Error);
  c = small_config();
  c.cost.dma_bandwidth = 0;
  EXPECT_THROW(Device(sim, c), Error);
  c = small_config(2);
  c.prr_clock_hz = {1};
  EXPECT_THROW(Device(sim, c), Error);
}
