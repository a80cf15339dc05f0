// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vfpga/client.hpp"

namespace vfpga
{

/// A VM's attachment to the broker. Owns the client stub and routes
/// incoming notifications to the registered handlers, on the calling
/// thread, one at a time.
class GuestSession
{
public:
  using Handler = std::function<void(const Notification&)>;

  GuestSession(Transport& transport, VmId vm)
    : client_(transport)
  {
    client_.set_sink([this](const Notification& n) { deliver(n); });
    client_.attach(vm);
  }

  ~GuestSession()
  {
    if (client_.attached())
      try
        {
          client_.detach();
        }
      catch (const Error&)
        {
          // Broker already gone; nothing left to release from here.
        }
  }

  GuestSession(const GuestSession&) = delete;
  GuestSession& operator=(const GuestSession&) = delete;

  VmmClient& client()
  { return client_; }

  VmId vm() const
  { return *client_.vm(); }

  unsigned prr() const
  { return client_.prr(); }

  void set_irq_handler(Handler h)
  { irq_handler_ = std::move(h); }

  void set_status_handler(Handler h)
  { status_handler_ = std::move(h); }

  std::uint64_t irqs_seen() const
  { return irqs_; }

  const Notification* last_irq() const
  { return last_irq_ ? &*last_irq_ : nullptr; }

  void detach()
  { client_.detach(); }

private:
  void deliver(const Notification& n)
  {
    if (n.kind == Notification::Kind::Irq)
      {
        ++irqs_;
        last_irq_ = n;
        if (irq_handler_)
          irq_handler_(n);
      }
    else if (status_handler_)
      status_handler_(n);
  }

  VmmClient client_;
  Handler irq_handler_;
  Handler status_handler_;
  std::uint64_t irqs_ = 0;
  std::optional<Notification> last_irq_;
};

enum class MmdKind : std::uint8_t
{
  PassThrough,
  Forwarded,
};

struct MmdInterface
{
  std::string name;
  std::uint32_t handle = 0;
  MmdKind kind = MmdKind::Forwarded;
};

inline constexpr std::string_view kKernelCra = "kernel-cra";
inline constexpr std::string_view kMemory = "memory";
inline constexpr std::string_view kReprogram = "reprogram";

/// The device file split into named interfaces, reached only through
/// open, close, read, write, get_info, set_irq, set_status and reprogram.
///
/// kernel-cra addresses are register indices and data is a run of 64-bit
/// little-endian register values. memory addresses are device addresses
/// inside the session's own buffers.
class Mmd
{
public:
  explicit Mmd(GuestSession& session)
    : session_(session)
  { }

  MmdInterface open(std::string_view name)
  {
    MmdInterface iface;
    iface.name = std::string(name);
    if (name == kKernelCra)
      iface.kind = MmdKind::PassThrough;
    else if (name == kMemory || name == kReprogram)
      iface.kind = MmdKind::Forwarded;
    else
      throw Error(Errc::NoSuchInterface, "no interface named '" + std::string(name) + "'");
    iface.handle = next_handle_++;
    open_.emplace(iface.handle, iface.name);
    return iface;
  }

  void close(const MmdInterface& iface)
  {
    check_open(iface);
    open_.erase(iface.handle);
  }

  Bytes read(const MmdInterface& iface, std::uint64_t addr, std::uint64_t len)
  {
    check_open(iface);
    if (iface.name == kKernelCra)
      {
        if (len % 8 != 0)
          throw Error(Errc::InvalidSize, "register reads are whole 64-bit words");
        ByteWriter w;
        for (std::uint64_t i = 0; i < len / 8; ++i)
          w.u64(session_.client().reg_read(register_index(addr + i)).value);
        return w.take();
      }
    if (iface.name == kMemory)
      return session_.client().read(addr, len);
    throw Error(Errc::Unsupported, "reprogram interface is write-only through reprogram()");
  }

  /// Ignored when the region's interfaces are frozen.
  RegAccess write(const MmdInterface& iface, std::uint64_t addr, ByteView data)
  {
    check_open(iface);
    if (iface.name == kKernelCra)
      {
        if (data.size() % 8 != 0)
          throw Error(Errc::InvalidSize, "register writes are whole 64-bit words");
        ByteReader r(data);
        auto access = RegAccess::Ack;
        for (std::uint64_t i = 0; i < data.size() / 8; ++i)
          if (session_.client().reg_write(register_index(addr + i), r.u64()) == RegAccess::Ignored)
            access = RegAccess::Ignored;
        return access;
      }
    if (iface.name == kMemory)
      {
        session_.client().write(addr, data);
        return RegAccess::Ack;
      }
    throw Error(Errc::Unsupported, "reprogram interface is write-only through reprogram()");
  }

  InterfaceInfo get_info(const MmdInterface& iface)
  {
    check_open(iface);
    return session_.client().get_info(interface_id(iface));
  }

  void set_irq(const MmdInterface& iface, GuestSession::Handler handler)
  {
    check_handler_target(iface);
    session_.set_irq_handler(std::move(handler));
  }

  void set_status(const MmdInterface& iface, GuestSession::Handler handler)
  {
    check_handler_target(iface);
    session_.set_status_handler(std::move(handler));
  }

  void reprogram(const MmdInterface& iface, ByteView bitfile)
  {
    check_open(iface);
    if (iface.name != kReprogram)
      throw Error(Errc::Unsupported, "reprogram needs the reprogram interface");
    session_.client().reprogram(bitfile);
  }

private:
  void check_open(const MmdInterface& iface) const
  {
    auto it = open_.find(iface.handle);
    if (it == open_.end() || it->second != iface.name)
      throw Error(Errc::ClosedInterface, "interface '" + iface.name + "' is not open");
  }

  void check_handler_target(const MmdInterface& iface) const
  {
    check_open(iface);
    if (iface.name == kReprogram)
      throw Error(Errc::Unsupported, "the reprogram interface takes no handlers");
  }

  static unsigned register_index(std::uint64_t addr)
  {
    if (addr >= kRegisterCount)
      throw Error(Errc::InvalidRegion, "register index " + std::to_string(addr) + " out of range");
    return static_cast<unsigned>(addr);
  }

  static InterfaceId interface_id(const MmdInterface& iface)
  {
    if (iface.name == kKernelCra)
      return InterfaceId::KernelCra;
    if (iface.name == kMemory)
      return InterfaceId::Memory;
    return InterfaceId::Reprogram;
  }

  GuestSession& session_;
  std::map<std::uint32_t, std::string> open_;
  std::uint32_t next_handle_ = 1;
};

struct GuestBuffer
{
  MemHandle handle;

  std::uint64_t size() const
  { return handle.size; }

  std::uint64_t address() const
  { return handle.base_addr; }
};

/// Minimal buffer and kernel API composed from the MMD operators.
class Runtime
{
public:
  explicit Runtime(GuestSession& session)
    : session_(session), mmd_(session)
  {
    cra_ = mmd_.open(kKernelCra);
    mem_ = mmd_.open(kMemory);
    prog_ = mmd_.open(kReprogram);
  }

  Mmd& mmd()
  { return mmd_; }

  void program(ByteView bitfile)
  { mmd_.reprogram(prog_, bitfile); }

  GuestBuffer create_buffer(std::uint64_t size)
  {
    if (size == 0)
      throw Error(Errc::InvalidSize, "buffer of zero bytes");
    return {session_.client().alloc(size)};
  }

  void release_buffer(const GuestBuffer& buf)
  { session_.client().free(buf.handle.base_addr); }

  void write_buffer(const GuestBuffer& buf, std::uint64_t offset, ByteView data)
  {
    check_range(buf, offset, data.size());
    mmd_.write(mem_, buf.address() + offset, data);
  }

  Bytes read_buffer(const GuestBuffer& buf, std::uint64_t offset, std::uint64_t len)
  {
    check_range(buf, offset, len);
    return mmd_.read(mem_, buf.address() + offset, len);
  }

  void set_kernel_args(const std::vector<std::uint64_t>& args)
  {
    if (args.size() > kArgSlots)
      throw Error(Errc::KernelArgError, "more arguments than register slots");
    args_ = args;
  }

  /// Write the argument registers and assert start.
  void launch()
  {
    auto status = session_.client().reg_read(kRegStatus);
    if (status.access == RegAccess::Ignored)
      throw Error(Errc::FrozenAccess, "region is being reconfigured");
    if (!(status.value & status_bits::kLoaded))
      throw Error(Errc::NoKernelLoaded, "no kernel loaded in region "
                                          + std::to_string(session_.prr()));
    ByteWriter w;
    for (auto a : args_)
      w.u64(a);
    if (!args_.empty() && mmd_.write(cra_, kRegArgBase, w.bytes()) == RegAccess::Ignored)
      throw Error(Errc::FrozenAccess, "region is being reconfigured");
    ByteWriter start;
    start.u64(1);
    if (mmd_.write(cra_, kRegControl, start.bytes()) == RegAccess::Ignored)
      throw Error(Errc::FrozenAccess, "region is being reconfigured");
    ++launched_;
  }

  /// Block until every launch so far has signalled completion. Returns at
  /// once when nothing is outstanding.
  void wait()
  {
    while (session_.irqs_seen() < launched_)
      {
        auto a = session_.client().advance_until_irq();
        if (session_.irqs_seen() < launched_ && a.idle)
          throw Error(Errc::DeadlockDetected, "launched kernel never completed");
      }
  }

  std::uint64_t launched() const
  { return launched_; }

  /// Status of the most recent completion.
  Errc last_status() const
  {
    auto* n = session_.last_irq();
    return n ? n->status : Errc::Ok;
  }

private:
  static void check_range(const GuestBuffer& buf, std::uint64_t offset, std::uint64_t len)
  {
    if (offset > buf.size() || len > buf.size() - offset)
      throw Error(Errc::OutOfBounds, "range exceeds buffer size");
  }

  GuestSession& session_;
  Mmd mmd_;
  MmdInterface cra_;
  MmdInterface mem_;
  MmdInterface prog_;
  std::vector<std::uint64_t> args_;
  std::uint64_t launched_ = 0;
};

} // namespace vfpga
