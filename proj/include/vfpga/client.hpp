// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vfpga/transport.hpp"
#include "vfpga/wire.hpp"

namespace vfpga
{

/// Typed request/response stub over a Transport. One instance speaks for
/// one session (after attach) or for the control side (token 0).
///
/// Notifications piggybacked on any response are handed to the sink in
/// arrival order before the call returns.
class VmmClient
{
public:
  using NotificationSink = std::function<void(const Notification&)>;

  struct Reply
  {
    Errc status = Errc::Ok;
    std::string message;
    RequestId request = 0;
    Bytes result;
    std::vector<Notification> notifications;

    bool ok() const
    { return status == Errc::Ok; }

    void check() const
    {
      if (!ok())
        throw Error(status, message);
    }
  };

  explicit VmmClient(Transport& transport)
    : transport_(transport)
  { }

  void set_sink(NotificationSink sink)
  { sink_ = std::move(sink); }

  std::uint64_t token() const
  { return token_; }

  std::optional<VmId> vm() const
  { return vm_; }

  unsigned prr() const
  { return prr_; }

  bool attached() const
  { return vm_.has_value(); }

  RequestId next_request_id() const
  { return next_id_; }

  /// Send one request and return the decoded reply; errors are reported in
  /// the reply, not thrown.
  Reply call(wire::MsgKind kind, Bytes payload)
  {
    wire::Frame f;
    f.kind = static_cast<std::uint16_t>(kind);
    f.request_id = next_id_++;
    f.token = token_;
    f.payload = std::move(payload);
    auto raw = transport_.roundtrip(wire::encode_frame(f));
    auto resp_frame = wire::decode_frame(raw);
    if (resp_frame.kind != (f.kind | wire::kResponseBit) || resp_frame.request_id != f.request_id)
      throw Error(Errc::ProtocolError, "response does not match request");
    auto resp = wire::decode_response_payload(resp_frame.payload);
    Reply r;
    r.status = resp.status;
    r.message = std::move(resp.message);
    r.request = f.request_id;
    r.result = std::move(resp.result);
    r.notifications = std::move(resp.notifications);
    if (sink_)
      for (const auto& n : r.notifications)
        sink_(n);
    return r;
  }

  // -- session lifecycle --------------------------------------------------

  unsigned attach(VmId vm)
  {
    ByteWriter w;
    w.u32(vm);
    auto r = call(wire::MsgKind::Attach, w.take());
    r.check();
    ByteReader rd(r.result, Errc::ProtocolError);
    token_ = rd.u64();
    prr_ = rd.u8();
    vm_ = vm;
    return prr_;
  }

  void detach()
  {
    auto r = call(wire::MsgKind::Detach, {});
    r.check();
    token_ = 0;
    vm_.reset();
  }

  // -- forwarded, asynchronous ---------------------------------------------
  // The reply says whether the broker accepted the request; completion
  // arrives later as a Status notification carrying reply.request.

  Reply get_info_async(InterfaceId iface, bool blocking = false)
  {
    auto w = forwarded(blocking);
    w.u8(static_cast<std::uint8_t>(iface));
    return call(wire::MsgKind::GetInfo, w.take());
  }

  Reply alloc_async(std::uint64_t size, bool blocking = false)
  {
    auto w = forwarded(blocking);
    w.u64(size);
    return call(wire::MsgKind::Alloc, w.take());
  }

  Reply free_async(std::uint64_t base, bool blocking = false)
  {
    auto w = forwarded(blocking);
    w.u64(base);
    return call(wire::MsgKind::Free, w.take());
  }

  Reply write_async(std::uint64_t addr, ByteView data, bool blocking = false)
  {
    auto w = forwarded(blocking);
    w.u64(addr);
    w.blob(data);
    return call(wire::MsgKind::WriteBuffer, w.take());
  }

  Reply read_async(std::uint64_t addr, std::uint64_t len, bool blocking = false)
  {
    auto w = forwarded(blocking);
    w.u64(addr);
    w.u64(len);
    return call(wire::MsgKind::ReadBuffer, w.take());
  }

  Reply reprogram_async(ByteView bitfile, bool blocking = false)
  {
    auto w = forwarded(blocking);
    w.blob(bitfile);
    return call(wire::MsgKind::Reprogram, w.take());
  }

  // -- forwarded, blocking ---------------------------------------------------

  InterfaceInfo get_info(InterfaceId iface)
  {
    auto r = get_info_async(iface, true);
    r.check();
    ByteReader rd(r.result, Errc::ProtocolError);
    return wire::get_info(rd);
  }

  MemHandle alloc(std::uint64_t size)
  {
    auto r = alloc_async(size, true);
    r.check();
    return decode_handle(r);
  }

  void free(std::uint64_t base)
  { free_async(base, true).check(); }

  void write(std::uint64_t addr, ByteView data)
  { write_async(addr, data, true).check(); }

  Bytes read(std::uint64_t addr, std::uint64_t len)
  {
    auto r = read_async(addr, len, true);
    r.check();
    for (auto& n : r.notifications)
      if (n.kind == Notification::Kind::Status && n.request == r.request)
        return std::move(n.data);
    throw Error(Errc::ProtocolError, "read completed without data");
  }

  void reprogram(ByteView bitfile)
  { reprogram_async(bitfile, true).check(); }

  static MemHandle decode_handle(const Reply& r)
  {
    ByteReader rd(r.result, Errc::ProtocolError);
    return wire::get_handle(rd);
  }

  // -- pass-through ---------------------------------------------------------

  RegAccess reg_write(unsigned reg, std::uint64_t value)
  {
    ByteWriter w;
    w.u32(reg);
    w.u64(value);
    auto r = call(wire::MsgKind::RegWrite, w.take());
    r.check();
    ByteReader rd(r.result, Errc::ProtocolError);
    return RegAccess(rd.u8());
  }

  RegRead reg_read(unsigned reg)
  {
    ByteWriter w;
    w.u32(reg);
    auto r = call(wire::MsgKind::RegRead, w.take());
    r.check();
    ByteReader rd(r.result, Errc::ProtocolError);
    RegRead out;
    out.value = rd.u64();
    out.access = RegAccess(rd.u8());
    return out;
  }

  // -- virtual time -----------------------------------------------------------

  wire::AdvanceResult advance_steps(std::uint64_t limit)
  { return advance(wire::AdvanceMode::Steps, limit); }

  wire::AdvanceResult advance_until_irq()
  { return advance(wire::AdvanceMode::UntilIrq, 0); }

  /// Run events due by `t`, stopping early when a notification is queued
  /// for this caller; otherwise leave the clock at `t`.
  wire::AdvanceResult advance_until(SimTime t)
  { return advance(wire::AdvanceMode::UntilTime, static_cast<std::uint64_t>(t.count())); }

  wire::QueryResult query()
  {
    auto r = call(wire::MsgKind::Query, {});
    r.check();
    ByteReader rd(r.result, Errc::ProtocolError);
    return wire::get_query(rd);
  }

  std::string export_trace()
  {
    auto r = call(wire::MsgKind::ExportTrace, {});
    r.check();
    ByteReader rd(r.result, Errc::ProtocolError);
    auto blob = rd.blob();
    return std::string(blob.begin(), blob.end());
  }

private:
  static ByteWriter forwarded(bool blocking)
  {
    ByteWriter w;
    w.u8(blocking ? 1 : 0);
    return w;
  }

  wire::AdvanceResult advance(wire::AdvanceMode mode, std::uint64_t limit)
  {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(mode));
    w.u64(limit);
    auto r = call(wire::MsgKind::Advance, w.take());
    r.check();
    ByteReader rd(r.result, Errc::ProtocolError);
    return wire::get_advance(rd);
  }

  Transport& transport_;
  NotificationSink sink_;
  std::uint64_t token_ = 0;
  std::optional<VmId> vm_;
  unsigned prr_ = 0;
  RequestId next_id_ = 1;
};

} // namespace vfpga
