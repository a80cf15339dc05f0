// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

#include "vfpga/vmm.hpp"
#include "vfpga/wire.hpp"

namespace vfpga
{

/// Frame-level front door of the broker. Every transport ends here, so the
/// in-process and socket paths share one code path and one trace.
///
/// Each request (other than query/export_trace) is logged once, at the
/// virtual time it arrives, together with its raw payload; replaying those
/// frames in order against a fresh service reproduces the run.
class VmmService
{
public:
  explicit VmmService(SystemConfig cfg)
    : vmm_(std::move(cfg))
  {
    vmm_.set_completion_hook([this](VmId vm, RequestId req, Errc status) {
      auto it = pending_trace_.find({vm, req});
      if (it == pending_trace_.end())
        return;
      if (status != Errc::Ok)
        vmm_.trace().set_outcome(it->second, status);
      pending_trace_.erase(it);
    });
  }

  VmmService(const VmmService&) = delete;
  VmmService& operator=(const VmmService&) = delete;

  Bytes handle_bytes(ByteView request)
  {
    wire::Frame req;
    try
      {
        req = wire::decode_frame(request);
      }
    catch (const Error& e)
      {
        wire::Frame resp;
        resp.kind = wire::kResponseBit;
        resp.payload = wire::encode_response_payload({e.code(), e.what(), {}, {}});
        return wire::encode_frame(resp);
      }
    return wire::encode_frame(handle(req));
  }

  wire::Frame handle(const wire::Frame& req)
  {
    std::lock_guard lock(mu_);
    return handle_locked(req);
  }

  /// Direct access for tests and the in-process bench; callers must not
  /// race with handle().
  Vmm& vmm()
  { return vmm_; }

  std::string export_trace()
  {
    std::lock_guard lock(mu_);
    return vmm_.trace().export_text(vmm_.config().fingerprint());
  }

private:
  wire::Frame handle_locked(const wire::Frame& req)
  {
    wire::Frame out;
    out.kind = static_cast<std::uint16_t>(req.kind | wire::kResponseBit);
    out.request_id = req.request_id;
    out.token = req.token;

    wire::Response resp;
    ByteWriter result;
    std::optional<std::size_t> trace_index;
    Session* session = nullptr;
    try
      {
        if (!wire::kind_known(req.kind))
          throw Error(Errc::ProtocolError, "unknown message kind " + std::to_string(req.kind));
        auto kind = wire::MsgKind(req.kind);
        bool control = req.token == 0
                       && (kind == wire::MsgKind::Attach || kind == wire::MsgKind::Advance
                           || wire::is_untraced(kind));
        if (!wire::is_untraced(kind))
          trace_index = record_call(kind, req);
        if (!control)
          {
            session = vmm_.session_by_token(req.token);
            if (!session)
              throw Error(Errc::NotAttached, "unknown session token");
            if (trace_index)
              vmm_.trace().set_vm(*trace_index, session->vm);
          }
        dispatch(kind, req, session, result, resp, trace_index);
      }
    catch (const Error& e)
      {
        resp.status = e.code();
        resp.message = e.what();
      }
    catch (const std::exception& e)
      {
        resp.status = Errc::ProtocolError;
        resp.message = e.what();
      }
    if (trace_index && resp.status != Errc::Ok)
      vmm_.trace().set_outcome(*trace_index, resp.status);

    if (req.token == 0 && req.kind == static_cast<std::uint16_t>(wire::MsgKind::Advance))
      resp.notifications = vmm_.drain_all();
    else if (auto* s = vmm_.session_by_token(req.token))
      resp.notifications = vmm_.drain(s->vm);
    for (const auto& n : resp.notifications)
      if (n.kind == Notification::Kind::Status)
        vmm_.forget_completion(n.vm, n.request);
    resp.result = result.take();
    out.payload = wire::encode_response_payload(resp);
    return out;
  }

  std::size_t record_call(wire::MsgKind kind, const wire::Frame& req)
  {
    TraceEvent e;
    e.time = vmm_.sim().now();
    e.op = std::string(wire::kind_name(kind));
    e.arg_digest = fnv1a64(req.payload);
    e.request_id = req.request_id;
    e.token = req.token;
    e.payload = req.payload;
    if (kind == wire::MsgKind::Attach && req.payload.size() >= 4)
      {
        ByteReader r(req.payload);
        e.vm = r.u32();
      }
    return vmm_.trace().record(std::move(e));
  }

  void dispatch(wire::MsgKind kind, const wire::Frame& req, Session* session, ByteWriter& result,
                wire::Response& resp, std::optional<std::size_t> trace_index)
  {
    ByteReader r(req.payload, Errc::ProtocolError);
    switch (kind)
      {
      case wire::MsgKind::Attach:
        {
          auto vm = r.u32();
          r.expect_end();
          auto& s = vmm_.attach_vm(vm);
          result.u64(s.token);
          result.u8(static_cast<std::uint8_t>(s.prr));
          return;
        }
      case wire::MsgKind::Detach:
        r.expect_end();
        resp.notifications = vmm_.drain(session->vm);
        vmm_.detach_vm(session->vm);
        return;
      case wire::MsgKind::RegWrite:
        {
          auto reg = r.u32();
          auto value = r.u64();
          r.expect_end();
          auto access = vmm_.reg_write(session->vm, reg, value);
          result.u8(static_cast<std::uint8_t>(access));
          return;
        }
      case wire::MsgKind::RegRead:
        {
          auto reg = r.u32();
          r.expect_end();
          auto rd = vmm_.reg_read(session->vm, reg);
          result.u64(rd.value);
          result.u8(static_cast<std::uint8_t>(rd.access));
          return;
        }
      case wire::MsgKind::Advance:
        {
          auto mode = r.u8();
          auto limit = r.u64();
          r.expect_end();
          put_advance(result, advance(session, mode, limit));
          return;
        }
      case wire::MsgKind::Query:
        {
          wire::QueryResult q;
          q.now = vmm_.sim().now();
          q.digest = vmm_.digest();
          q.trace_events = vmm_.trace().size();
          q.pending_events = vmm_.sim().pending();
          q.config_fingerprint = vmm_.config().fingerprint();
          put_query(result, q);
          return;
        }
      case wire::MsgKind::ExportTrace:
        {
          auto text = vmm_.trace().export_text(vmm_.config().fingerprint());
          result.blob(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
          return;
        }
      default:
        break;
      }

    // Forwarded requests: u8 blocking flag, then the operation's arguments.
    bool blocking = r.u8() != 0;
    VmId vm = session->vm;
    RequestId id = req.request_id;
    if (vmm_.completed(vm, id))
      throw Error(Errc::ProtocolError, "request id reused before completion was collected");
    switch (kind)
      {
      case wire::MsgKind::GetInfo:
        {
          auto iface = r.u8();
          r.expect_end();
          if (iface > 2)
            throw Error(Errc::NoSuchInterface, "unknown interface id");
          wire::put_info(result, vmm_.handle_get_info(vm, id, InterfaceId(iface)));
          break;
        }
      case wire::MsgKind::Alloc:
        {
          auto size = r.u64();
          r.expect_end();
          wire::put_handle(result, vmm_.handle_alloc(vm, id, size));
          break;
        }
      case wire::MsgKind::Free:
        {
          auto base = r.u64();
          r.expect_end();
          vmm_.handle_free(vm, id, base);
          break;
        }
      case wire::MsgKind::WriteBuffer:
        {
          auto addr = r.u64();
          auto data = r.blob();
          r.expect_end();
          vmm_.handle_write_buffer(vm, id, addr, std::move(data));
          break;
        }
      case wire::MsgKind::ReadBuffer:
        {
          auto addr = r.u64();
          auto len = r.u64();
          r.expect_end();
          vmm_.handle_read_buffer(vm, id, addr, len);
          break;
        }
      case wire::MsgKind::Reprogram:
        {
          auto bitfile = r.blob();
          r.expect_end();
          vmm_.handle_reprogram(vm, id, bitfile);
          break;
        }
      default:
        throw Error(Errc::ProtocolError, "unexpected message kind");
      }
    if (trace_index)
      pending_trace_[{vm, id}] = *trace_index;
    if (!blocking)
      return;
    if (!vmm_.sim().run_until([&] { return vmm_.completed(vm, id); }))
      throw Error(Errc::DeadlockDetected, "request can never complete");
    for (const auto& n : session->inbox)
      if (n.kind == Notification::Kind::Status && n.request == id)
        {
          resp.status = n.status;
          if (n.status != Errc::Ok)
            resp.message = std::string(errc_name(n.status));
        }
  }

  wire::AdvanceResult advance(Session* session, std::uint8_t mode, std::uint64_t limit)
  {
    auto& sim = vmm_.sim();
    wire::AdvanceResult a;
    if (mode == static_cast<std::uint8_t>(wire::AdvanceMode::UntilIrq))
      {
        if (!session)
          throw Error(Errc::ProtocolError, "advance-until-irq needs a session");
        auto vm = session->vm;
        while (!vmm_.has_irq(vm) && sim.step())
          ++a.ran;
      }
    else if (mode == static_cast<std::uint8_t>(wire::AdvanceMode::Steps))
      {
        // Stop early once the caller has something to react to.
        while (a.ran < limit && sim.step())
          {
            ++a.ran;
            if (has_notifications(session))
              break;
          }
      }
    else if (mode == static_cast<std::uint8_t>(wire::AdvanceMode::UntilTime))
      {
        if (limit > static_cast<std::uint64_t>(kNever.count()))
          throw Error(Errc::ProtocolError, "advance target out of range");
        SimTime target(static_cast<std::int64_t>(limit));
        bool interrupted = false;
        while (!sim.empty() && sim.next_time() <= target)
          {
            sim.step();
            ++a.ran;
            if (has_notifications(session))
              {
                interrupted = true;
                break;
              }
          }
        if (!interrupted && target != kNever && target > sim.now())
          sim.advance_to(target);
      }
    else
      throw Error(Errc::ProtocolError, "unknown advance mode");
    a.idle = sim.empty();
    a.now = sim.now();
    a.next = sim.next_time();
    return a;
  }

  bool has_notifications(const Session* session) const
  {
    if (session)
      return !session->inbox.empty();
    for (const auto& [vm, s] : vmm_.sessions())
      if (!s.inbox.empty())
        return true;
    return false;
  }

  std::mutex mu_;
  Vmm vmm_;
  std::map<std::pair<VmId, RequestId>, std::size_t> pending_trace_;
};

struct ReplayResult
{
  std::uint64_t digest = 0;
  SimTime final_time{0};
  std::size_t calls = 0;
};

/// Feed every recorded request of an exported trace, in order, to a fresh
/// service built from `cfg`.
inline ReplayResult replay(std::string_view trace_text, const SystemConfig& cfg)
{
  auto parsed = TraceLog::parse(trace_text);
  if (parsed.config_fingerprint != cfg.fingerprint())
    throw Error(Errc::ConfigMismatch, "trace was recorded under config " + hex64(parsed.config_fingerprint)
                                        + ", replay config is " + hex64(cfg.fingerprint()));
  VmmService service(cfg);
  ReplayResult out;
  for (const auto& e : parsed.events)
    {
      if (!e.is_call())
        continue;
      auto kind = wire::kind_from_name(e.op);
      if (!kind)
        throw Error(Errc::FormatError, "trace names unknown operation '" + e.op + "'");
      wire::Frame f;
      f.kind = static_cast<std::uint16_t>(*kind);
      f.request_id = e.request_id;
      f.token = e.token;
      f.payload = e.payload;
      service.handle(f);
      ++out.calls;
    }
  out.digest = service.vmm().digest();
  out.final_time = service.vmm().sim().now();
  return out;
}

} // namespace vfpga
