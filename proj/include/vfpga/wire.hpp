// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vfpga/bytes.hpp"
#include "vfpga/error.hpp"
#include "vfpga/vmm.hpp"

// Guest <-> broker framing. Every frame is
//
//   u32 length | u16 kind | u32 request_id | u64 token | payload
//
// with `length` counting everything after itself, all little-endian.
// Responses reuse the request's kind with the top bit set and begin their
// payload with a status code, a message, and any notifications the
// session has pending.

namespace vfpga::wire
{

enum class MsgKind : std::uint16_t
{
  Attach = 1,
  Detach = 2,
  GetInfo = 3,
  Alloc = 4,
  Free = 5,
  WriteBuffer = 6,
  ReadBuffer = 7,
  Reprogram = 8,
  RegWrite = 9,
  RegRead = 10,
  Advance = 11,
  Query = 0x40,
  ExportTrace = 0x41,
};

inline constexpr std::uint16_t kResponseBit = 0x8000;
inline constexpr std::size_t kFrameHeaderSize = 4 + 2 + 4 + 8;
inline constexpr std::uint32_t kMaxFrameLength = 1u << 30;

inline constexpr std::string_view kind_name(MsgKind k)
{
  switch (k)
    {
    case MsgKind::Attach: return "attach";
    case MsgKind::Detach: return "detach";
    case MsgKind::GetInfo: return "get_info";
    case MsgKind::Alloc: return "alloc";
    case MsgKind::Free: return "free";
    case MsgKind::WriteBuffer: return "write_buffer";
    case MsgKind::ReadBuffer: return "read_buffer";
    case MsgKind::Reprogram: return "reprogram";
    case MsgKind::RegWrite: return "reg_write";
    case MsgKind::RegRead: return "reg_read";
    case MsgKind::Advance: return "advance";
    case MsgKind::Query: return "query";
    case MsgKind::ExportTrace: return "export_trace";
    }
  return "?";
}

inline std::optional<MsgKind> kind_from_name(std::string_view name)
{
  for (std::uint16_t v = 1; v <= 11; ++v)
    if (kind_name(MsgKind(v)) == name)
      return MsgKind(v);
  if (name == "query")
    return MsgKind::Query;
  if (name == "export_trace")
    return MsgKind::ExportTrace;
  return std::nullopt;
}

inline bool kind_known(std::uint16_t raw)
{ return (raw >= 1 && raw <= 11) || raw == 0x40 || raw == 0x41; }

/// Requests whose completion is reported later through a notification.
inline bool is_forwarded(MsgKind k)
{
  switch (k)
    {
    case MsgKind::GetInfo:
    case MsgKind::Alloc:
    case MsgKind::Free:
    case MsgKind::WriteBuffer:
    case MsgKind::ReadBuffer:
    case MsgKind::Reprogram:
      return true;
    default:
      return false;
    }
}

/// Observation-only requests; they leave no trace and change no state.
inline bool is_untraced(MsgKind k)
{ return k == MsgKind::Query || k == MsgKind::ExportTrace; }

struct Frame
{
  std::uint16_t kind = 0;
  std::uint32_t request_id = 0;
  std::uint64_t token = 0;
  Bytes payload;

  bool is_response() const
  { return (kind & kResponseBit) != 0; }

  bool operator==(const Frame&) const = default;
};

inline Bytes encode_frame(const Frame& f)
{
  auto body = 2 + 4 + 8 + f.payload.size();
  if (body > kMaxFrameLength)
    throw Error(Errc::ProtocolError, "frame too large");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(body));
  w.u16(f.kind);
  w.u32(f.request_id);
  w.u64(f.token);
  w.raw(f.payload);
  return w.take();
}

/// Length of the frame starting at `prefix`, once four bytes are present.
inline std::uint32_t frame_body_length(ByteView prefix)
{
  ByteReader r(prefix.first(4), Errc::ProtocolError);
  auto len = r.u32();
  if (len < 2 + 4 + 8 || len > kMaxFrameLength)
    throw Error(Errc::ProtocolError, "bad frame length " + std::to_string(len));
  return len;
}

inline Frame decode_frame(ByteView bytes)
{
  ByteReader r(bytes, Errc::ProtocolError);
  auto len = r.u32();
  if (len != r.remaining())
    throw Error(Errc::ProtocolError, "frame length does not match buffer");
  Frame f;
  f.kind = r.u16();
  f.request_id = r.u32();
  f.token = r.u64();
  auto rest = r.raw(r.remaining());
  f.payload.assign(rest.begin(), rest.end());
  return f;
}

// -- notifications ----------------------------------------------------------

inline void put_notification(ByteWriter& w, const Notification& n)
{
  w.u8(static_cast<std::uint8_t>(n.kind));
  w.u32(n.vm);
  w.u32(n.request);
  w.u16(static_cast<std::uint16_t>(n.status));
  w.i64(n.time.count());
  w.u64(n.seq);
  w.u32(static_cast<std::uint32_t>(n.segments.size()));
  for (const auto& s : n.segments)
    {
      w.u8(static_cast<std::uint8_t>(s.phase));
      w.i64(s.begin.count());
      w.i64(s.end.count());
    }
  w.blob(n.data);
}

inline Errc get_errc(ByteReader& r)
{
  auto raw = r.u16();
  if (!errc_valid(raw))
    throw Error(Errc::ProtocolError, "unknown status code " + std::to_string(raw));
  return Errc(raw);
}

inline Notification get_notification(ByteReader& r)
{
  Notification n;
  auto kind = r.u8();
  if (kind != 1 && kind != 2)
    throw Error(Errc::ProtocolError, "unknown notification kind");
  n.kind = Notification::Kind(kind);
  n.vm = r.u32();
  n.request = r.u32();
  n.status = get_errc(r);
  n.time = SimTime(r.i64());
  n.seq = r.u64();
  auto count = r.u32();
  if (count > r.remaining() / 17)
    throw Error(Errc::ProtocolError, "segment count exceeds frame");
  n.segments.resize(count);
  for (auto& s : n.segments)
    {
      auto phase = r.u8();
      if (phase >= kPhaseCount)
        throw Error(Errc::ProtocolError, "unknown phase");
      s.phase = Phase(phase);
      s.begin = SimTime(r.i64());
      s.end = SimTime(r.i64());
    }
  n.data = r.blob();
  return n;
}

// -- responses ---------------------------------------------------------------

struct Response
{
  Errc status = Errc::Ok;
  std::string message;
  std::vector<Notification> notifications;
  Bytes result;
};

inline Bytes encode_response_payload(const Response& resp)
{
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(resp.status));
  w.str(resp.message.size() > 0xffff ? resp.message.substr(0, 0xffff) : resp.message);
  w.u32(static_cast<std::uint32_t>(resp.notifications.size()));
  for (const auto& n : resp.notifications)
    put_notification(w, n);
  w.raw(resp.result);
  return w.take();
}

inline Response decode_response_payload(ByteView payload)
{
  ByteReader r(payload, Errc::ProtocolError);
  Response resp;
  resp.status = get_errc(r);
  resp.message = r.str();
  auto count = r.u32();
  if (count > r.remaining())
    throw Error(Errc::ProtocolError, "notification count exceeds frame");
  for (std::uint32_t i = 0; i < count; ++i)
    resp.notifications.push_back(get_notification(r));
  auto rest = r.raw(r.remaining());
  resp.result.assign(rest.begin(), rest.end());
  return resp;
}

// -- typed payloads -----------------------------------------------------------

enum class AdvanceMode : std::uint8_t
{
  Steps = 0,      ///< run up to `limit` events
  UntilIrq = 1,   ///< run until the caller's session has an interrupt waiting
  UntilTime = 2,  ///< run events up to time `limit` (ps), then move the clock there
};

struct AdvanceResult
{
  std::uint64_t ran = 0;
  bool idle = false;  ///< event queue empty afterwards
  SimTime now{0};
  SimTime next{0};
};

struct QueryResult
{
  SimTime now{0};
  std::uint64_t digest = 0;
  std::uint64_t trace_events = 0;
  std::uint64_t pending_events = 0;
  std::uint64_t config_fingerprint = 0;
};

inline void put_handle(ByteWriter& w, const MemHandle& h)
{
  w.u64(h.base_addr);
  w.u64(h.size);
  w.u32(h.first_index);
  w.u32(h.count);
  w.u32(h.owner);
}

inline MemHandle get_handle(ByteReader& r)
{
  MemHandle h;
  h.base_addr = r.u64();
  h.size = r.u64();
  h.first_index = r.u32();
  h.count = r.u32();
  h.owner = r.u32();
  return h;
}

inline void put_info(ByteWriter& w, const InterfaceInfo& i)
{
  w.u8(i.pass_through ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(i.prr));
  w.u32(i.arg_slots);
  w.u32(i.register_count);
  w.u64(i.segment_size);
  w.u64(i.ddr_size);
}

inline InterfaceInfo get_info(ByteReader& r)
{
  InterfaceInfo i;
  i.pass_through = r.u8() != 0;
  i.prr = r.u8();
  i.arg_slots = r.u32();
  i.register_count = r.u32();
  i.segment_size = r.u64();
  i.ddr_size = r.u64();
  return i;
}

inline void put_advance(ByteWriter& w, const AdvanceResult& a)
{
  w.u64(a.ran);
  w.u8(a.idle ? 1 : 0);
  w.i64(a.now.count());
  w.i64(a.next.count());
}

inline AdvanceResult get_advance(ByteReader& r)
{
  AdvanceResult a;
  a.ran = r.u64();
  a.idle = r.u8() != 0;
  a.now = SimTime(r.i64());
  a.next = SimTime(r.i64());
  return a;
}

inline void put_query(ByteWriter& w, const QueryResult& q)
{
  w.i64(q.now.count());
  w.u64(q.digest);
  w.u64(q.trace_events);
  w.u64(q.pending_events);
  w.u64(q.config_fingerprint);
}

inline QueryResult get_query(ByteReader& r)
{
  QueryResult q;
  q.now = SimTime(r.i64());
  q.digest = r.u64();
  q.trace_events = r.u64();
  q.pending_events = r.u64();
  q.config_fingerprint = r.u64();
  return q;
}

} // namespace vfpga::wire
