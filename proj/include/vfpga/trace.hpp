// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vfpga/bytes.hpp"
#include "vfpga/error.hpp"
#include "vfpga/mmu.hpp"
#include "vfpga/sim.hpp"

namespace vfpga
{

/// One interposition record. Calls that entered through the service
/// boundary carry their request so the trace can be replayed; device-side
/// events (op names starting with "dev.") carry none.
struct TraceEvent
{
  SimTime time{0};
  std::uint64_t seq = 0;
  std::optional<VmId> vm;
  std::string op;
  std::uint64_t arg_digest = 0;
  Errc outcome = Errc::Ok;
  std::uint32_t request_id = 0;
  std::uint64_t token = 0;
  Bytes payload;

  bool is_call() const
  { return op.rfind("dev.", 0) != 0; }

  bool operator==(const TraceEvent&) const = default;
};

struct ParsedTrace
{
  std::uint64_t config_fingerprint = 0;
  std::vector<TraceEvent> events;
};

inline constexpr std::string_view kTraceMagic = "# vfpga-trace v1";

class TraceLog
{
public:
  std::size_t record(TraceEvent e)
  {
    e.seq = next_seq_++;
    events_.push_back(std::move(e));
    return events_.size() - 1;
  }

  void set_outcome(std::size_t index, Errc outcome)
  { events_.at(index).outcome = outcome; }

  void set_vm(std::size_t index, VmId vm)
  { events_.at(index).vm = vm; }

  const std::vector<TraceEvent>& events() const
  { return events_; }

  std::size_t size() const
  { return events_.size(); }

  std::size_t call_count() const
  {
    std::size_t n = 0;
    for (const auto& e : events_)
      n += e.is_call();
    return n;
  }

  /// One event per line, fields in fixed order:
  /// t seq vm op args outcome req token payload
  std::string export_text(std::uint64_t config_fingerprint) const
  {
    std::ostringstream os;
    os << kTraceMagic << " config=" << hex64(config_fingerprint) << '\n';
    for (const auto& e : events_)
      os << format_line(e) << '\n';
    return os.str();
  }

  static std::string format_line(const TraceEvent& e)
  {
    std::string line;
    line.reserve(96 + e.payload.size() * 2);
    line += "t=" + std::to_string(e.time.count());
    line += " seq=" + std::to_string(e.seq);
    line += " vm=" + (e.vm ? std::to_string(*e.vm) : std::string("-"));
    line += " op=" + e.op;
    line += " args=" + hex64(e.arg_digest);
    line += " outcome=" + std::string(errc_name(e.outcome));
    line += " req=" + std::to_string(e.request_id);
    line += " token=" + hex64(e.token);
    line += " payload=" + (e.payload.empty() ? std::string("-") : to_hex(e.payload));
    return line;
  }

  static ParsedTrace parse(std::string_view text)
  {
    ParsedTrace out;
    std::size_t lineno = 0;
    bool saw_header = false;
    while (!text.empty())
      {
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++lineno;
        if (line.empty())
          continue;
        if (line.rfind(kTraceMagic, 0) == 0)
          {
            auto pos = line.find("config=");
            if (pos == std::string_view::npos)
              throw Error(Errc::FormatError, "trace header lacks config fingerprint");
            out.config_fingerprint = parse_hex64(line.substr(pos + 7));
            saw_header = true;
            continue;
          }
        if (!saw_header)
          throw Error(Errc::FormatError, "trace missing header");
        if (line.front() == '#')
          continue;
        out.events.push_back(parse_line(line, lineno));
      }
    if (!saw_header)
      throw Error(Errc::FormatError, "empty trace");
    return out;
  }

private:
  static std::uint64_t parse_hex64(std::string_view s)
  {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (ec != std::errc{})
      throw Error(Errc::FormatError, "bad hex field");
    return v;
  }

  template <typename T>
  static T parse_dec(std::string_view s)
  {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
      throw Error(Errc::FormatError, "bad numeric field");
    return v;
  }

  static TraceEvent parse_line(std::string_view line, std::size_t lineno)
  {
    static constexpr std::string_view keys[] = {"t", "seq", "vm", "op", "args",
                                                "outcome", "req", "token", "payload"};
    std::string_view fields[9];
    std::size_t k = 0;
    while (!line.empty())
      {
        auto sp = line.find(' ');
        auto tok = line.substr(0, sp);
        line = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
        auto eq = tok.find('=');
        if (k >= 9 || eq == std::string_view::npos || tok.substr(0, eq) != keys[k])
          throw Error(Errc::FormatError, "trace line " + std::to_string(lineno) + " malformed");
        fields[k++] = tok.substr(eq + 1);
      }
    if (k != 9)
      throw Error(Errc::FormatError, "trace line " + std::to_string(lineno) + " incomplete");
    TraceEvent e;
    e.time = SimTime(parse_dec<std::int64_t>(fields[0]));
    e.seq = parse_dec<std::uint64_t>(fields[1]);
    if (fields[2] != "-")
      e.vm = parse_dec<VmId>(fields[2]);
    e.op = std::string(fields[3]);
    e.arg_digest = parse_hex64(fields[4]);
    try
      {
        e.outcome = errc_from_name(fields[5]);
      }
    catch (const std::invalid_argument&)
      {
        throw Error(Errc::FormatError, "unknown outcome in trace line " + std::to_string(lineno));
      }
    e.request_id = parse_dec<std::uint32_t>(fields[6]);
    e.token = parse_hex64(fields[7]);
    if (fields[8] != "-")
      e.payload = from_hex(fields[8]);
    return e;
  }

  std::vector<TraceEvent> events_;
  std::uint64_t next_seq_ = 0;
};

} // namespace vfpga
