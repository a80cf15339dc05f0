// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vfpga/bitstream.hpp"
#include "vfpga/vmm.hpp"

// Scenario files: sections of `key = value` lines.
//
//   [device]    prr_count ddr_size device_id shell_id range_guard prr_clock_hz
//   [cost]      clock_hz dma_bandwidth dma_latency pr_bandwidth
//               full_reconfig_time sw_call_overhead staging_copy_bandwidth
//   [vmm]       segment_size reprogram_queue_depth scrub_on_detach
//   [scenario]  seed bitfile_frame_bytes
//   [vm.N]      op = ...   (repeated, run in order by VM N)
//
// Sizes take B/KiB/MiB/GiB, rates B/s/KB/s/MB/s/GB/s/KiB/s/MiB/s/GiB/s,
// times s/ms/us/ns/ps, clocks Hz/kHz/MHz/GHz, switches on/off. Unknown
// sections or keys are errors.

namespace vfpga
{

enum class OpKind : std::uint8_t
{
  Reprogram,
  ReprogramFile,
  Alloc,
  Write,
  Launch,
  Wait,
  Read,
  Free,
  Sleep,
};

enum class Fill : std::uint8_t
{
  Random,
  Zero,
  Iota,   ///< 32-bit little-endian words 0, 1, 2, ...
  Byte,
};

/// A launch argument: a buffer's device address or a literal.
using LaunchArg = std::variant<std::string, std::uint64_t>;

struct ScriptOp
{
  OpKind kind = OpKind::Wait;
  int line = 0;
  KernelKind kernel = KernelKind::VecAdd;
  std::optional<unsigned> prr;              ///< reprogram target override
  std::optional<std::uint32_t> cycles;      ///< reprogram timing override
  std::string path;
  std::string buffer;
  std::uint64_t size = 0;
  Fill fill = Fill::Zero;
  std::uint8_t byte = 0;
  std::vector<LaunchArg> args;
  Duration sleep{0};
};

struct VmScript
{
  VmId vm = 0;
  std::vector<ScriptOp> ops;
};

struct ScenarioConfig
{
  SystemConfig system;
  std::uint64_t seed = 1;
  std::uint32_t bitfile_frame_bytes = 4 * MiB;
  std::vector<VmScript> vms;  ///< ascending vm id

  void validate() const;
};

namespace config_detail
{

inline std::string_view trim(std::string_view s)
{
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

[[noreturn]] inline void fail(int line, const std::string& what)
{
  throw Error(Errc::ConfigError, (line > 0 ? "line " + std::to_string(line) + ": " : "") + what);
}

/// Exact decimal: digits[.digits][e[+-]digits]. Returns value scaled by
/// 10^scale_exp as an integer, or fails if that is not integral.
inline std::uint64_t parse_decimal(std::string_view s, int scale_exp, int line)
{
  std::string digits;
  int exp10 = 0;
  bool dot = false, any = false;
  std::size_t i = 0;
  for (; i < s.size(); ++i)
    {
      char c = s[i];
      if (std::isdigit(static_cast<unsigned char>(c)))
        {
          digits += c;
          any = true;
          if (dot)
            --exp10;
        }
      else if (c == '.' && !dot)
        dot = true;
      else
        break;
    }
  if (!any)
    fail(line, "expected a number, got '" + std::string(s) + "'");
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E'))
    {
      ++i;
      bool neg = false;
      if (i < s.size() && (s[i] == '+' || s[i] == '-'))
        neg = s[i++] == '-';
      int e = 0;
      bool edig = false;
      for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i)
        {
          e = e * 10 + (s[i] - '0');
          edig = true;
          if (e > 40)
            fail(line, "exponent out of range");
        }
      if (!edig)
        fail(line, "malformed exponent in '" + std::string(s) + "'");
      exp10 += neg ? -e : e;
    }
  if (i != s.size())
    fail(line, "trailing characters in number '" + std::string(s) + "'");
  exp10 += scale_exp;
  while (exp10 < 0)
    {
      if (digits.empty() || digits.back() != '0')
        fail(line, "'" + std::string(s) + "' is finer than the supported resolution");
      digits.pop_back();
      ++exp10;
    }
  unsigned __int128 v = 0;
  for (char c : digits)
    {
      v = v * 10 + static_cast<unsigned>(c - '0');
      if (v > std::numeric_limits<std::uint64_t>::max())
        fail(line, "number too large");
    }
  for (; exp10 > 0; --exp10)
    {
      v *= 10;
      if (v > std::numeric_limits<std::uint64_t>::max())
        fail(line, "number too large");
    }
  return static_cast<std::uint64_t>(v);
}

struct Unit
{
  std::string_view name;
  std::uint64_t factor;
  int exp10;
};

/// Number followed by one of `units`; a unit named "" accepts a bare
/// number.
inline std::uint64_t parse_with_units(std::string_view value, std::initializer_list<Unit> units,
                                      int line)
{
  value = trim(value);
  std::size_t split = value.size();
  while (split > 0 && std::isalpha(static_cast<unsigned char>(value[split - 1])))
    --split;
  // Units like "B/s" contain a slash.
  if (auto slash = value.find('/'); slash != std::string_view::npos)
    {
      split = slash;
      while (split > 0 && std::isalpha(static_cast<unsigned char>(value[split - 1])))
        --split;
    }
  auto number = trim(value.substr(0, split));
  auto unit = trim(value.substr(split));
  for (const auto& u : units)
    if (unit == u.name)
      {
        auto v = parse_decimal(number, u.exp10, line);
        if (u.factor > 1 && v > std::numeric_limits<std::uint64_t>::max() / u.factor)
          fail(line, "value too large");
        return v * u.factor;
      }
  fail(line, "unknown unit '" + std::string(unit) + "' in '" + std::string(value) + "'");
}

inline std::uint64_t parse_size(std::string_view v, int line)
{
  return parse_with_units(
    v, {{"", 1, 0}, {"B", 1, 0}, {"KiB", KiB, 0}, {"MiB", MiB, 0}, {"GiB", GiB, 0}}, line);
}

inline std::uint64_t parse_rate(std::string_view v, int line)
{
  return parse_with_units(v,
                          {{"", 1, 0},
                           {"B/s", 1, 0},
                           {"KB/s", 1, 3},
                           {"MB/s", 1, 6},
                           {"GB/s", 1, 9},
                           {"KiB/s", KiB, 0},
                           {"MiB/s", MiB, 0},
                           {"GiB/s", GiB, 0}},
                          line);
}

inline Duration parse_duration(std::string_view v, int line)
{
  auto ps = parse_with_units(
    v, {{"s", 1, 12}, {"ms", 1, 9}, {"us", 1, 6}, {"ns", 1, 3}, {"ps", 1, 0}}, line);
  if (ps > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    fail(line, "duration too large");
  return Duration(static_cast<std::int64_t>(ps));
}

inline std::uint64_t parse_hz(std::string_view v, int line)
{
  return parse_with_units(
    v, {{"", 1, 0}, {"Hz", 1, 0}, {"kHz", 1, 3}, {"MHz", 1, 6}, {"GHz", 1, 9}}, line);
}

inline std::uint64_t parse_uint(std::string_view v, int line)
{
  v = trim(v);
  if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X'))
    {
      std::uint64_t out = 0;
      auto [p, ec] = std::from_chars(v.data() + 2, v.data() + v.size(), out, 16);
      if (ec != std::errc{} || p != v.data() + v.size())
        fail(line, "bad hex integer '" + std::string(v) + "'");
      return out;
    }
  return parse_decimal(v, 0, line);
}

inline bool parse_switch(std::string_view v, int line)
{
  v = trim(v);
  if (v == "on" || v == "true" || v == "yes" || v == "1")
    return true;
  if (v == "off" || v == "false" || v == "no" || v == "0")
    return false;
  fail(line, "expected on/off, got '" + std::string(v) + "'");
}

inline std::vector<std::string_view> split_words(std::string_view s)
{
  std::vector<std::string_view> out;
  s = trim(s);
  while (!s.empty())
    {
      auto sp = s.find_first_of(" \t");
      out.push_back(s.substr(0, sp));
      if (sp == std::string_view::npos)
        break;
      s = trim(s.substr(sp));
    }
  return out;
}

inline void require_words(const std::vector<std::string_view>& w, std::size_t lo, std::size_t hi,
                          int line)
{
  if (w.size() < lo || w.size() > hi)
    fail(line, "wrong number of operands for '" + std::string(w[0]) + "'");
}

inline KernelKind parse_kernel(std::string_view name, int line)
{
  auto k = parse_kernel_kind(name);
  if (!k)
    fail(line, "unknown kernel '" + std::string(name) + "'");
  return *k;
}

inline bool is_identifier(std::string_view s)
{
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0])))
    return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

inline ScriptOp parse_op(std::string_view text, int line)
{
  auto w = split_words(text);
  if (w.empty())
    fail(line, "empty op");
  ScriptOp op;
  op.line = line;
  auto verb = w[0];
  if (verb == "reprogram")
    {
      require_words(w, 2, 4, line);
      op.kind = OpKind::Reprogram;
      op.kernel = parse_kernel(w[1], line);
      for (std::size_t i = 2; i < w.size(); ++i)
        {
          auto eq = w[i].find('=');
          auto key = w[i].substr(0, eq);
          if (eq == std::string_view::npos)
            fail(line, "expected key=value, got '" + std::string(w[i]) + "'");
          auto val = w[i].substr(eq + 1);
          if (key == "prr")
            op.prr = static_cast<unsigned>(parse_uint(val, line));
          else if (key == "cycles")
            op.cycles = static_cast<std::uint32_t>(parse_uint(val, line));
          else
            fail(line, "unknown reprogram option '" + std::string(key) + "'");
        }
    }
  else if (verb == "reprogram_file")
    {
      require_words(w, 2, 2, line);
      op.kind = OpKind::ReprogramFile;
      op.path = std::string(w[1]);
    }
  else if (verb == "alloc")
    {
      require_words(w, 3, 3, line);
      op.kind = OpKind::Alloc;
      op.buffer = std::string(w[1]);
      op.size = parse_size(w[2], line);
      if (op.size == 0)
        fail(line, "buffer size must be positive");
    }
  else if (verb == "write")
    {
      require_words(w, 3, 3, line);
      op.kind = OpKind::Write;
      op.buffer = std::string(w[1]);
      auto f = w[2];
      if (f == "random")
        op.fill = Fill::Random;
      else if (f == "zero")
        op.fill = Fill::Zero;
      else if (f == "iota")
        op.fill = Fill::Iota;
      else if (f.rfind("byte:", 0) == 0)
        {
          op.fill = Fill::Byte;
          auto v = parse_uint(f.substr(5), line);
          if (v > 255)
            fail(line, "byte fill out of range");
          op.byte = static_cast<std::uint8_t>(v);
        }
      else
        fail(line, "unknown fill '" + std::string(f) + "'");
    }
  else if (verb == "launch")
    {
      require_words(w, 1, 1 + kArgSlots, line);
      op.kind = OpKind::Launch;
      for (std::size_t i = 1; i < w.size(); ++i)
        {
          if (std::isdigit(static_cast<unsigned char>(w[i][0])))
            op.args.emplace_back(parse_uint(w[i], line));
          else
            op.args.emplace_back(std::string(w[i]));
        }
    }
  else if (verb == "wait")
    {
      require_words(w, 1, 1, line);
      op.kind = OpKind::Wait;
    }
  else if (verb == "read" || verb == "free")
    {
      require_words(w, 2, 2, line);
      op.kind = verb == "read" ? OpKind::Read : OpKind::Free;
      op.buffer = std::string(w[1]);
    }
  else if (verb == "sleep")
    {
      require_words(w, 2, 2, line);
      op.kind = OpKind::Sleep;
      op.sleep = parse_duration(w[1], line);
    }
  else
    fail(line, "unknown op '" + std::string(verb) + "'");
  return op;
}

} // namespace config_detail

inline void ScenarioConfig::validate() const
{
  using config_detail::fail;
  system.validate();
  if (vms.empty())
    fail(0, "scenario has no [vm.N] sections");
  if (vms.size() > system.device.prr_count)
    fail(0, std::to_string(vms.size()) + " VMs but only " + std::to_string(system.device.prr_count)
              + " regions");
  for (const auto& vm : vms)
    {
      std::set<std::string> live;
      for (const auto& op : vm.ops)
        {
          auto need = [&](const std::string& name) {
            if (!live.count(name))
              fail(op.line, "vm " + std::to_string(vm.vm) + " uses buffer '" + name
                              + "' before allocating it");
          };
          switch (op.kind)
            {
            case OpKind::Alloc:
              if (!config_detail::is_identifier(op.buffer))
                fail(op.line, "bad buffer name '" + op.buffer + "'");
              if (!live.insert(op.buffer).second)
                fail(op.line, "buffer '" + op.buffer + "' allocated twice");
              break;
            case OpKind::Write:
            case OpKind::Read:
              need(op.buffer);
              break;
            case OpKind::Free:
              need(op.buffer);
              live.erase(op.buffer);
              break;
            case OpKind::Launch:
              for (const auto& a : op.args)
                if (auto* name = std::get_if<std::string>(&a))
                  need(*name);
              break;
            case OpKind::Reprogram:
              if (op.prr && *op.prr > 0xff)
                fail(op.line, "prr override must fit in 8 bits");
              break;
            default:
              break;
            }
        }
    }
}

/// Parse a scenario file's text. Every problem is a ConfigError naming the
/// offending line.
inline ScenarioConfig parse_scenario(std::string_view text)
{
  using namespace config_detail;
  ScenarioConfig cfg;
  auto& dev = cfg.system.device;
  auto& cost = dev.cost;
  auto& vmm = cfg.system.vmm;

  std::string section;
  std::set<std::string> seen;
  std::map<VmId, VmScript> vms;
  int lineno = 0;
  while (!text.empty())
    {
      auto nl = text.find('\n');
      auto raw = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      ++lineno;
      auto line = trim(raw);
      if (auto hash = line.find('#'); hash != std::string_view::npos)
        line = trim(line.substr(0, hash));
      if (line.empty() || line[0] == ';')
        continue;
      if (line.front() == '[')
        {
          if (line.back() != ']')
            fail(lineno, "unterminated section header");
          section = std::string(trim(line.substr(1, line.size() - 2)));
          if (section.rfind("vm.", 0) == 0)
            {
              auto id = static_cast<VmId>(parse_uint(std::string_view(section).substr(3), lineno));
              if (vms.count(id))
                fail(lineno, "duplicate section [" + section + "]");
              vms[id].vm = id;
            }
          else if (section != "device" && section != "cost" && section != "vmm"
                   && section != "scenario")
            fail(lineno, "unknown section [" + section + "]");
          else if (seen.count("[" + section + "]"))
            fail(lineno, "duplicate section [" + section + "]");
          seen.insert("[" + section + "]");
          continue;
        }
      auto eq = line.find('=');
      if (eq == std::string_view::npos)
        fail(lineno, "expected key = value");
      auto key = std::string(trim(line.substr(0, eq)));
      auto value = trim(line.substr(eq + 1));
      if (section.empty())
        fail(lineno, "key '" + key + "' outside any section");
      if (section.rfind("vm.", 0) == 0)
        {
          if (key != "op")
            fail(lineno, "unknown key '" + key + "' in [" + section + "]");
          auto id = static_cast<VmId>(parse_uint(std::string_view(section).substr(3), lineno));
          vms[id].ops.push_back(parse_op(value, lineno));
          continue;
        }
      if (!seen.insert(section + "." + key).second)
        fail(lineno, "duplicate key '" + key + "'");
      auto unknown = [&] { fail(lineno, "unknown key '" + key + "' in [" + section + "]"); };
      if (section == "device")
        {
          if (key == "prr_count")
            dev.prr_count = static_cast<unsigned>(parse_uint(value, lineno));
          else if (key == "ddr_size")
            dev.ddr_size = parse_size(value, lineno);
          else if (key == "device_id")
            dev.device_id = static_cast<std::uint32_t>(parse_uint(value, lineno));
          else if (key == "shell_id")
            dev.shell_id = static_cast<std::uint32_t>(parse_uint(value, lineno));
          else if (key == "range_guard")
            dev.range_guard = parse_switch(value, lineno);
          else if (key == "prr_clock_hz")
            {
              dev.prr_clock_hz.clear();
              std::string_view rest = value;
              while (!rest.empty())
                {
                  auto comma = rest.find(',');
                  dev.prr_clock_hz.push_back(parse_hz(rest.substr(0, comma), lineno));
                  rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
                }
            }
          else
            unknown();
        }
      else if (section == "cost")
        {
          if (key == "clock_hz")
            cost.clock_hz = parse_hz(value, lineno);
          else if (key == "dma_bandwidth")
            cost.dma_bandwidth = parse_rate(value, lineno);
          else if (key == "dma_latency")
            cost.dma_latency = parse_duration(value, lineno);
          else if (key == "pr_bandwidth")
            cost.pr_bandwidth = parse_rate(value, lineno);
          else if (key == "full_reconfig_time")
            cost.full_reconfig_time = parse_duration(value, lineno);
          else if (key == "sw_call_overhead")
            cost.sw_call_overhead = parse_duration(value, lineno);
          else if (key == "staging_copy_bandwidth")
            cost.staging_copy_bandwidth = parse_rate(value, lineno);
          else
            unknown();
        }
      else if (section == "vmm")
        {
          if (key == "segment_size")
            vmm.segment_size = parse_size(value, lineno);
          else if (key == "reprogram_queue_depth")
            vmm.reprogram_queue_depth = parse_uint(value, lineno);
          else if (key == "scrub_on_detach")
            vmm.scrub_on_detach = parse_switch(value, lineno);
          else
            unknown();
        }
      else if (section == "scenario")
        {
          if (key == "seed")
            cfg.seed = parse_uint(value, lineno);
          else if (key == "bitfile_frame_bytes")
            {
              auto v = parse_size(value, lineno);
              if (v > 0xffffffffu)
                fail(lineno, "bitfile_frame_bytes must fit in 32 bits");
              cfg.bitfile_frame_bytes = static_cast<std::uint32_t>(v);
            }
          else
            unknown();
        }
    }
  for (auto& [id, script] : vms)
    cfg.vms.push_back(std::move(script));
  cfg.validate();
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(Errc::ConfigError, "cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

/// Inverse of parse_scenario for the fields it reads; used to write
/// generated scenarios back out.
inline std::string format_scenario(const ScenarioConfig& cfg)
{
  const auto& d = cfg.system.device;
  const auto& c = d.cost;
  std::ostringstream os;
  os << "[device]\nprr_count = " << d.prr_count << "\nddr_size = " << d.ddr_size
     << "\ndevice_id = " << d.device_id << "\nshell_id = " << d.shell_id
     << "\nrange_guard = " << (d.range_guard ? "on" : "off") << '\n';
  if (!d.prr_clock_hz.empty())
    {
      os << "prr_clock_hz = ";
      for (std::size_t i = 0; i < d.prr_clock_hz.size(); ++i)
        os << (i ? "," : "") << d.prr_clock_hz[i];
      os << '\n';
    }
  os << "\n[cost]\nclock_hz = " << c.clock_hz << "\ndma_bandwidth = " << c.dma_bandwidth
     << "\ndma_latency = " << c.dma_latency.count() << "ps\npr_bandwidth = " << c.pr_bandwidth
     << "\nfull_reconfig_time = " << c.full_reconfig_time.count()
     << "ps\nsw_call_overhead = " << c.sw_call_overhead.count()
     << "ps\nstaging_copy_bandwidth = " << c.staging_copy_bandwidth << '\n';
  os << "\n[vmm]\nsegment_size = " << cfg.system.vmm.segment_size
     << "\nreprogram_queue_depth = " << cfg.system.vmm.reprogram_queue_depth
     << "\nscrub_on_detach = " << (cfg.system.vmm.scrub_on_detach ? "on" : "off") << '\n';
  os << "\n[scenario]\nseed = " << cfg.seed << "\nbitfile_frame_bytes = " << cfg.bitfile_frame_bytes
     << '\n';
  for (const auto& vm : cfg.vms)
    {
      os << "\n[vm." << vm.vm << "]\n";
      for (const auto& op : vm.ops)
        {
          os << "op = ";
          switch (op.kind)
            {
            case OpKind::Reprogram:
              os << "reprogram " << kernel_kind_name(op.kernel);
              if (op.prr)
                os << " prr=" << *op.prr;
              if (op.cycles)
                os << " cycles=" << *op.cycles;
              break;
            case OpKind::ReprogramFile: os << "reprogram_file " << op.path; break;
            case OpKind::Alloc: os << "alloc " << op.buffer << ' ' << op.size; break;
            case OpKind::Write:
              os << "write " << op.buffer << ' ';
              switch (op.fill)
                {
                case Fill::Random: os << "random"; break;
                case Fill::Zero: os << "zero"; break;
                case Fill::Iota: os << "iota"; break;
                case Fill::Byte: os << "byte:" << unsigned(op.byte); break;
                }
              break;
            case OpKind::Launch:
              os << "launch";
              for (const auto& a : op.args)
                {
                  if (auto* name = std::get_if<std::string>(&a))
                    os << ' ' << *name;
                  else
                    os << ' ' << std::get<std::uint64_t>(a);
                }
              break;
            case OpKind::Wait: os << "wait"; break;
            case OpKind::Read: os << "read " << op.buffer; break;
            case OpKind::Free: os << "free " << op.buffer; break;
            case OpKind::Sleep: os << "sleep " << op.sleep.count() << "ps"; break;
            }
          os << '\n';
        }
    }
  return os.str();
}

} // namespace vfpga
