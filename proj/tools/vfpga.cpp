// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

// vfpga: scenario runner, microbenchmarks, attack scenarios, bitfile
// compiler, trace replay and a standalone broker.
//
// Exit codes: 0 pass, 2 configuration error, 3 runtime error, 4 attack
// verdict failed, 5 scenario deadlock, 6 replay mismatch.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "vfpga/vfpga.hpp"

namespace
{

using namespace vfpga;

enum Exit : int
{
  kPass = 0,
  kConfig = 2,
  kRuntime = 3,
  kVerdict = 4,
  kDeadlock = 5,
  kMismatch = 6,
};

struct Options
{
  std::string config;
  std::string trace;
  std::string report;
  std::optional<std::uint64_t> seed;
  std::string guard;
  std::string mode = "in-process";
  std::string connect;
  bool no_native = false;

  std::string which;
  std::string attack;

  std::string kernel;
  unsigned prr = 0;
  std::optional<std::uint32_t> cycles;
  std::optional<std::uint32_t> frame_bytes;
  std::string out;

  std::string socket;
};

ScenarioConfig load_config(const Options& o)
{
  ScenarioConfig cfg;
  if (!o.config.empty())
    cfg = load_scenario(o.config);
  if (o.seed)
    cfg.seed = *o.seed;
  if (o.guard == "on")
    cfg.system.device.range_guard = true;
  else if (o.guard == "off")
    cfg.system.device.range_guard = false;
  cfg.system.validate();
  return cfg;
}

void emit(const std::string& text, const std::string& path)
{
  std::cout << text;
  if (path.empty())
    return;
  std::ofstream out(path, std::ios::binary);
  if (!(out << text))
    throw Error(Errc::IoError, "cannot write " + path);
}

std::string footer(std::uint64_t digest, SimTime t)
{ return "# end digest=" + hex64(digest) + " time=" + std::to_string(t.count()) + "\n"; }

int cmd_run(const Options& o)
{
  auto cfg = load_config(o);
  if (o.config.empty())
    throw Error(Errc::ConfigError, "run needs --config");
  cfg.validate();
  bench::RunOutcome outcome;
  if (!o.connect.empty())
    {
      SocketTransport t(o.connect);
      outcome = bench::run_remote(cfg, t);
    }
  else
    outcome = bench::run_scenario(cfg,
                                  o.mode == "wire" ? bench::RunMode::Wire
                                                   : bench::RunMode::InProcess,
                                  !o.no_native);
  emit(outcome.report.to_text(), o.report);
  if (!o.trace.empty())
    {
      std::ofstream out(o.trace, std::ios::binary);
      out << outcome.trace << footer(outcome.report.digest, outcome.final_time);
      if (!out)
        throw Error(Errc::IoError, "cannot write " + o.trace);
    }
  return kPass;
}

int cmd_replay(const Options& o)
{
  if (o.trace.empty())
    throw Error(Errc::ConfigError, "replay needs --trace");
  auto cfg = load_config(o);
  std::ifstream in(o.trace, std::ios::binary);
  if (!in)
    throw Error(Errc::IoError, "cannot read " + o.trace);
  std::stringstream ss;
  ss << in.rdbuf();
  auto text = ss.str();
  auto result = replay(text, cfg.system);

  std::ostringstream os;
  os << "calls = " << result.calls << '\n';
  os << "digest = " << hex64(result.digest) << '\n';
  os << "final_time_ps = " << result.final_time.count() << '\n';
  int rc = kPass;
  auto pos = text.rfind("# end ");
  if (pos != std::string::npos)
    {
      auto expected = text.substr(pos, text.find('\n', pos) - pos + 1);
      bool match = expected == footer(result.digest, result.final_time);
      os << "recorded = " << text.substr(pos + 6, expected.size() - 7) << '\n';
      os << "match = " << (match ? "yes" : "no") << '\n';
      if (!match)
        rc = kMismatch;
    }
  emit(os.str(), o.report);
  return rc;
}

int cmd_microbench(const Options& o)
{
  auto cfg = load_config(o);
  const auto& dev = cfg.system.device;
  std::ostringstream os;
  os << std::fixed;
  if (o.which == "pcie")
    {
      os << "dma_bandwidth = " << std::setprecision(0) << dev.cost.dma_bandwidth << '\n';
      for (const auto& s : bench::microbench_pcie(dev, bench::default_pcie_sizes()))
        os << "pcie." << s.bytes << ".rate = " << std::setprecision(1) << s.rate
           << "\npcie." << s.bytes << ".ratio = " << std::setprecision(6)
           << s.rate / dev.cost.dma_bandwidth << '\n';
    }
  else if (o.which == "freq")
    {
      for (const auto& p : bench::microbench_freq(dev))
        os << "freq.prr." << p.prr << ".hz = " << std::setprecision(1) << p.hz() << '\n';
    }
  else
    {
      auto p = bench::microbench_membw(dev);
      os << "membw.bytes = " << p.bytes_moved << "\nmembw.kernel_ps = " << p.elapsed.count()
         << "\nmembw.rate = " << std::setprecision(1) << p.bandwidth() << '\n';
    }
  emit(os.str(), o.report);
  return kPass;
}

int cmd_attack(const Options& o)
{
  auto cfg = load_config(o);
  auto kind = bench::parse_attack(o.attack);
  if (!kind)
    throw Error(Errc::ConfigError, "unknown attack '" + o.attack + "'");
  auto v = bench::run_attack(*kind, cfg.system, cfg.system.device.range_guard, cfg.seed);
  emit(v.to_text(), o.report);
  return v.pass ? kPass : kVerdict;
}

int cmd_compile(const Options& o)
{
  auto cfg = load_config(o);
  auto kind = parse_kernel_kind(o.kernel);
  if (!kind)
    throw Error(Errc::ConfigError, "unknown kernel '" + o.kernel + "'");
  if (o.prr >= cfg.system.device.prr_count)
    throw Error(Errc::ConfigError, "prr " + std::to_string(o.prr) + " does not exist");
  auto bits = bench::compile(*kind, cfg.system.device, o.prr,
                             o.frame_bytes.value_or(cfg.bitfile_frame_bytes), o.cycles);
  std::ofstream out(o.out, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
  if (!out)
    throw Error(Errc::IoError, "cannot write " + o.out);
  std::cout << "wrote " << bits.size() << " bytes to " << o.out << '\n';
  return kPass;
}

int cmd_serve(const Options& o)
{
  auto cfg = load_config(o);
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  VmmService service(cfg.system);
  VmmServer server(service, o.socket);
  std::cout << "listening on " << server.path() << " config=" << hex64(cfg.system.fingerprint())
            << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  return kPass;
}

int exit_for(Errc e)
{
  switch (e)
    {
    case Errc::ConfigError:
    case Errc::ConfigMismatch:
      return kConfig;
    case Errc::DeadlockDetected:
      return kDeadlock;
    default:
      return kRuntime;
    }
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Multi-tenant FPGA virtualization simulator"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Scenario file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the scenario seed");
    sub->add_option("--guard", o.guard, "Per-region DDR range guard")
      ->check(CLI::IsMember({"on", "off"}));
    sub->add_option("--report", o.report, "Also write the report to this file");
  };

  auto* run = app.add_subcommand("run", "Run a scenario and print its breakdown report");
  common(run);
  run->add_option("--trace", o.trace, "Write the interposition trace here");
  run->add_option("--mode", o.mode, "Broker transport")
    ->check(CLI::IsMember({"in-process", "wire"}));
  run->add_option("--connect", o.connect, "Use a broker already serving on this socket");
  run->add_flag("--no-native", o.no_native, "Skip the native baseline run");

  auto* micro = app.add_subcommand("microbench", "PCIe, memory bandwidth or clock probe");
  common(micro);
  micro->add_option("which", o.which)->required()->check(CLI::IsMember({"pcie", "membw", "freq"}));

  auto* attack = app.add_subcommand("attack", "Run an isolation attack and judge the outcome");
  common(attack);
  attack->add_option("scenario", o.attack)
    ->required()
    ->check(CLI::IsMember({"cross_reprogram", "cross_read", "hw_corrupt"}));

  auto* compile = app.add_subcommand("compile", "Write a partial bitfile for one region");
  common(compile);
  compile->add_option("--kernel", o.kernel)->required();
  compile->add_option("--prr", o.prr)->required();
  compile->add_option("--cycles", o.cycles, "Cycles per work item");
  compile->add_option("--frame-bytes", o.frame_bytes, "Configuration frame size");
  compile->add_option("--out", o.out)->required();

  auto* rep = app.add_subcommand("replay", "Re-execute a recorded trace and compare");
  common(rep);
  rep->add_option("--trace", o.trace)->required()->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "Serve the broker on a Unix socket until signalled");
  common(serve);
  serve->add_option("--socket", o.socket)->required();

  CLI11_PARSE(app, argc, argv);

  try
    {
      if (*run)
        return cmd_run(o);
      if (*micro)
        return cmd_microbench(o);
      if (*attack)
        return cmd_attack(o);
      if (*compile)
        return cmd_compile(o);
      if (*rep)
        return cmd_replay(o);
      return cmd_serve(o);
    }
  catch (const Error& e)
    {
      std::cerr << "vfpga: " << e.what() << '\n';
      return exit_for(e.code());
    }
  catch (const std::exception& e)
    {
      std::cerr << "vfpga: " << e.what() << '\n';
      return kRuntime;
    }
}
