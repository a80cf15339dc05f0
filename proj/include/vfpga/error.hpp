// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vfpga
{

/// Error categories shared by every layer. Values are stable: they travel
/// in wire responses and trace records.
enum class Errc : std::uint16_t
{
  Ok = 0,
  EncodingError = 1,
  FormatError = 2,
  CrcError = 3,
  Incompatible = 4,
  Busy = 5,
  InvalidRegion = 6,
  DmaFault = 7,
  GuardFault = 8,
  InvalidSize = 9,
  OutOfDeviceMemory = 10,
  InvalidHandle = 11,
  InvalidAddress = 12,
  NoRegionAvailable = 13,
  AlreadyAttached = 14,
  NotAttached = 15,
  PermissionDenied = 16,
  OutOfBounds = 17,
  ConfigMismatch = 18,
  NoSuchInterface = 19,
  ClosedInterface = 20,
  Unsupported = 21,
  NoKernelLoaded = 22,
  KernelArgError = 23,
  FrozenAccess = 24,
  DeadlockDetected = 25,
  ConfigError = 26,
  ProtocolError = 27,
  IoError = 28,
};

inline constexpr std::string_view errc_name(Errc e) noexcept
{
  switch (e)
    {
    case Errc::Ok: return "ok";
    case Errc::EncodingError: return "EncodingError";
    case Errc::FormatError: return "FormatError";
    case Errc::CrcError: return "CrcError";
    case Errc::Incompatible: return "Incompatible";
    case Errc::Busy: return "Busy";
    case Errc::InvalidRegion: return "InvalidRegion";
    case Errc::DmaFault: return "DmaFault";
    case Errc::GuardFault: return "GuardFault";
    case Errc::InvalidSize: return "InvalidSize";
    case Errc::OutOfDeviceMemory: return "OutOfDeviceMemory";
    case Errc::InvalidHandle: return "InvalidHandle";
    case Errc::InvalidAddress: return "InvalidAddress";
    case Errc::NoRegionAvailable: return "NoRegionAvailable";
    case Errc::AlreadyAttached: return "AlreadyAttached";
    case Errc::NotAttached: return "NotAttached";
    case Errc::PermissionDenied: return "PermissionDenied";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::NoSuchInterface: return "NoSuchInterface";
    case Errc::ClosedInterface: return "ClosedInterface";
    case Errc::Unsupported: return "Unsupported";
    case Errc::NoKernelLoaded: return "NoKernelLoaded";
    case Errc::KernelArgError: return "KernelArgError";
    case Errc::FrozenAccess: return "FrozenAccess";
    case Errc::DeadlockDetected: return "DeadlockDetected";
    case Errc::ConfigError: return "ConfigError";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::IoError: return "IoError";
    }
  return "unknown";
}

inline Errc errc_from_name(std::string_view name)
{
  for (std::uint16_t i = 0; i <= static_cast<std::uint16_t>(Errc::IoError); ++i)
    if (errc_name(static_cast<Errc>(i)) == name)
      return static_cast<Errc>(i);
  throw std::invalid_argument("unknown error name: " + std::string(name));
}

inline bool errc_valid(std::uint16_t raw) noexcept
{ return raw <= static_cast<std::uint16_t>(Errc::IoError); }

/// Exception carrying an error category plus free-form detail.
class Error : public std::runtime_error
{
public:
  explicit Error(Errc code, const std::string& detail = {})
    : std::runtime_error(detail.empty() ? std::string(errc_name(code))
                                        : std::string(errc_name(code)) + ": " + detail),
      code_(code)
  { }

  Errc code() const noexcept
  { return code_; }

private:
  Errc code_;
};

} // namespace vfpga
