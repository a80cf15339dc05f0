// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vfpga/bench.hpp"
#include "vfpga/bitstream.hpp"
#include "vfpga/bytes.hpp"
#include "vfpga/client.hpp"
#include "vfpga/config.hpp"
#include "vfpga/crc32.hpp"
#include "vfpga/device.hpp"
#include "vfpga/error.hpp"
#include "vfpga/guest.hpp"
#include "vfpga/kernels.hpp"
#include "vfpga/mmu.hpp"
#include "vfpga/service.hpp"
#include "vfpga/sim.hpp"
#include "vfpga/trace.hpp"
#include "vfpga/transport.hpp"
#include "vfpga/vmm.hpp"
#include "vfpga/wire.hpp"
