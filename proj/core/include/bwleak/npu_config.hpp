/*
 * Copyright 2026 The bwleak Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>

namespace bwleak {

/// Resources of the simulated accelerator.
///
/// Timing parameters beyond the five core fields model the fixed per-tile
/// costs of a real DMA engine and GEMM core: without them the cheapest
/// schedule degenerates to the smallest possible tile.
struct NpuConfig {
    double clock_hz = 100e6;
    std::uint64_t pe_count = 512;
    std::uint64_t weight_scratchpad_bytes = 64 * 1024;
    double dram_bandwidth_Bps = 150e6;
    std::uint64_t dma_burst_bytes = 256;
    /// Idle cycles between issuing a tile load and its first data beat.
    std::uint64_t dma_latency_cycles = 25;
    /// Fixed cycles per tile for instruction issue and pipeline fill.
    std::uint64_t tile_setup_cycles = 100;

    /// Throws bwleak::Error when a field is out of range.
    void validate() const;

    double bytes_per_cycle() const { return dram_bandwidth_Bps / clock_hz; }

    /// Cycles needed to move `bytes` at the DRAM rate (rounded up).
    std::uint64_t transfer_cycles(std::uint64_t bytes) const;

    bool operator==(const NpuConfig&) const = default;
};

}  // namespace bwleak
