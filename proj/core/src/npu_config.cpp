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

#include <bwleak/npu_config.hpp>

#include <bwleak/error.hpp>

#include <cmath>

namespace bwleak {

void NpuConfig::validate() const {
    if (!(clock_hz > 0)) throw Error("npu: clock_hz must be positive");
    if (pe_count == 0) throw Error("npu: pe_count must be positive");
    if (weight_scratchpad_bytes == 0) throw Error("npu: weight_scratchpad_bytes must be positive");
    if (!(dram_bandwidth_Bps > 0)) throw Error("npu: dram_bandwidth_Bps must be positive");
    if (dma_burst_bytes == 0) throw Error("npu: dma_burst_bytes must be positive");
    if (dma_burst_bytes > weight_scratchpad_bytes)
        throw Error("npu: dma_burst_bytes exceeds weight_scratchpad_bytes");
}

std::uint64_t NpuConfig::transfer_cycles(std::uint64_t bytes) const {
    if (bytes == 0) return 0;
    // Guard against 1 - ulp results that would round an exact multiple up.
    const double raw = static_cast<double>(bytes) / bytes_per_cycle();
    const double nearest = std::round(raw);
    if (std::abs(raw - nearest) < 1e-9 * std::max(1.0, nearest))
        return static_cast<std::uint64_t>(nearest);
    return static_cast<std::uint64_t>(std::ceil(raw));
}

}  // namespace bwleak
