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

#include <bwleak/error.hpp>
#include <bwleak/model_catalog.hpp>
#include <bwleak/npu_config.hpp>
#include <bwleak/npu_sim.hpp>

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace bwleak {

struct ShaperConfig {
    double target_Bps = 0;
    /// 0 selects the NPU's DMA burst size.
    std::uint64_t quantum_bytes = 0;
    /// 0 selects four sampling windows.
    double write_period_us = 0;
    /// Sampling window the shaped stream is aligned to.
    double window_us = 4.0;
    /// A shaped run longer than this many times the unshaped run is
    /// reported as infeasible.
    double max_slowdown = 50.0;

    /// Throws bwleak::Error when a field is out of range for `npu`.
    void validate(const NpuConfig& npu) const;
    std::uint64_t effective_quantum(const NpuConfig& npu) const;
    double effective_write_period_us() const;
    /// Bytes per scheduled write slot: the read rate times the write period,
    /// at least one quantum.
    std::uint64_t write_quantum(const NpuConfig& npu) const;
    /// Cycles between consecutive read slots.
    double slot_cycles(const NpuConfig& npu) const;
};

/// The target cannot sustain the workload within the configured cycle cap.
class InfeasibleTarget : public Error {
public:
    using Error::Error;
};

struct ShapedResult {
    std::vector<DmaTransaction> txns;  // time-ordered per channel, fake slots included
    std::vector<LayerSpan> layer_spans;
    std::uint64_t stall_cycles = 0;
    std::uint64_t shaped_total_cycles = 0;    // inference cycles under shaping
    std::uint64_t unshaped_total_cycles = 0;  // inference cycles of the same run unshaped
    std::uint64_t start_cycle = 0;
    /// End of the observable stream: a whole number of windows covering the
    /// compute end and every real write.
    std::uint64_t stream_end_cycle = 0;
    /// Cycles the last real write trails the compute end.
    std::uint64_t write_backlog_cycles = 0;
    std::uint64_t demand_read_bytes = 0;
    std::uint64_t demand_write_bytes = 0;
    double overhead = 0;
};

/// Memory port that serves every load through a constant-rate slot stream.
///
/// Load timing follows the fluid service curve of the slot stream: data
/// arriving at the DRAM rate is drained at min(target, DRAM rate), so a
/// target at or above the DRAM rate never stalls. Real quanta are assigned
/// FIFO to the first free slots at or after the data becomes available.
class ShapedMemoryPort : public MemoryPort {
public:
    ShapedMemoryPort(const NpuConfig& npu, const ShaperConfig& cfg, std::uint64_t cycle_cap);
    std::uint64_t load(std::uint64_t issue_cycle, std::uint64_t bytes, int layer_id) override;
    void store(std::uint64_t ready_cycle, std::uint64_t bytes, int layer_id) override;
    void finish(std::uint64_t end_cycle) override;
    std::vector<DmaTransaction> take_transactions() override { return std::move(txns_); }

    std::uint64_t stall_cycles() const { return stall_; }
    std::uint64_t stream_end_cycle() const { return stream_end_; }
    std::uint64_t last_write_end() const { return last_write_end_; }

private:
    struct Claim {
        std::uint64_t slot;
        std::uint64_t payload;
        int layer_id;
    };

    NpuConfig npu_;
    std::uint64_t quantum_;
    std::uint64_t write_quantum_;
    double period_;        // read slot spacing, cycles
    double write_period_;  // write slot spacing, cycles
    double window_cycles_;
    std::uint64_t cap_;
    std::uint64_t stall_ = 0;
    std::uint64_t next_read_slot_ = 0;
    std::uint64_t next_write_slot_ = 0;
    std::uint64_t last_write_end_ = 0;
    std::uint64_t stream_end_ = 0;
    std::vector<Claim> read_claims_;
    std::vector<Claim> write_claims_;
    std::vector<DmaTransaction> txns_;
};

/// Runs the model with shaping inside the execution loop. The start cycle
/// is derived from `seed` exactly as simulate_inference does.
ShapedResult shape(const ModelSpec& model, const TileSchedule& schedule, const NpuConfig& npu,
                   const ShaperConfig& cfg, std::uint64_t seed);

/// Attacker-visible trace of a shaped run.
BandwidthTrace shaped_trace(const ShapedResult& result, double window_us, double clock_hz);

/// shaped / unshaped - 1.
double overhead(std::uint64_t unshaped_cycles, std::uint64_t shaped_cycles);

/// Peak read bytes in any window, as bytes per second.
double peak_read_Bps(const BandwidthTrace& trace);
/// Total read bytes over the whole trace duration, as bytes per second.
double mean_read_Bps(const BandwidthTrace& trace);

/// Largest |bytes - target * window| over the read channel, ignoring the
/// final window when it is cut short by the end of the stream.
double max_window_deviation(const BandwidthTrace& trace, double target_Bps);

struct ShaperReportRow {
    std::string model;
    double target_Bps = 0;
    std::uint64_t quantum_bytes = 0;
    std::uint64_t stall_cycles = 0;
    double overhead = 0;
    double max_deviation = 0;
};

void write_shaper_report(std::ostream& out, const std::vector<ShaperReportRow>& rows);
void write_shaper_csv(std::ostream& out, const std::vector<ShaperReportRow>& rows);

}  // namespace bwleak
