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

#include <bwleak/model_catalog.hpp>
#include <bwleak/npu_config.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bwleak {

enum class TxnKind { read, write };
enum class Authenticity { real, fake };

struct DmaTransaction {
    double t_start = 0;              // cycles
    std::uint64_t duration = 0;      // cycles, ceil(bytes / bytes_per_cycle)
    std::uint64_t bytes = 0;         // bytes on the bus, padding included
    TxnKind kind = TxnKind::read;
    Authenticity authenticity = Authenticity::real;
    // Evaluation-only metadata; never serialized into attacker-facing traces.
    std::uint64_t payload_bytes = 0;  // real demand bytes carried
    int layer_id = -1;

    double t_end() const { return t_start + static_cast<double>(duration); }
};

/// Byte counts per sampling window: what the hypervisor-visible counter reports.
struct BandwidthTrace {
    double window_us = 4.0;
    std::vector<std::uint64_t> read_bytes;
    std::vector<std::uint64_t> write_bytes;

    std::size_t size() const { return read_bytes.size(); }
    std::uint64_t total_read() const;
    std::uint64_t total_write() const;
    /// read + write per window, as a numeric series.
    std::vector<double> combined() const;
    std::vector<double> reads() const;

    bool operator==(const BandwidthTrace&) const = default;
};

struct LayerSpan {
    int layer_id = 0;
    LayerKind kind = LayerKind::conv;
    std::uint64_t start_window = 0;  // inclusive
    std::uint64_t end_window = 0;    // exclusive
    std::uint64_t start_cycle = 0;
    std::uint64_t end_cycle = 0;

    bool operator==(const LayerSpan&) const = default;
};

struct SimResult {
    BandwidthTrace trace;
    std::vector<DmaTransaction> txns;
    std::vector<LayerSpan> layer_spans;  // every layer, in execution order
    std::uint64_t total_cycles = 0;      // end of the last layer's compute
};

struct SimOptions {
    double window_us = 4.0;
    /// When set, inference starts at this cycle instead of a seed-derived
    /// offset within the first sampling window.
    std::optional<std::uint64_t> start_cycle;
};

/// Cycles per sampling window.
double window_cycles(double window_us, double clock_hz);

/// Closed-form cycles of one weight-loading layer under double buffering:
/// (o + Ld) + (n - 1) * max(o + Ld, c) + c.
std::uint64_t layer_cycles(const LayerSpec& layer, const TileConfig& cfg, const NpuConfig& npu);
/// Cycles of a compute-only (pool/activation/residual_add) layer.
std::uint64_t compute_only_cycles(const LayerSpec& layer, const NpuConfig& npu);
/// Compute cycles of one tile, setup included.
std::uint64_t tile_compute_cycles(const LayerSpec& layer, const TileConfig& cfg,
                                  const NpuConfig& npu);

/// Memory interface used by the execution loop. Loads return the cycle at
/// which the requested tile is resident; stores are posted.
class MemoryPort {
public:
    virtual ~MemoryPort() = default;
    virtual std::uint64_t load(std::uint64_t issue_cycle, std::uint64_t bytes, int layer_id) = 0;
    virtual void store(std::uint64_t ready_cycle, std::uint64_t bytes, int layer_id) = 0;
    /// Called once after the last layer with the compute end cycle.
    virtual void finish(std::uint64_t end_cycle) = 0;
    virtual std::vector<DmaTransaction> take_transactions() = 0;
};

/// Demand-driven port: each load is one read transaction after a fixed DMA
/// latency; stores are serialized on the write channel.
class DirectMemoryPort : public MemoryPort {
public:
    explicit DirectMemoryPort(const NpuConfig& npu) : npu_(npu) {}
    std::uint64_t load(std::uint64_t issue_cycle, std::uint64_t bytes, int layer_id) override;
    void store(std::uint64_t ready_cycle, std::uint64_t bytes, int layer_id) override;
    void finish(std::uint64_t) override {}
    std::vector<DmaTransaction> take_transactions() override { return std::move(txns_); }

private:
    NpuConfig npu_;
    std::uint64_t write_free_ = 0;
    std::vector<DmaTransaction> txns_;
};

/// Runs the layer loop against an arbitrary memory port. Returns the compute
/// end cycle and fills `spans`.
std::uint64_t run_layers(const ModelSpec& model, const TileSchedule& schedule,
                         const NpuConfig& npu, std::uint64_t start_cycle, MemoryPort& port,
                         std::vector<LayerSpan>* spans);

/// Fills the window fields of `spans` from their cycle fields.
void assign_span_windows(std::vector<LayerSpan>& spans, double window_cycles);

/// Validates a schedule against a model and NPU; throws bwleak::Error.
void check_schedule(const ModelSpec& model, const TileSchedule& schedule, const NpuConfig& npu);

SimResult simulate_inference(const ModelSpec& model, const TileSchedule& schedule,
                             const NpuConfig& npu, std::uint64_t seed, SimOptions opts = {});

/// Attributes transaction bytes to windows pro rata by cycle overlap, with
/// per-transaction cumulative rounding so every byte is counted once.
/// `min_windows` extends the trace with trailing zeros.
BandwidthTrace sample_counter(const std::vector<DmaTransaction>& txns, double window_us,
                              double clock_hz, std::size_t min_windows = 0);

/// Multiplicative uniform noise in [1 - amplitude, 1 + amplitude] per window.
BandwidthTrace inject_noise(const BandwidthTrace& trace, double amplitude, std::uint64_t seed);

/// Window index where each weight-loading layer after the first begins.
std::vector<std::uint64_t> true_boundaries(const ModelSpec& model, const SimResult& sim);

void write_trace_csv(std::ostream& out, const BandwidthTrace& trace);
BandwidthTrace read_trace_csv(std::istream& in, const std::string& source);
void write_spans_csv(std::ostream& out, const std::vector<LayerSpan>& spans);
std::vector<LayerSpan> read_spans_csv(std::istream& in, const std::string& source);

}  // namespace bwleak
