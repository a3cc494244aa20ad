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


#include <bwleak/traffic_shaper.hpp>

#include <bwleak/csv.hpp>
#include <bwleak/rng.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace bwleak {

namespace {

std::uint64_t robust_ceil(double x) {
    const double nearest = std::round(x);
    if (std::abs(x - nearest) < 1e-9 * std::max(1.0, nearest))
        return static_cast<std::uint64_t>(nearest);
    return static_cast<std::uint64_t>(std::ceil(x));
}

// First slot index whose start k * period is at or after `t`.
std::uint64_t slot_at_or_after(double t, double period) {
    auto k = static_cast<std::uint64_t>(std::ceil(t / period));
    while (k > 0 && static_cast<double>(k - 1) * period >= t) --k;
    while (static_cast<double>(k) * period < t) ++k;
    return k;
}

void emit_slots(std::vector<DmaTransaction>& out, TxnKind kind, double period,
                std::uint64_t quantum, std::uint64_t duration, double stream_end,
                const auto& claims) {
    std::size_t c = 0;
    for (std::uint64_t k = 0;; ++k) {
        const double start = static_cast<double>(k) * period;
        if (start + static_cast<double>(duration) > stream_end) break;
        DmaTransaction t;
        t.t_start = start;
        t.duration = duration;
        t.bytes = quantum;
        t.kind = kind;
        if (c < claims.size() && claims[c].slot == k) {
            t.authenticity = Authenticity::real;
            t.payload_bytes = claims[c].payload;
            t.layer_id = claims[c].layer_id;
            ++c;
        } else {
            t.authenticity = Authenticity::fake;
        }
        out.push_back(t);
    }
    if (c != claims.size()) throw Error("internal: shaped stream ends before its last real slot");
}

}  // namespace

void ShaperConfig::validate(const NpuConfig& npu) const {
    if (!(target_Bps > 0)) throw Error("shaper target_Bps must be positive");
    if (target_Bps > npu.dram_bandwidth_Bps * (1 + 1e-12))
        throw Error("shaper target_Bps exceeds the DRAM bandwidth");
    if (!(window_us > 0)) throw Error("shaper window_us must be positive");
    if (write_period_us < 0) throw Error("shaper write_period_us must not be negative");
    if (!(max_slowdown >= 1)) throw Error("shaper max_slowdown must be at least 1");
    if (effective_quantum(npu) == 0) throw Error("shaper quantum_bytes must be positive");
}

std::uint64_t ShaperConfig::effective_quantum(const NpuConfig& npu) const {
    return quantum_bytes != 0 ? quantum_bytes : npu.dma_burst_bytes;
}

double ShaperConfig::effective_write_period_us() const {
    return write_period_us != 0 ? write_period_us : 4.0 * window_us;
}

std::uint64_t ShaperConfig::write_quantum(const NpuConfig& npu) const {
    const auto per_period =
        static_cast<std::uint64_t>(std::floor(target_Bps * effective_write_period_us() * 1e-6));
    return std::max(effective_quantum(npu), per_period);
}

double ShaperConfig::slot_cycles(const NpuConfig& npu) const {
    return static_cast<double>(effective_quantum(npu)) * npu.clock_hz / target_Bps;
}

ShapedMemoryPort::ShapedMemoryPort(const NpuConfig& npu, const ShaperConfig& cfg,
                                   std::uint64_t cycle_cap)
    : npu_(npu),
      quantum_(cfg.effective_quantum(npu)),
      write_quantum_(cfg.write_quantum(npu)),
      period_(cfg.slot_cycles(npu)),
      write_period_(cfg.effective_write_period_us() * 1e-6 * npu.clock_hz),
      window_cycles_(window_cycles(cfg.window_us, npu.clock_hz)),
      cap_(cycle_cap) {
    if (npu_.transfer_cycles(write_quantum_) > write_period_ * (1 + 1e-12))
        throw Error("shaper write quantum does not fit in one write period");
}

std::uint64_t ShapedMemoryPort::load(std::uint64_t issue, std::uint64_t bytes, int layer_id) {
    const std::uint64_t arrive = issue + npu_.dma_latency_cycles;
    const std::uint64_t direct = npu_.transfer_cycles(bytes);
    const double rate = static_cast<double>(quantum_) / period_;  // bytes per cycle
    const std::uint64_t served =
        rate >= npu_.bytes_per_cycle() ? direct
                                       : std::max(direct, robust_ceil(static_cast<double>(bytes) / rate));
    const std::uint64_t ready = arrive + served;
    stall_ += served - direct;
    if (ready > cap_)
        throw InfeasibleTarget("shaped run exceeds the cycle cap at layer " +
                               std::to_string(layer_id));
    std::uint64_t slot = std::max(next_read_slot_, slot_at_or_after(static_cast<double>(arrive), period_));
    for (std::uint64_t left = bytes; left > 0; ++slot) {
        const std::uint64_t take = std::min(left, quantum_);
        read_claims_.push_back({slot, take, layer_id});
        left -= take;
    }
    next_read_slot_ = slot;
    return ready;
}

void ShapedMemoryPort::store(std::uint64_t ready, std::uint64_t bytes, int layer_id) {
    if (bytes == 0) return;
    std::uint64_t slot =
        std::max(next_write_slot_, slot_at_or_after(static_cast<double>(ready), write_period_));
    for (std::uint64_t left = bytes; left > 0; ++slot) {
        const std::uint64_t take = std::min(left, write_quantum_);
        write_claims_.push_back({slot, take, layer_id});
        left -= take;
    }
    next_write_slot_ = slot;
    const double end = static_cast<double>(slot - 1) * write_period_ +
                       static_cast<double>(npu_.transfer_cycles(write_quantum_));
    last_write_end_ = std::max(last_write_end_, robust_ceil(end));
}

void ShapedMemoryPort::finish(std::uint64_t end_cycle) {
    const std::uint64_t read_dur = npu_.transfer_cycles(quantum_);
    const std::uint64_t write_dur = npu_.transfer_cycles(write_quantum_);
    double last = static_cast<double>(std::max(end_cycle, last_write_end_));
    if (!read_claims_.empty())
        last = std::max(last, static_cast<double>(read_claims_.back().slot) * period_ +
                                  static_cast<double>(read_dur));
    const double windows = std::max(1.0, std::ceil(last / window_cycles_ - 1e-12));
    const double end = windows * window_cycles_;
    stream_end_ = robust_ceil(end);
    emit_slots(txns_, TxnKind::read, period_, quantum_, read_dur, end, read_claims_);
    emit_slots(txns_, TxnKind::write, write_period_, write_quantum_, write_dur, end, write_claims_);
    read_claims_.clear();
    write_claims_.clear();
}

ShapedResult shape(const ModelSpec& model, const TileSchedule& schedule, const NpuConfig& npu,
                   const ShaperConfig& cfg, std::uint64_t seed) {
    npu.validate();
    cfg.validate(npu);
    check_schedule(model, schedule, npu);
    const double cpw = window_cycles(cfg.window_us, npu.clock_hz);
    Rng rng(seed);
    const std::uint64_t start =
        rng.below(std::max<std::uint64_t>(1, static_cast<std::uint64_t>(cpw)));

    DirectMemoryPort direct(npu);
    const std::uint64_t plain_end = run_layers(model, schedule, npu, start, direct, nullptr);
    ShapedResult r;
    r.start_cycle = start;
    r.unshaped_total_cycles = plain_end - start;
    for (const auto& t : direct.take_transactions())
        (t.kind == TxnKind::read ? r.demand_read_bytes : r.demand_write_bytes) += t.payload_bytes;

    const double cap = static_cast<double>(start) +
                       cfg.max_slowdown * static_cast<double>(r.unshaped_total_cycles);
    ShapedMemoryPort port(npu, cfg, static_cast<std::uint64_t>(cap));
    const std::uint64_t end = run_layers(model, schedule, npu, start, port, &r.layer_spans);
    r.txns = port.take_transactions();
    assign_span_windows(r.layer_spans, cpw);
    r.shaped_total_cycles = end - start;
    r.stall_cycles = port.stall_cycles();
    r.stream_end_cycle = port.stream_end_cycle();
    r.write_backlog_cycles = port.last_write_end() > end ? port.last_write_end() - end : 0;
    r.overhead = overhead(r.unshaped_total_cycles, r.shaped_total_cycles);
    return r;
}

BandwidthTrace shaped_trace(const ShapedResult& result, double window_us, double clock_hz) {
    const double cpw = window_cycles(window_us, clock_hz);
    const auto n = static_cast<std::size_t>(
        std::ceil(static_cast<double>(result.stream_end_cycle) / cpw - 1e-12));
    return sample_counter(result.txns, window_us, clock_hz, n);
}

double overhead(std::uint64_t unshaped_cycles, std::uint64_t shaped_cycles) {
    if (unshaped_cycles == 0 || shaped_cycles == 0)
        throw Error("overhead needs positive cycle counts");
    return static_cast<double>(shaped_cycles) / static_cast<double>(unshaped_cycles) - 1.0;
}

double peak_read_Bps(const BandwidthTrace& trace) {
    std::uint64_t peak = 0;
    for (auto v : trace.read_bytes) peak = std::max(peak, v);
    return static_cast<double>(peak) / (trace.window_us * 1e-6);
}

double mean_read_Bps(const BandwidthTrace& trace) {
    if (trace.size() == 0) return 0;
    return static_cast<double>(trace.total_read()) /
           (static_cast<double>(trace.size()) * trace.window_us * 1e-6);
}

double max_window_deviation(const BandwidthTrace& trace, double target_Bps) {
    const double expect = target_Bps * trace.window_us * 1e-6;
    double worst = 0;
    const std::size_t n = trace.size() > 1 ? trace.size() - 1 : trace.size();
    for (std::size_t i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(static_cast<double>(trace.read_bytes[i]) - expect));
    return worst;
}

void write_shaper_report(std::ostream& out, const std::vector<ShaperReportRow>& rows) {
    out << "model      target_MBps  quantum_B  stall_cycles  overhead  max_dev_B\n";
    for (const auto& r : rows) {
        std::string line = r.model;
        line.resize(std::max<std::size_t>(line.size() + 1, 11), ' ');
        out << line << format_fixed(r.target_Bps / 1e6, 3) << "  " << r.quantum_bytes << "  "
            << r.stall_cycles << "  " << format_fixed(r.overhead, 4) << "  "
            << format_fixed(r.max_deviation, 1) << '\n';
    }
}

void write_shaper_csv(std::ostream& out, const std::vector<ShaperReportRow>& rows) {
    out << "model,target_Bps,quantum_bytes,stall_cycles,overhead,max_deviation_bytes\n";
    for (const auto& r : rows)
        out << r.model << ',' << format_double(r.target_Bps) << ',' << r.quantum_bytes << ','
            << r.stall_cycles << ',' << format_double(r.overhead) << ','
            << format_double(r.max_deviation) << '\n';
}

}  // namespace bwleak
