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

#include <bwleak/npu_sim.hpp>

#include <bwleak/csv.hpp>
#include <bwleak/error.hpp>
#include <bwleak/rng.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace bwleak {

std::uint64_t BandwidthTrace::total_read() const {
    std::uint64_t s = 0;
    for (auto v : read_bytes) s += v;
    return s;
}

std::uint64_t BandwidthTrace::total_write() const {
    std::uint64_t s = 0;
    for (auto v : write_bytes) s += v;
    return s;
}

std::vector<double> BandwidthTrace::combined() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i)
        out[i] = static_cast<double>(read_bytes[i] + write_bytes[i]);
    return out;
}

std::vector<double> BandwidthTrace::reads() const {
    return {read_bytes.begin(), read_bytes.end()};
}

double window_cycles(double window_us, double clock_hz) { return window_us * clock_hz * 1e-6; }

std::uint64_t tile_compute_cycles(const LayerSpec& layer, const TileConfig& cfg,
                                  const NpuConfig& npu) {
    const std::uint64_t macs = tile_macs(layer, cfg);
    return (macs + npu.pe_count - 1) / npu.pe_count + npu.tile_setup_cycles;
}

std::uint64_t compute_only_cycles(const LayerSpec& layer, const NpuConfig& npu) {
    return (layer.macs() + npu.pe_count - 1) / npu.pe_count + npu.tile_setup_cycles;
}

std::uint64_t layer_cycles(const LayerSpec& layer, const TileConfig& cfg, const NpuConfig& npu) {
    if (!layer.loads_weights()) return compute_only_cycles(layer, npu);
    const TileShape shape = tiles_for(layer, cfg);
    const std::uint64_t load = npu.dma_latency_cycles + npu.transfer_cycles(shape.bytes_per_tile);
    const std::uint64_t compute = tile_compute_cycles(layer, cfg, npu);
    return load + (shape.num_tiles - 1) * std::max(load, compute) + compute;
}

std::uint64_t DirectMemoryPort::load(std::uint64_t issue, std::uint64_t bytes, int layer_id) {
    DmaTransaction t;
    t.t_start = static_cast<double>(issue + npu_.dma_latency_cycles);
    t.duration = npu_.transfer_cycles(bytes);
    t.bytes = bytes;
    t.payload_bytes = bytes;
    t.kind = TxnKind::read;
    t.layer_id = layer_id;
    txns_.push_back(t);
    return issue + npu_.dma_latency_cycles + t.duration;
}

void DirectMemoryPort::store(std::uint64_t ready, std::uint64_t bytes, int layer_id) {
    if (bytes == 0) return;
    DmaTransaction t;
    const std::uint64_t start = std::max(ready, write_free_);
    t.t_start = static_cast<double>(start);
    t.duration = npu_.transfer_cycles(bytes);
    t.bytes = bytes;
    t.payload_bytes = bytes;
    t.kind = TxnKind::write;
    t.layer_id = layer_id;
    txns_.push_back(t);
    write_free_ = start + t.duration;
}

void check_schedule(const ModelSpec& model, const TileSchedule& schedule, const NpuConfig& npu) {
    for (const auto& [id, cfg] : schedule.per_layer) {
        if (id < 0 || static_cast<std::size_t>(id) >= model.layers.size() ||
            !model.layers[id].loads_weights())
            throw Error("schedule names layer " + std::to_string(id) +
                        " which is not a weight-loading layer of " + model.name);
    }
    for (const auto& l : model.layers) {
        if (!l.loads_weights()) continue;
        auto it = schedule.per_layer.find(l.id);
        if (it == schedule.per_layer.end())
            throw Error("schedule misses layer " + std::to_string(l.id) + " of " + model.name);
        const TileShape s = tiles_for(l, it->second);
        if (s.bytes_per_tile > npu.weight_scratchpad_bytes)
            throw Error("layer " + std::to_string(l.id) + ": tile " + to_string(it->second) +
                        " (" + std::to_string(s.bytes_per_tile) +
                        " B) exceeds the weight scratchpad");
    }
}

std::uint64_t run_layers(const ModelSpec& model, const TileSchedule& schedule,
                         const NpuConfig& npu, std::uint64_t start_cycle, MemoryPort& port,
                         std::vector<LayerSpan>* spans) {
    std::uint64_t t = start_cycle;
    for (const auto& layer : model.layers) {
        const std::uint64_t begin = t;
        if (layer.loads_weights()) {
            const TileConfig& cfg = schedule.per_layer.at(layer.id);
            const TileShape shape = tiles_for(layer, cfg);
            const std::uint64_t compute = tile_compute_cycles(layer, cfg, npu);
            // Two weight buffers: tile k+1 streams in while tile k computes.
            std::uint64_t ready = port.load(begin, shape.bytes_per_tile, layer.id);
            std::uint64_t compute_end = begin;
            for (std::uint64_t k = 0; k < shape.num_tiles; ++k) {
                const std::uint64_t start = std::max(ready, compute_end);
                if (k + 1 < shape.num_tiles) ready = port.load(start, shape.bytes_per_tile, layer.id);
                compute_end = start + compute;
            }
            t = compute_end;
            port.store(t, layer.output_bytes(), layer.id);
        } else {
            t = begin + compute_only_cycles(layer, npu);
        }
        if (spans != nullptr) {
            LayerSpan s;
            s.layer_id = layer.id;
            s.kind = layer.kind;
            s.start_cycle = begin;
            s.end_cycle = t;
            spans->push_back(s);
        }
    }
    port.finish(t);
    return t;
}

void assign_span_windows(std::vector<LayerSpan>& spans, double cpw) {
    for (auto& s : spans) {
        s.start_window = static_cast<std::uint64_t>(std::floor(s.start_cycle / cpw));
        s.end_window = static_cast<std::uint64_t>(std::floor(s.end_cycle / cpw));
    }
}

SimResult simulate_inference(const ModelSpec& model, const TileSchedule& schedule,
                             const NpuConfig& npu, std::uint64_t seed, SimOptions opts) {
    npu.validate();
    if (!(opts.window_us > 0)) throw Error("window_us must be positive");
    check_schedule(model, schedule, npu);
    const double cpw = window_cycles(opts.window_us, npu.clock_hz);
    std::uint64_t start = 0;
    if (opts.start_cycle) {
        start = *opts.start_cycle;
    } else {
        Rng rng(seed);
        start = rng.below(std::max<std::uint64_t>(1, static_cast<std::uint64_t>(cpw)));
    }
    DirectMemoryPort port(npu);
    SimResult r;
    r.total_cycles = run_layers(model, schedule, npu, start, port, &r.layer_spans);
    r.txns = port.take_transactions();
    assign_span_windows(r.layer_spans, cpw);
    const auto min_windows =
        static_cast<std::size_t>(std::ceil(static_cast<double>(r.total_cycles) / cpw));
    r.trace = sample_counter(r.txns, opts.window_us, npu.clock_hz, min_windows);
    return r;
}

BandwidthTrace sample_counter(const std::vector<DmaTransaction>& txns, double window_us,
                              double clock_hz, std::size_t min_windows) {
    if (!(window_us > 0)) throw Error("window_us must be positive");
    const double cpw = window_cycles(window_us, clock_hz);
    double last = 0;
    for (const auto& t : txns) last = std::max(last, t.t_end());
    std::size_t n = std::max<std::size_t>(min_windows, static_cast<std::size_t>(std::ceil(last / cpw)));
    BandwidthTrace trace;
    trace.window_us = window_us;
    trace.read_bytes.assign(n, 0);
    trace.write_bytes.assign(n, 0);
    for (const auto& t : txns) {
        auto& bins = t.kind == TxnKind::read ? trace.read_bytes : trace.write_bytes;
        if (t.bytes == 0) continue;
        const auto first = static_cast<std::size_t>(std::floor(t.t_start / cpw));
        if (t.duration == 0) {
            if (first >= bins.size()) bins.resize(first + 1, 0);
            bins[first] += t.bytes;
            continue;
        }
        const double s = t.t_start;
        const double e = t.t_end();
        const double d = static_cast<double>(t.duration);
        std::uint64_t assigned = 0;
        for (std::size_t w = first;; ++w) {
            const double wend = static_cast<double>(w + 1) * cpw;
            const bool last_window = wend >= e;
            const std::uint64_t cum =
                last_window ? t.bytes
                            : static_cast<std::uint64_t>(
                                  std::llround(static_cast<double>(t.bytes) * (wend - s) / d));
            if (w >= bins.size()) bins.resize(w + 1, 0);
            bins[w] += cum - assigned;
            assigned = cum;
            if (last_window) break;
        }
    }
    const std::size_t len = std::max(trace.read_bytes.size(), trace.write_bytes.size());
    trace.read_bytes.resize(len, 0);
    trace.write_bytes.resize(len, 0);
    return trace;
}

BandwidthTrace inject_noise(const BandwidthTrace& trace, double amplitude, std::uint64_t seed) {
    if (!(amplitude >= 0 && amplitude < 1)) throw Error("noise amplitude must lie in [0, 1)");
    BandwidthTrace out = trace;
    if (amplitude == 0) return out;
    Rng rng(seed);
    auto perturb = [&](std::vector<std::uint64_t>& v) {
        for (auto& x : v) {
            const double f = 1.0 + amplitude * (2.0 * rng.uniform() - 1.0);
            if (x == 0) continue;
            const double base = static_cast<double>(x);
            const double lo = std::ceil(base * (1.0 - amplitude));
            const double hi = std::floor(base * (1.0 + amplitude));
            const double y = std::clamp(std::round(base * f), lo, hi);
            x = static_cast<std::uint64_t>(std::max(0.0, y));
        }
    };
    perturb(out.read_bytes);
    perturb(out.write_bytes);
    return out;
}

std::vector<std::uint64_t> true_boundaries(const ModelSpec& model, const SimResult& sim) {
    std::vector<std::uint64_t> out;
    bool first = true;
    for (const auto& s : sim.layer_spans) {
        if (!model.layers.at(s.layer_id).loads_weights()) continue;
        if (!first) out.push_back(s.start_window);
        first = false;
    }
    return out;
}

void write_trace_csv(std::ostream& out, const BandwidthTrace& trace) {
    out << "window_index,time_us,read_bytes,write_bytes\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << i << ',' << format_double(static_cast<double>(i) * trace.window_us) << ','
            << trace.read_bytes[i] << ',' << trace.write_bytes[i] << '\n';
    }
}

BandwidthTrace read_trace_csv(std::istream& in, const std::string& source) {
    CsvReader reader(in, source);
    reader.expect_header({"window_index", "time_us", "read_bytes", "write_bytes"});
    BandwidthTrace trace;
    std::vector<double> times;
    while (auto row = reader.next()) {
        const auto idx = reader.to_u64(row->at(0), "window_index");
        if (idx != trace.size())
            throw ParseError(source, reader.line(), "window_index out of sequence");
        times.push_back(reader.to_double(row->at(1), "time_us"));
        trace.read_bytes.push_back(reader.to_u64(row->at(2), "read_bytes"));
        trace.write_bytes.push_back(reader.to_u64(row->at(3), "write_bytes"));
    }
    if (times.size() >= 2) trace.window_us = times[1] - times[0];
    return trace;
}

void write_spans_csv(std::ostream& out, const std::vector<LayerSpan>& spans) {
    out << "layer_id,kind,start_window,end_window,start_cycle,end_cycle\n";
    for (const auto& s : spans) {
        out << s.layer_id << ',' << to_string(s.kind) << ',' << s.start_window << ','
            << s.end_window << ',' << s.start_cycle << ',' << s.end_cycle << '\n';
    }
}

std::vector<LayerSpan> read_spans_csv(std::istream& in, const std::string& source) {
    CsvReader reader(in, source);
    reader.expect_header(
        {"layer_id", "kind", "start_window", "end_window", "start_cycle", "end_cycle"});
    std::vector<LayerSpan> spans;
    while (auto row = reader.next()) {
        LayerSpan s;
        s.layer_id = static_cast<int>(reader.to_u64(row->at(0), "layer_id"));
        try {
            s.kind = parse_layer_kind(row->at(1));
        } catch (const Error& e) {
            throw ParseError(source, reader.line(), e.what());
        }
        s.start_window = reader.to_u64(row->at(2), "start_window");
        s.end_window = reader.to_u64(row->at(3), "end_window");
        s.start_cycle = reader.to_u64(row->at(4), "start_cycle");
        s.end_cycle = reader.to_u64(row->at(5), "end_cycle");
        spans.push_back(s);
    }
    return spans;
}

}  // namespace bwleak
