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

#include <bwleak/tile_tuner.hpp>

#include <bwleak/error.hpp>
#include <bwleak/npu_sim.hpp>
#include <bwleak/rng.hpp>

#include <algorithm>
#include <set>

namespace bwleak {

std::uint64_t model_cycles(const ModelSpec& model, const TileSchedule& schedule,
                           const NpuConfig& npu) {
    std::uint64_t total = 0;
    for (const auto& l : model.layers) {
        if (l.loads_weights())
            total += layer_cycles(l, schedule.per_layer.at(l.id), npu);
        else
            total += compute_only_cycles(l, npu);
    }
    return total;
}

bool tie_break_less(const LayerSpec& layer, const TileConfig& a, const TileConfig& b) {
    const bool ea = divides_exactly(layer, a);
    const bool eb = divides_exactly(layer, b);
    if (ea != eb) return ea;
    const auto na = tiles_for(layer, a).num_tiles;
    const auto nb = tiles_for(layer, b).num_tiles;
    if (na != nb) return na < nb;
    return a < b;
}

TileConfig best_config(const LayerSpec& layer, std::span<const TileConfig> candidates,
                       const NpuConfig& npu) {
    if (candidates.empty())
        throw Error("layer " + std::to_string(layer.id) + ": empty tile config space");
    TileConfig best = candidates.front();
    std::uint64_t best_cycles = layer_cycles(layer, best, npu);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const auto c = layer_cycles(layer, candidates[i], npu);
        if (c < best_cycles || (c == best_cycles && tie_break_less(layer, candidates[i], best))) {
            best = candidates[i];
            best_cycles = c;
        }
    }
    return best;
}

std::vector<TileConfig> ranked_configs(const LayerSpec& layer, const NpuConfig& npu,
                                       std::size_t limit) {
    std::vector<std::pair<std::uint64_t, TileConfig>> scored;
    for (const auto& c : enumerate_tile_configs(layer, npu))
        scored.emplace_back(layer_cycles(layer, c, npu), c);
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return tie_break_less(layer, a.second, b.second);
    });
    if (limit != 0 && scored.size() > limit) scored.resize(limit);
    std::vector<TileConfig> out;
    for (const auto& [cycles, c] : scored) out.push_back(c);
    return out;
}

TileSchedule tune(const ModelSpec& model, const NpuConfig& npu) {
    npu.validate();
    TileSchedule s;
    for (const auto& l : model.layers) {
        if (!l.loads_weights()) continue;
        const auto configs = enumerate_tile_configs(l, npu);
        s.per_layer[l.id] = best_config(l, configs, npu);
    }
    s.total_cycles = model_cycles(model, s, npu);
    return s;
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ExploreResult explore(const ModelSpec& model, const NpuConfig& npu, std::size_t n_samples,
                      std::uint64_t seed) {
    if (n_samples == 0) throw Error("explore: n_samples must be at least 1");
    const TileSchedule best = tune(model, npu);
    ExploreResult r;
    r.best_cycles = *best.total_cycles;

    std::vector<const LayerSpec*> layers;
    std::vector<std::vector<TileConfig>> spaces;
    std::uint64_t fixed = 0;
    for (const auto& l : model.layers) {
        if (l.loads_weights()) {
            layers.push_back(&l);
            spaces.push_back(enumerate_tile_configs(l, npu));
        } else {
            fixed += compute_only_cycles(l, npu);
        }
    }
    r.ratios.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        // Per-sample streams keep results independent of evaluation order.
        Rng rng(derive_seed(seed, i));
        std::uint64_t cycles = fixed;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const auto& space = spaces[k];
            cycles += layer_cycles(*layers[k], space[rng.below(space.size())], npu);
        }
        r.ratios[i] = static_cast<double>(cycles) / static_cast<double>(r.best_cycles);
    }
    r.min = *std::min_element(r.ratios.begin(), r.ratios.end());
    r.max = *std::max_element(r.ratios.begin(), r.ratios.end());
    r.median = median_of(r.ratios);
    return r;
}

namespace {
std::vector<std::uint64_t> candidate_factors(const std::vector<std::uint64_t>& dims) {
    const std::uint64_t cap = *std::min_element(dims.begin(), dims.end());
    std::set<std::uint64_t> out;
    for (auto d : dims)
        for (std::uint64_t f = 1; f <= std::min(d, cap); ++f)
            if (d % f == 0) out.insert(f);
    return {out.begin(), out.end()};
}
}  // namespace

TileSchedule constant_tile_schedule(const ModelSpec& model, const NpuConfig& npu) {
    npu.validate();
    std::vector<const LayerSpec*> layers;
    std::vector<std::uint64_t> oc, ic, kh, kw;
    for (const auto& l : model.layers) {
        if (!l.loads_weights()) continue;
        layers.push_back(&l);
        oc.push_back(l.out_channels);
        ic.push_back(l.in_channels);
        kh.push_back(l.kernel_h);
        kw.push_back(l.kernel_w);
    }
    if (layers.empty()) throw Error(model.name + ": no weight-loading layers");
    std::uint64_t fixed = 0;
    for (const auto& l : model.layers)
        if (!l.loads_weights()) fixed += compute_only_cycles(l, npu);

    std::optional<TileConfig> best;
    std::uint64_t best_cycles = 0;
    std::size_t best_exact = 0;
    std::uint64_t best_tiles = 0;
    for (auto a : candidate_factors(oc))
        for (auto b : candidate_factors(ic))
            for (auto c : candidate_factors(kh))
                for (auto d : candidate_factors(kw)) {
                    const TileConfig cfg{a, b, c, d};
                    if (a * b * c * d * model.element_size > npu.weight_scratchpad_bytes) continue;
                    std::uint64_t cycles = fixed;
                    std::size_t exact = 0;
                    std::uint64_t tiles = 0;
                    for (const auto* l : layers) {
                        cycles += layer_cycles(*l, cfg, npu);
                        exact += divides_exactly(*l, cfg) ? 1 : 0;
                        tiles += tiles_for(*l, cfg).num_tiles;
                    }
                    const bool better =
                        !best || cycles < best_cycles ||
                        (cycles == best_cycles &&
                         (exact > best_exact ||
                          (exact == best_exact &&
                           (tiles < best_tiles || (tiles == best_tiles && cfg < *best)))));
                    if (better) {
                        best = cfg;
                        best_cycles = cycles;
                        best_exact = exact;
                        best_tiles = tiles;
                    }
                }
    if (!best) throw Error(model.name + ": no tile config is legal for every layer");
    TileSchedule s;
    for (const auto* l : layers) s.per_layer[l->id] = *best;
    s.total_cycles = best_cycles;
    return s;
}

}  // namespace bwleak
