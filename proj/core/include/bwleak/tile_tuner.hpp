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
#include <span>
#include <vector>

namespace bwleak {

/// Total cycles of a schedule from the closed-form per-layer cost. Layers
/// share no state under the cost model, so this equals the simulator's
/// compute end minus its start offset.
std::uint64_t model_cycles(const ModelSpec& model, const TileSchedule& schedule,
                           const NpuConfig& npu);

/// True when `a` should be preferred over `b` at equal cycles: exact-divisor
/// configs first, then fewer tiles, then the lexicographically smaller config.
bool tie_break_less(const LayerSpec& layer, const TileConfig& a, const TileConfig& b);

/// Fastest config among `candidates` (which must be non-empty).
TileConfig best_config(const LayerSpec& layer, std::span<const TileConfig> candidates,
                       const NpuConfig& npu);

/// Legal configs of a layer from fastest to slowest under the same ordering
/// as best_config, truncated to `limit` entries (0 keeps all).
std::vector<TileConfig> ranked_configs(const LayerSpec& layer, const NpuConfig& npu,
                                       std::size_t limit = 0);

/// Per-layer argmin over enumerate_tile_configs; fills total_cycles.
TileSchedule tune(const ModelSpec& model, const NpuConfig& npu);

struct ExploreResult {
    std::uint64_t best_cycles = 0;
    std::vector<double> ratios;  // in sample-index order
    double min = 0, median = 0, max = 0;
};

/// Draws `n_samples` schedules, each layer's config uniform and independent
/// over its legal list, and reports cycles relative to tune().
ExploreResult explore(const ModelSpec& model, const NpuConfig& npu, std::size_t n_samples,
                      std::uint64_t seed);

/// One config shared by every weight-loading layer: the fastest among those
/// legal for all layers at once. Factors need not divide every layer
/// dimension (the remainder tile is padded). Throws if none exists.
TileSchedule constant_tile_schedule(const ModelSpec& model, const NpuConfig& npu);

double median_of(std::vector<double> v);

}  // namespace bwleak
