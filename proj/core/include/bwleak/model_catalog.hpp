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

#include <bwleak/npu_config.hpp>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bwleak {

enum class LayerKind { conv, dense, pool, activation, residual_add };

std::string_view to_string(LayerKind kind);
/// Throws bwleak::Error on an unknown name.
LayerKind parse_layer_kind(std::string_view name);

/// Dimensions of one DNN layer. Spatial outputs use "same"-style padding of
/// (kernel - 1) / 2 on each side.
struct LayerSpec {
    int id = 0;
    LayerKind kind = LayerKind::conv;
    std::uint64_t in_channels = 0;
    std::uint64_t out_channels = 0;
    std::uint64_t kernel_h = 1;
    std::uint64_t kernel_w = 1;
    std::uint64_t input_h = 1;
    std::uint64_t input_w = 1;
    std::uint64_t stride = 1;
    std::uint64_t element_size = 1;

    bool loads_weights() const { return kind == LayerKind::conv || kind == LayerKind::dense; }
    std::uint64_t output_h() const;
    std::uint64_t output_w() const;
    std::uint64_t weight_bytes() const;
    std::uint64_t output_bytes() const;
    std::uint64_t macs() const;

    /// Same dimensions and kind, ignoring the ordinal id.
    bool same_shape(const LayerSpec& other) const;
    /// Human-readable layer type, equal for layers with the same shape,
    /// e.g. "conv3x3 64->128 56x56 s2".
    std::string type_label() const;
};

struct ModelSpec {
    std::string name;
    std::vector<LayerSpec> layers;
    std::uint64_t element_size = 1;

    /// Indices (into `layers`) of conv/dense layers, in execution order.
    std::vector<std::size_t> weight_layer_indices() const;
    std::size_t boundary_count() const;
};

/// Blocking factors along output channels, input channels, kernel height and
/// kernel width. A tile holds tile_oc x tile_ic x tile_h x tile_w weights.
struct TileConfig {
    std::uint64_t tile_oc = 1;
    std::uint64_t tile_ic = 1;
    std::uint64_t tile_h = 1;
    std::uint64_t tile_w = 1;

    auto operator<=>(const TileConfig&) const = default;
};

std::string to_string(const TileConfig& cfg);

struct TileShape {
    std::uint64_t num_tiles = 0;
    std::uint64_t bytes_per_tile = 0;

    bool operator==(const TileShape&) const = default;
};

/// Per-layer tiling choice for every weight-loading layer, keyed by layer id.
struct TileSchedule {
    std::map<int, TileConfig> per_layer;
    std::optional<std::uint64_t> total_cycles;
};

enum class BoundaryClass { T1_diff_tile_size, T2_same_size_diff_count, T3_identical };

std::string_view to_string(BoundaryClass cls);

struct BoundaryLabel {
    int first = 0;   // layer id
    int second = 0;  // layer id
    BoundaryClass cls = BoundaryClass::T3_identical;

    bool easy() const { return cls == BoundaryClass::T1_diff_tile_size; }
};

/// Directory holding the shipped catalogs; $BWLEAK_CATALOG_DIR overrides it.
std::filesystem::path catalog_dir();
std::vector<std::string> shipped_models();

/// Loads a shipped catalog by name, or a catalog file when the argument names
/// an existing path. The result is validated.
ModelSpec load_model(std::string_view name_or_path);

/// Parses the line format `id,kind,in_c,out_c,kh,kw,in_h,in_w,stride`.
/// `source` is used in error messages only.
ModelSpec parse_catalog(std::istream& in, std::string name, const std::string& source);

/// Checks every LayerSpec/ModelSpec invariant; throws bwleak::Error.
void validate(const ModelSpec& model);

/// All legal configs whose factors divide the layer dims and whose tile fits
/// the weight scratchpad, sorted ascending. Throws when none fits.
std::vector<TileConfig> enumerate_tile_configs(const LayerSpec& layer, const NpuConfig& npu);

bool divides_exactly(const LayerSpec& layer, const TileConfig& cfg);

/// Tile count and padded bytes per tile. Non-dividing factors pad the last
/// tile along that dimension to full size. Throws on a factor of 0 or one
/// larger than its dimension.
TileShape tiles_for(const LayerSpec& layer, const TileConfig& cfg);

/// Unpadded byte count of every tile, in tile order (oc, ic, h, w).
std::vector<std::uint64_t> unpadded_tile_bytes(const LayerSpec& layer, const TileConfig& cfg);

/// MACs executed per (padded) tile.
std::uint64_t tile_macs(const LayerSpec& layer, const TileConfig& cfg);

BoundaryClass classify_boundary(const TileShape& a, const TileShape& b);

/// One label per adjacent pair of weight-loading layers.
std::vector<BoundaryLabel> label_boundaries(const ModelSpec& model, const TileSchedule& schedule);

}  // namespace bwleak
