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

#include <bwleak/model_catalog.hpp>

#include <bwleak/error.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#ifndef BWLEAK_DEFAULT_CATALOG_DIR
#define BWLEAK_DEFAULT_CATALOG_DIR "catalogs"
#endif

namespace bwleak {

namespace {

std::uint64_t padded_out(std::uint64_t in, std::uint64_t k, std::uint64_t s) {
    const std::uint64_t pad = (k - 1) / 2;
    if (in + 2 * pad < k || s == 0) return 0;
    return (in + 2 * pad - k) / s + 1;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::vector<std::uint64_t> divisors(std::uint64_t n) {
    std::vector<std::uint64_t> out;
    for (std::uint64_t d = 1; d * d <= n; ++d) {
        if (n % d == 0) {
            out.push_back(d);
            if (d * d != n) out.push_back(n / d);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

constexpr const char* kFieldNames[] = {"id",     "kind", "in_c", "out_c", "kh",
                                       "kw",     "in_h", "in_w", "stride"};

}  // namespace

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::dense: return "dense";
        case LayerKind::pool: return "pool";
        case LayerKind::activation: return "activation";
        case LayerKind::residual_add: return "residual_add";
    }
    return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
    for (auto k : {LayerKind::conv, LayerKind::dense, LayerKind::pool, LayerKind::activation,
                   LayerKind::residual_add}) {
        if (to_string(k) == name) return k;
    }
    throw Error("unknown layer kind '" + std::string(name) + "'");
}

std::string_view to_string(BoundaryClass cls) {
    switch (cls) {
        case BoundaryClass::T1_diff_tile_size: return "T1";
        case BoundaryClass::T2_same_size_diff_count: return "T2";
        case BoundaryClass::T3_identical: return "T3";
    }
    return "?";
}

std::string to_string(const TileConfig& cfg) {
    return std::to_string(cfg.tile_oc) + "x" + std::to_string(cfg.tile_ic) + "x" +
           std::to_string(cfg.tile_h) + "x" + std::to_string(cfg.tile_w);
}

std::uint64_t LayerSpec::output_h() const { return padded_out(input_h, kernel_h, stride); }
std::uint64_t LayerSpec::output_w() const { return padded_out(input_w, kernel_w, stride); }

std::uint64_t LayerSpec::weight_bytes() const {
    if (!loads_weights()) return 0;
    return in_channels * out_channels * kernel_h * kernel_w * element_size;
}

std::uint64_t LayerSpec::output_bytes() const {
    return out_channels * output_h() * output_w() * element_size;
}

std::uint64_t LayerSpec::macs() const {
    const std::uint64_t out = out_channels * output_h() * output_w();
    switch (kind) {
        case LayerKind::conv:
        case LayerKind::dense: return out * in_channels * kernel_h * kernel_w;
        case LayerKind::pool: return out * kernel_h * kernel_w;
        case LayerKind::activation:
        case LayerKind::residual_add: return out;
    }
    return 0;
}

bool LayerSpec::same_shape(const LayerSpec& o) const {
    return kind == o.kind && in_channels == o.in_channels && out_channels == o.out_channels &&
           kernel_h == o.kernel_h && kernel_w == o.kernel_w && input_h == o.input_h &&
           input_w == o.input_w && stride == o.stride && element_size == o.element_size;
}

std::string LayerSpec::type_label() const {
    std::string s(to_string(kind));
    if (loads_weights() || kind == LayerKind::pool)
        s += std::to_string(kernel_h) + "x" + std::to_string(kernel_w);
    s += " " + std::to_string(in_channels) + "->" + std::to_string(out_channels) + " " +
         std::to_string(input_h) + "x" + std::to_string(input_w) + " s" + std::to_string(stride);
    if (element_size != 1) s += " e" + std::to_string(element_size);
    return s;
}

std::vector<std::size_t> ModelSpec::weight_layer_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].loads_weights()) out.push_back(i);
    return out;
}

std::size_t ModelSpec::boundary_count() const {
    const auto n = weight_layer_indices().size();
    return n == 0 ? 0 : n - 1;
}

std::filesystem::path catalog_dir() {
    if (const char* env = std::getenv("BWLEAK_CATALOG_DIR"); env != nullptr && *env != '\0')
        return env;
    return BWLEAK_DEFAULT_CATALOG_DIR;
}

std::vector<std::string> shipped_models() {
    return {"alexnet", "vgg11", "vgg16", "resnet18", "resnet34", "resnet50"};
}

ModelSpec load_model(std::string_view name_or_path) {
    std::filesystem::path path(name_or_path);
    const bool looks_like_path = name_or_path.find('/') != std::string_view::npos ||
                                 path.has_extension() || std::filesystem::exists(path);
    std::string name;
    if (looks_like_path) {
        name = path.stem().string();
    } else {
        const auto models = shipped_models();
        if (std::find(models.begin(), models.end(), name_or_path) == models.end())
            throw Error("unknown model '" + std::string(name_or_path) + "'");
        name = std::string(name_or_path);
        path = catalog_dir() / (name + ".csv");
    }
    std::ifstream in(path);
    if (!in) throw Error("cannot open catalog '" + path.string() + "'");
    return parse_catalog(in, name, path.string());
}

ModelSpec parse_catalog(std::istream& in, std::string name, const std::string& source) {
    ModelSpec model;
    model.name = std::move(name);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            const std::string key = "element_size:";
            const auto pos = t.find(key);
            if (pos != std::string::npos) {
                const std::string v = trim(std::string_view(t).substr(pos + key.size()));
                std::uint64_t es = 0;
                auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), es);
                if (ec != std::errc() || p != v.data() + v.size() || es == 0)
                    throw ParseError(source, lineno, "bad element_size '" + v + "'");
                model.element_size = es;
            }
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(t);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(trim(f));
        if (fields.size() != 9)
            throw ParseError(source, lineno,
                             "expected 9 fields, got " + std::to_string(fields.size()));
        LayerSpec layer;
        std::uint64_t v[9] = {};
        for (int i = 0; i < 9; ++i) {
            if (i == 1) continue;
            const std::string& s = fields[i];
            if (!s.empty() && s[0] == '-')
                throw ParseError(source, lineno,
                                 std::string("field ") + kFieldNames[i] + " is negative");
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v[i]);
            if (ec != std::errc() || p != s.data() + s.size() || s.empty())
                throw ParseError(source, lineno,
                                 std::string("field ") + kFieldNames[i] + " is not an integer: '" +
                                     s + "'");
        }
        try {
            layer.kind = parse_layer_kind(fields[1]);
        } catch (const Error& e) {
            throw ParseError(source, lineno, std::string("field kind: ") + e.what());
        }
        layer.id = static_cast<int>(v[0]);
        layer.in_channels = v[2];
        layer.out_channels = v[3];
        layer.kernel_h = v[4];
        layer.kernel_w = v[5];
        layer.input_h = v[6];
        layer.input_w = v[7];
        layer.stride = v[8];
        model.layers.push_back(layer);
    }
    for (auto& l : model.layers) l.element_size = model.element_size;
    try {
        validate(model);
    } catch (const Error& e) {
        throw Error(source + ": " + e.what());
    }
    return model;
}

void validate(const ModelSpec& model) {
    if (model.layers.empty()) throw Error("model '" + model.name + "' has no layers");
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& l = model.layers[i];
        const std::string where = "layer " + std::to_string(l.id);
        if (l.id != static_cast<int>(i))
            throw Error(where + ": ids must be sequential from 0 (expected " + std::to_string(i) +
                        ")");
        if (l.in_channels == 0 || l.out_channels == 0 || l.kernel_h == 0 || l.kernel_w == 0 ||
            l.input_h == 0 || l.input_w == 0 || l.stride == 0)
            throw Error(where + ": dimensions must be positive");
        if (l.element_size != model.element_size)
            throw Error(where + ": element_size differs from the model");
        if (l.output_h() == 0 || l.output_w() == 0)
            throw Error(where + ": kernel larger than padded input");
        if (!l.loads_weights() && l.in_channels != l.out_channels)
            throw Error(where + ": " + std::string(to_string(l.kind)) +
                        " must preserve channel count");
        if (l.loads_weights() != (l.weight_bytes() > 0))
            throw Error(where + ": weight bytes inconsistent with kind");
        if (i == 0) continue;
        // Residual branches consume the output of an earlier layer, not only
        // the immediately preceding one.
        bool fed = false;
        for (std::size_t j = i; j-- > 0 && !fed;) {
            const LayerSpec& p = model.layers[j];
            const bool direct = p.out_channels == l.in_channels && p.output_h() == l.input_h &&
                                p.output_w() == l.input_w;
            const bool flattened = l.kind == LayerKind::dense && l.input_h == 1 &&
                                   l.input_w == 1 &&
                                   p.out_channels * p.output_h() * p.output_w() == l.in_channels;
            fed = direct || flattened;
        }
        if (!fed)
            throw Error(where + ": input " + std::to_string(l.in_channels) + "x" +
                        std::to_string(l.input_h) + "x" + std::to_string(l.input_w) +
                        " matches no earlier layer output");
    }
}

std::vector<TileConfig> enumerate_tile_configs(const LayerSpec& layer, const NpuConfig& npu) {
    if (!layer.loads_weights())
        throw Error("layer " + std::to_string(layer.id) + " loads no weights");
    const auto doc = divisors(layer.out_channels);
    const auto dic = divisors(layer.in_channels);
    const auto dh = divisors(layer.kernel_h);
    const auto dw = divisors(layer.kernel_w);
    std::vector<TileConfig> out;
    for (auto a : doc)
        for (auto b : dic)
            for (auto c : dh)
                for (auto d : dw) {
                    if (a * b * c * d * layer.element_size <= npu.weight_scratchpad_bytes)
                        out.push_back({a, b, c, d});
                }
    if (out.empty())
        throw Error("layer " + std::to_string(layer.id) +
                    ": NPU weight scratchpad too small for any tile");
    return out;  // divisor lists are ascending, so the tuples are sorted
}

bool divides_exactly(const LayerSpec& l, const TileConfig& c) {
    return l.out_channels % c.tile_oc == 0 && l.in_channels % c.tile_ic == 0 &&
           l.kernel_h % c.tile_h == 0 && l.kernel_w % c.tile_w == 0;
}

namespace {
void check_factors(const LayerSpec& l, const TileConfig& c) {
    auto bad = [](std::uint64_t f, std::uint64_t dim) { return f == 0 || f > dim; };
    if (!l.loads_weights()) throw Error("layer " + std::to_string(l.id) + " loads no weights");
    if (bad(c.tile_oc, l.out_channels) || bad(c.tile_ic, l.in_channels) ||
        bad(c.tile_h, l.kernel_h) || bad(c.tile_w, l.kernel_w))
        throw Error("tile config " + to_string(c) + " is illegal for layer " +
                    std::to_string(l.id));
}
}  // namespace

TileShape tiles_for(const LayerSpec& l, const TileConfig& c) {
    check_factors(l, c);
    TileShape s;
    s.num_tiles = ceil_div(l.out_channels, c.tile_oc) * ceil_div(l.in_channels, c.tile_ic) *
                  ceil_div(l.kernel_h, c.tile_h) * ceil_div(l.kernel_w, c.tile_w);
    s.bytes_per_tile = c.tile_oc * c.tile_ic * c.tile_h * c.tile_w * l.element_size;
    return s;
}

std::vector<std::uint64_t> unpadded_tile_bytes(const LayerSpec& l, const TileConfig& c) {
    check_factors(l, c);
    auto extents = [](std::uint64_t dim, std::uint64_t f) {
        std::vector<std::uint64_t> e;
        for (std::uint64_t s = 0; s < dim; s += f) e.push_back(std::min(f, dim - s));
        return e;
    };
    const auto eo = extents(l.out_channels, c.tile_oc);
    const auto ei = extents(l.in_channels, c.tile_ic);
    const auto eh = extents(l.kernel_h, c.tile_h);
    const auto ew = extents(l.kernel_w, c.tile_w);
    std::vector<std::uint64_t> out;
    out.reserve(eo.size() * ei.size() * eh.size() * ew.size());
    for (auto a : eo)
        for (auto b : ei)
            for (auto h : eh)
                for (auto w : ew) out.push_back(a * b * h * w * l.element_size);
    return out;
}

std::uint64_t tile_macs(const LayerSpec& l, const TileConfig& c) {
    return c.tile_oc * c.tile_ic * c.tile_h * c.tile_w * l.output_h() * l.output_w();
}

BoundaryClass classify_boundary(const TileShape& a, const TileShape& b) {
    if (a.bytes_per_tile != b.bytes_per_tile) return BoundaryClass::T1_diff_tile_size;
    if (a.num_tiles != b.num_tiles) return BoundaryClass::T2_same_size_diff_count;
    return BoundaryClass::T3_identical;
}

std::vector<BoundaryLabel> label_boundaries(const ModelSpec& model,
                                            const TileSchedule& schedule) {
    const auto idx = model.weight_layer_indices();
    for (const auto& [id, cfg] : schedule.per_layer) {
        if (id < 0 || static_cast<std::size_t>(id) >= model.layers.size() ||
            !model.layers[id].loads_weights())
            throw Error("schedule names layer " + std::to_string(id) +
                        " which is not a weight-loading layer of " + model.name);
    }
    std::vector<TileShape> shapes;
    for (auto i : idx) {
        const auto& l = model.layers[i];
        auto it = schedule.per_layer.find(l.id);
        if (it == schedule.per_layer.end())
            throw Error("schedule misses layer " + std::to_string(l.id) + " of " + model.name);
        shapes.push_back(tiles_for(l, it->second));
    }
    std::vector<BoundaryLabel> out;
    for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
        out.push_back({model.layers[idx[k]].id, model.layers[idx[k + 1]].id,
                       classify_boundary(shapes[k], shapes[k + 1])});
    }
    return out;
}

}  // namespace bwleak
