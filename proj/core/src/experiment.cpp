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


#include <bwleak/experiment.hpp>

#include <bwleak/csv.hpp>
#include <bwleak/error.hpp>
#include <bwleak/npu_sim.hpp>
#include <bwleak/rng.hpp>
#include <bwleak/tile_tuner.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

namespace bwleak {

namespace fs = std::filesystem;

std::string SweepTarget::label() const {
    return mean ? std::string("mean") : format_double(fraction) + "xpeak";
}

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& v) {
    T out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw Error("bad number '" + v + "'");
    return out;
}

std::vector<std::string> parse_list(const std::string& v) {
    std::vector<std::string> out;
    for (auto& item : split(v, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? "," : "") + items[i];
    return s;
}

SweepTarget parse_target(const std::string& v) {
    if (v == "mean") return {true, 0};
    SweepTarget t;
    t.fraction = parse_number<double>(v);
    return t;
}

struct Field {
    const char* key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
Field number(const char* key, T ExperimentConfig::*member) {
    return {key,
            [member](const ExperimentConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
                else return std::to_string(c.*member);
            },
            [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_number<T>(v); }};
}

template <class T>
Field npu_number(const char* key, T NpuConfig::*member) {
    return {key,
            [member](const ExperimentConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return format_double(c.npu.*member);
                else return std::to_string(c.npu.*member);
            },
            [member](ExperimentConfig& c, const std::string& v) { c.npu.*member = parse_number<T>(v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f{
        {"models", [](const ExperimentConfig& c) { return join(c.models); },
         [](ExperimentConfig& c, const std::string& v) { c.models = parse_list(v); }},
        {"output_dir", [](const ExperimentConfig& c) { return c.output_dir.string(); },
         [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; }},
        number("seed", &ExperimentConfig::seed),
        number("profile_seed", &ExperimentConfig::profile_seed),
        number("train_seed", &ExperimentConfig::train_seed),
        number("window_us", &ExperimentConfig::window_us),
        number("noise_amplitude", &ExperimentConfig::noise_amplitude),
        npu_number("npu.clock_hz", &NpuConfig::clock_hz),
        npu_number("npu.pe_count", &NpuConfig::pe_count),
        npu_number("npu.weight_scratchpad_bytes", &NpuConfig::weight_scratchpad_bytes),
        npu_number("npu.dram_bandwidth_Bps", &NpuConfig::dram_bandwidth_Bps),
        npu_number("npu.dma_burst_bytes", &NpuConfig::dma_burst_bytes),
        npu_number("npu.dma_latency_cycles", &NpuConfig::dma_latency_cycles),
        npu_number("npu.tile_setup_cycles", &NpuConfig::tile_setup_cycles),
        number("features.win_len", &ExperimentConfig::win_len),
        number("features.stride", &ExperimentConfig::stride),
        number("features.dwt_levels", &ExperimentConfig::dwt_levels),
        number("codebook.k", &ExperimentConfig::codebook_k),
        number("detector.mad_c", &ExperimentConfig::mad_c),
        number("detector.tau_windows", &ExperimentConfig::tau_windows),
        number("score.tolerance_windows", &ExperimentConfig::score_tolerance),
        {"shaper.targets",
         [](const ExperimentConfig& c) {
             std::vector<std::string> s;
             for (const auto& t : c.shaper_targets) s.push_back(t.mean ? "mean" : format_double(t.fraction));
             return join(s);
         },
         [](ExperimentConfig& c, const std::string& v) {
             c.shaper_targets.clear();
             for (const auto& item : parse_list(v)) c.shaper_targets.push_back(parse_target(item));
         }},
        number("shaper.quantum_bytes", &ExperimentConfig::shaper_quantum_bytes),
        number("shaper.max_slowdown", &ExperimentConfig::shaper_max_slowdown),
        number("tune.samples", &ExperimentConfig::tune_samples),
        number("classifier.runs_per_class", &ExperimentConfig::runs_per_class),
        number("classifier.configs_per_class", &ExperimentConfig::configs_per_class),
        number("classifier.noise_amplitude", &ExperimentConfig::classifier_noise),
        number("classifier.test_fraction", &ExperimentConfig::test_fraction),
        number("classifier.svm_epochs", &ExperimentConfig::svm_epochs),
        number("classifier.net_epochs", &ExperimentConfig::net_epochs),
    };
    return f;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
    ExperimentConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(source, lineno, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& f = fields();
        const auto it = std::find_if(f.begin(), f.end(), [&](const Field& x) { return key == x.key; });
        if (it == f.end()) throw ParseError(source, lineno, "unknown key '" + key + "'");
        try {
            it->set(cfg, value);
        } catch (const Error& e) {
            throw ParseError(source, lineno, key + ": " + e.what());
        }
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path.string() + "'");
    return parse_config(in, path.string());
}

void write_config(std::ostream& out, const ExperimentConfig& cfg) {
    out << "# bwleak experiment configuration (every key, defaults included)\n";
    for (const auto& f : fields()) out << f.key << " = " << f.get(cfg) << '\n';
}

std::vector<std::string> ExperimentConfig::model_names() const {
    return models.empty() ? shipped_models() : models;
}

void ExperimentConfig::validate() const {
    npu.validate();
    if (!(window_us > 0)) throw Error("window_us must be positive");
    if (!(noise_amplitude >= 0 && noise_amplitude < 1)) throw Error("noise_amplitude must be in [0, 1)");
    if (!(classifier_noise >= 0 && classifier_noise < 1))
        throw Error("classifier.noise_amplitude must be in [0, 1)");
    if (win_len == 0 || stride == 0) throw Error("features.win_len and features.stride must be positive");
    if (dwt_levels < 1 || (win_len % (std::size_t{1} << dwt_levels)) != 0)
        throw Error("features.win_len must be a multiple of 2^dwt_levels");
    if (codebook_k < 2) throw Error("codebook.k must be at least 2");
    if (!(mad_c >= 0) || !(tau_windows >= 0) || !(score_tolerance >= 0))
        throw Error("detector.mad_c, detector.tau_windows and score.tolerance_windows must be non-negative");
    for (const auto& t : shaper_targets)
        if (!t.mean && !(t.fraction > 0 && t.fraction <= 1))
            throw Error("shaper target fractions must be in (0, 1]");
    if (!(shaper_max_slowdown > 1)) throw Error("shaper.max_slowdown must exceed 1");
    if (tune_samples == 0) throw Error("tune.samples must be positive");
    if (runs_per_class < 2) throw Error("classifier.runs_per_class must be at least 2");
    if (configs_per_class == 0) throw Error("classifier.configs_per_class must be positive");
    if (!(test_fraction > 0 && test_fraction < 1)) throw Error("classifier.test_fraction must be in (0, 1)");
    for (const auto& m : model_names()) load_model(m);
}

DetectorParams ExperimentConfig::detector_params() const {
    DetectorParams p;
    p.features.win_len = win_len;
    p.features.stride = stride;
    p.features.dwt_levels = dwt_levels;
    p.mad_c = mad_c;
    p.tau_windows = tau_windows;
    return p;
}

BenchmarkParams ExperimentConfig::benchmark_params() const {
    BenchmarkParams b;
    b.runs.runs_per_class = runs_per_class;
    b.runs.configs_per_class = configs_per_class;
    b.runs.noise_amplitude = classifier_noise;
    b.runs.window_us = window_us;
    b.dwt_levels = dwt_levels;
    b.test_fraction = test_fraction;
    b.svm.epochs = svm_epochs;
    b.net.epochs = net_epochs;
    return b;
}

namespace {

struct Victim {
    ModelSpec model;
    TileSchedule schedule;
};

std::vector<Victim> load_victims(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<Victim> v;
    for (const auto& name : cfg.model_names()) {
        Victim x{load_model(name), {}};
        x.schedule = tune(x.model, cfg.npu);
        v.push_back(std::move(x));
    }
    return v;
}

SimOptions sim_options(const ExperimentConfig& cfg) {
    SimOptions o;
    o.window_us = cfg.window_us;
    return o;
}

SimResult victim_run(const ExperimentConfig& cfg, const Victim& v, std::size_t index) {
    SimResult r = simulate_inference(v.model, v.schedule, cfg.npu, cfg.seed, sim_options(cfg));
    if (cfg.noise_amplitude > 0)
        r.trace = inject_noise(r.trace, cfg.noise_amplitude, derive_seed(cfg.seed, 100 + index));
    return r;
}

void emit(CommandResult& res, const fs::path& path, const std::function<void(std::ostream&)>& writer) {
    try {
        write_file_atomic(path, writer);
        res.written.push_back(path);
    } catch (const std::exception& e) {
        res.failures.push_back(path.string() + ": " + e.what());
    }
}

// Every command records the configuration it ran with.
CommandResult begin(const ExperimentConfig& cfg) {
    CommandResult res;
    emit(res, cfg.output_dir / "config.txt", [&](std::ostream& o) { write_config(o, cfg); });
    return res;
}

fs::path trace_path(const ExperimentConfig& cfg, const std::string& model) {
    return cfg.output_dir / "traces" / (model + ".csv");
}

fs::path spans_path(const ExperimentConfig& cfg, const std::string& model) {
    return cfg.output_dir / "traces" / (model + "_spans.csv");
}

struct Attacker {
    DetectorParams params;
    Codebook codebook;
    ProfileDb profile;
};

// The attacker's offline work: its own runs of every model for the
// codebook, and isolated per-layer runs for the profile database.
Attacker prepare_attacker(const ExperimentConfig& cfg, const std::vector<Victim>& victims) {
    Attacker a;
    a.params = cfg.detector_params();
    std::vector<BandwidthTrace> own;
    for (std::size_t i = 0; i < victims.size(); ++i) {
        auto r = simulate_inference(victims[i].model, victims[i].schedule, cfg.npu, cfg.profile_seed,
                                    sim_options(cfg));
        if (cfg.noise_amplitude > 0)
            r.trace = inject_noise(r.trace, cfg.noise_amplitude, derive_seed(cfg.profile_seed, 100 + i));
        own.push_back(std::move(r.trace));
    }
    a.codebook = fit_codebook(own, a.params, cfg.codebook_k, cfg.train_seed);
    std::vector<ModelSpec> models;
    for (const auto& v : victims) models.push_back(v.model);
    ProfileParams pp;
    pp.window_us = cfg.window_us;
    pp.rate_parts = a.params.rate_parts;
    pp.rate_trim = a.params.rate_trim;
    a.profile = build_profile_db(models, cfg.npu, pp);
    return a;
}

template <class T>
void read_input(const fs::path& path, T& out,
                const std::function<T(std::istream&, const std::string&)>& reader) {
    std::ifstream in(path);
    if (!in) throw Error("missing input '" + path.string() + "' (run simulate first)");
    out = reader(in, path.string());
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.resize(width, ' ');
    return s;
}

std::string na_or(double v, bool na, int digits) {
    return na ? std::string("NA") : format_fixed(v, digits);
}

std::string slug(const std::string& learner) {
    std::string s;
    for (char c : learner) {
        if (c == '/') continue;
        s += c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return s;
}

}  // namespace

CommandResult cmd_simulate(const ExperimentConfig& cfg) {
    const auto victims = load_victims(cfg);
    CommandResult res = begin(cfg);
    for (std::size_t i = 0; i < victims.size(); ++i) {
        const auto& v = victims[i];
        try {
            const SimResult r = victim_run(cfg, v, i);
            emit(res, trace_path(cfg, v.model.name), [&](std::ostream& o) { write_trace_csv(o, r.trace); });
            emit(res, spans_path(cfg, v.model.name), [&](std::ostream& o) { write_spans_csv(o, r.layer_spans); });
        } catch (const std::exception& e) {
            res.failures.push_back(v.model.name + ": " + e.what());
        }
    }
    return res;
}

CommandResult cmd_tune(const ExperimentConfig& cfg) {
    const auto victims = load_victims(cfg);
    CommandResult res = begin(cfg);
    struct Row {
        std::string model;
        ExploreResult r;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < victims.size(); ++i) {
        const auto& m = victims[i].model;
        try {
            Row row{m.name, explore(m, cfg.npu, cfg.tune_samples, derive_seed(cfg.train_seed, i))};
            emit(res, cfg.output_dir / "tune" / (m.name + "_ratios.dat"), [&](std::ostream& o) {
                o << "# sample ratio\n";
                for (std::size_t k = 0; k < row.r.ratios.size(); ++k)
                    o << k << ' ' << format_double(row.r.ratios[k]) << '\n';
            });
            rows.push_back(std::move(row));
        } catch (const std::exception& e) {
            res.failures.push_back(m.name + ": " + e.what());
        }
    }
    emit(res, cfg.output_dir / "tune_report.txt", [&](std::ostream& o) {
        o << pad("model", 11) << pad("best_cycles", 14) << pad("samples", 9) << pad("min", 8)
          << pad("median", 8) << "max\n";
        for (const auto& r : rows)
            o << pad(r.model, 11) << pad(std::to_string(r.r.best_cycles), 14)
              << pad(std::to_string(r.r.ratios.size()), 9) << pad(format_fixed(r.r.min, 3), 8)
              << pad(format_fixed(r.r.median, 3), 8) << format_fixed(r.r.max, 3) << '\n';
    });
    emit(res, cfg.output_dir / "tune_report.csv", [&](std::ostream& o) {
        o << "model,best_cycles,samples,min,median,max\n";
        for (const auto& r : rows)
            o << r.model << ',' << r.r.best_cycles << ',' << r.r.ratios.size() << ','
              << format_double(r.r.min) << ',' << format_double(r.r.median) << ','
              << format_double(r.r.max) << '\n';
    });
    return res;
}

CommandResult cmd_attack(const ExperimentConfig& cfg) {
    const auto victims = load_victims(cfg);
    CommandResult res = begin(cfg);
    const Attacker att = prepare_attacker(cfg, victims);

    std::vector<BoundaryReportRow> rows;
    for (const auto& v : victims) {
        try {
            SimResult sim;
            read_input<BandwidthTrace>(trace_path(cfg, v.model.name), sim.trace, read_trace_csv);
            read_input<std::vector<LayerSpan>>(spans_path(cfg, v.model.name), sim.layer_spans, read_spans_csv);
            const auto found = detect_boundaries(sim.trace, att.codebook, att.profile, att.params);
            rows.push_back(score_model(v.model.name, found.positions, true_boundaries(v.model, sim),
                                       label_boundaries(v.model, v.schedule), cfg.score_tolerance));
        } catch (const std::exception& e) {
            res.failures.push_back(v.model.name + ": " + e.what());
        }
    }
    if (!rows.empty()) rows.push_back(aggregate_rows(rows));
    emit(res, cfg.output_dir / "boundary_report.txt", [&](std::ostream& o) { write_boundary_report(o, rows); });
    emit(res, cfg.output_dir / "boundary_report.csv", [&](std::ostream& o) { write_boundary_csv(o, rows); });

    std::vector<ModelSpec> models;
    for (const auto& v : victims) models.push_back(v.model);
    try {
        const auto bench = run_classifier_benchmark(models, cfg.npu, cfg.benchmark_params(), cfg.train_seed);
        emit(res, cfg.output_dir / "accuracy_report.txt",
             [&](std::ostream& o) { write_accuracy_report(o, bench.models, bench.rows); });
        emit(res, cfg.output_dir / "accuracy_report.csv",
             [&](std::ostream& o) { write_accuracy_csv(o, bench.models, bench.rows); });
        for (const auto& c : bench.classifiers)
            emit(res, cfg.output_dir / "classifiers" / (c.model + "_" + slug(c.learner) + ".txt"),
                 [&](std::ostream& o) { save_classifier(o, c.classifier); });
    } catch (const std::exception& e) {
        res.failures.push_back(std::string("classifier benchmark: ") + e.what());
    }
    return res;
}

void write_defense_report(std::ostream& out, const std::vector<DefenseRow>& rows) {
    out << pad("model", 11) << pad("target", 12) << pad("target_MBps", 13) << pad("overhead", 10)
        << pad("max_dev_B", 11) << pad("unshaped-all-precision", 24) << pad("easy-precision", 16)
        << pad("all-precision", 15) << "all-recall\n";
    for (const auto& r : rows) {
        out << pad(r.model, 11) << pad(r.target, 12) << pad(format_fixed(r.target_Bps / 1e6, 3), 13);
        if (r.infeasible) {
            out << "infeasible\n";
            continue;
        }
        out << pad(format_fixed(r.shaper.overhead, 4), 10) << pad(format_fixed(r.shaper.max_deviation, 1), 11)
            << pad(format_fixed(r.unshaped_all_precision, 3), 24)
            << pad(na_or(r.attack.easy_precision, r.attack.na, 3), 16)
            << pad(na_or(r.attack.all_precision, r.attack.na, 3), 15)
            << na_or(r.attack.all_recall, r.attack.na, 3) << '\n';
    }
}

void write_defense_csv(std::ostream& out, const std::vector<DefenseRow>& rows) {
    out << "model,target,target_Bps,status,overhead,stall_cycles,max_deviation_bytes,"
           "unshaped_all_precision,easy_precision,all_precision,all_recall\n";
    auto val = [](double v, bool na) { return na ? std::string("NA") : format_double(v); };
    for (const auto& r : rows) {
        out << r.model << ',' << r.target << ',' << format_double(r.target_Bps) << ','
            << (r.infeasible ? "infeasible" : "ok") << ',';
        if (r.infeasible) {
            out << "NA,NA,NA,NA,NA,NA,NA\n";
            continue;
        }
        out << format_double(r.shaper.overhead) << ',' << r.shaper.stall_cycles << ','
            << format_double(r.shaper.max_deviation) << ',' << format_double(r.unshaped_all_precision) << ','
            << val(r.attack.easy_precision, r.attack.na) << ',' << val(r.attack.all_precision, r.attack.na)
            << ',' << val(r.attack.all_recall, r.attack.na) << '\n';
    }
}

CommandResult cmd_defend(const ExperimentConfig& cfg) {
    const auto victims = load_victims(cfg);
    CommandResult res = begin(cfg);
    const Attacker att = prepare_attacker(cfg, victims);
    std::vector<DefenseRow> rows;
    for (std::size_t i = 0; i < victims.size(); ++i) {
        const auto& v = victims[i];
        try {
            const SimResult sim = victim_run(cfg, v, i);
            const auto labels = label_boundaries(v.model, v.schedule);
            const auto plain = score_model(
                v.model.name, detect_boundaries(sim.trace, att.codebook, att.profile, att.params).positions,
                true_boundaries(v.model, sim), labels, cfg.score_tolerance);
            const double peak = peak_read_Bps(sim.trace);
            const double mean = mean_read_Bps(sim.trace);
            for (const auto& t : cfg.shaper_targets) {
                DefenseRow row;
                row.model = v.model.name;
                row.target = t.label();
                row.target_Bps = std::min(t.mean ? mean : t.fraction * peak, cfg.npu.dram_bandwidth_Bps);
                row.unshaped_all_precision = plain.all_precision;
                ShaperConfig sc;
                sc.target_Bps = row.target_Bps;
                sc.quantum_bytes = cfg.shaper_quantum_bytes;
                sc.window_us = cfg.window_us;
                sc.max_slowdown = cfg.shaper_max_slowdown;
                try {
                    const ShapedResult shaped = shape(v.model, v.schedule, cfg.npu, sc, cfg.seed);
                    SimResult view;
                    view.layer_spans = shaped.layer_spans;
                    view.trace = shaped_trace(shaped, cfg.window_us, cfg.npu.clock_hz);
                    if (cfg.noise_amplitude > 0)
                        view.trace = inject_noise(view.trace, cfg.noise_amplitude, derive_seed(cfg.seed, 100 + i));
                    row.shaper = {v.model.name, sc.target_Bps, sc.effective_quantum(cfg.npu),
                                  shaped.stall_cycles, shaped.overhead,
                                  max_window_deviation(view.trace, sc.target_Bps)};
                    const auto found = detect_boundaries(view.trace, att.codebook, att.profile, att.params);
                    row.attack = score_model(v.model.name, found.positions, true_boundaries(v.model, view),
                                             labels, cfg.score_tolerance);
                    emit(res, cfg.output_dir / "defend" / (v.model.name + "_" + row.target + ".csv"),
                         [&](std::ostream& o) { write_trace_csv(o, view.trace); });
                } catch (const InfeasibleTarget&) {
                    row.infeasible = true;
                }
                rows.push_back(std::move(row));
            }
        } catch (const std::exception& e) {
            res.failures.push_back(v.model.name + ": " + e.what());
        }
    }
    emit(res, cfg.output_dir / "defend_report.txt", [&](std::ostream& o) { write_defense_report(o, rows); });
    emit(res, cfg.output_dir / "defend_report.csv", [&](std::ostream& o) { write_defense_csv(o, rows); });
    return res;
}

CommandResult cmd_report(const ExperimentConfig& cfg) {
    cfg.validate();
    CommandResult res;
    const std::vector<std::pair<const char*, const char*>> parts{
        {"boundary_report.txt", "Layer boundary detection"},
        {"accuracy_report.txt", "Layer type classification accuracy"},
        {"defend_report.txt", "Traffic shaping defense"},
        {"tune_report.txt", "Tile configuration exploration"},
    };
    std::string body;
    for (const auto& [file, title] : parts) {
        const fs::path p = cfg.output_dir / file;
        if (!fs::exists(p)) continue;
        body += std::string("== ") + title + " ==\n" + read_file(p) + "\n";
    }
    if (body.empty()) {
        res.failures.push_back("no reports found in '" + cfg.output_dir.string() + "'");
        return res;
    }
    emit(res, cfg.output_dir / "summary.txt", [&](std::ostream& o) { o << body; });
    return res;
}

}  // namespace bwleak
