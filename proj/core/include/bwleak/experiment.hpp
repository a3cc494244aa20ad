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

#include <bwleak/boundary_detector.hpp>
#include <bwleak/layer_classifier.hpp>
#include <bwleak/npu_config.hpp>
#include <bwleak/traffic_shaper.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bwleak {

/// A shaper sweep point: a fraction of the unshaped peak read rate, or the
/// unshaped mean read rate.
struct SweepTarget {
    bool mean = false;
    double fraction = 1.0;

    std::string label() const;
    bool operator==(const SweepTarget&) const = default;
};

/// Everything one run of the harness depends on. Text form: one
/// `key = value` per line, `#` starts a comment.
struct ExperimentConfig {
    std::vector<std::string> models;  // empty selects every shipped model
    NpuConfig npu;
    double window_us = 4.0;
    /// Multiplicative counter noise on victim traces.
    double noise_amplitude = 0.0;

    /// Victim runs (start offsets and noise).
    std::uint64_t seed = 1;
    /// Attacker profiling runs: codebook traces and classifier samples.
    std::uint64_t profile_seed = 777;
    /// Codebook seeding, tile exploration and classifier training.
    std::uint64_t train_seed = 5;

    std::size_t win_len = 64;
    std::size_t stride = 16;
    int dwt_levels = 3;
    std::size_t codebook_k = 16;
    double mad_c = 3.0;
    double tau_windows = 48;
    /// Predictions within this many windows of a true boundary match it.
    double score_tolerance = 64;

    std::vector<SweepTarget> shaper_targets{
        {false, 1.0}, {false, 0.875}, {false, 0.75}, {false, 0.625}, {false, 0.5}, {true, 0}};
    std::uint64_t shaper_quantum_bytes = 0;
    double shaper_max_slowdown = 50.0;

    std::size_t tune_samples = 200;

    std::size_t runs_per_class = 50;
    std::size_t configs_per_class = 1;
    double classifier_noise = 0.05;
    double test_fraction = 0.2;
    std::size_t svm_epochs = 100;
    std::size_t net_epochs = 200;

    std::filesystem::path output_dir = "bwleak-out";

    /// Throws bwleak::Error naming the first bad field or unknown model.
    void validate() const;
    std::vector<std::string> model_names() const;
    DetectorParams detector_params() const;
    BenchmarkParams benchmark_params() const;
};

ExperimentConfig parse_config(std::istream& in, const std::string& source);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every key with its value, defaults included; parse_config reads it back.
void write_config(std::ostream& out, const ExperimentConfig& cfg);

/// Outcome of a command. Items that failed are listed; the others were
/// written.
struct CommandResult {
    std::vector<std::filesystem::path> written;
    std::vector<std::string> failures;

    bool ok() const { return failures.empty(); }
};

/// traces/<model>.csv and traces/<model>_spans.csv per model.
CommandResult cmd_simulate(const ExperimentConfig& cfg);
/// tune_report.{txt,csv} and tune/<model>_ratios.dat (sample index, ratio).
CommandResult cmd_tune(const ExperimentConfig& cfg);
/// Boundary and classifier reports from the traces written by simulate,
/// plus every trained classifier under classifiers/.
CommandResult cmd_attack(const ExperimentConfig& cfg);
/// Shaper sweep report with the attack rerun on each shaped trace, which
/// is kept under defend/.
CommandResult cmd_defend(const ExperimentConfig& cfg);
/// summary.txt: the text reports present in the output directory, in a
/// fixed order.
CommandResult cmd_report(const ExperimentConfig& cfg);

/// Row of the defense sweep. NA in the precision/recall columns when the
/// detector validated nothing; `infeasible` when the shaper gave up.
struct DefenseRow {
    std::string model;
    std::string target;  // SweepTarget::label()
    double target_Bps = 0;
    bool infeasible = false;
    ShaperReportRow shaper;
    BoundaryReportRow attack;
    double unshaped_all_precision = 0;
};

void write_defense_report(std::ostream& out, const std::vector<DefenseRow>& rows);
void write_defense_csv(std::ostream& out, const std::vector<DefenseRow>& rows);

}  // namespace bwleak
