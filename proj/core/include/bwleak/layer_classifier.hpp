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

#include <bwleak/features.hpp>
#include <bwleak/model_catalog.hpp>
#include <bwleak/npu_config.hpp>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bwleak {

/// One isolated, noisy run of a layer under one tile config, cut to the
/// layer's true window span.
struct ProfileRun {
    std::string layer_type;  // LayerSpec::type_label()
    TileConfig config;
    std::vector<double> read_series;  // read bytes per window over the span
};

struct RunParams {
    std::size_t runs_per_class = 50;
    /// Fastest legal configs per distinct layer type; each is its own class.
    std::size_t configs_per_class = 1;
    double noise_amplitude = 0.05;
    double window_us = 4.0;
};

/// For every distinct weight-layer type of `models` and each of its ranked
/// configs, runs_per_class runs at seed-derived start offsets and noise.
std::vector<ProfileRun> profile_runs(const std::vector<ModelSpec>& models, const NpuConfig& npu,
                                     const RunParams& params, std::uint64_t seed);

struct FeatureLayout {
    bool with_dwt = true;
    int dwt_levels = 3;
    /// Bins the segment is resampled to, for the DWT and the CNN channel.
    std::size_t series_len = 64;
    std::size_t feature_count = 0;

    /// Duration, total, mean, median, peak and std of the segment.
    static constexpr std::size_t stats_count = 6;
    static constexpr std::size_t duration_index = 0;
    /// Approximation coefficients plus one energy per detail level.
    std::size_t dwt_count() const;
    bool operator==(const FeatureLayout&) const = default;
};

FeatureLayout make_layout(bool with_dwt, int dwt_levels = 3, std::size_t series_len = 64);

/// Mean of `segment` over `bins` equal fractional bins.
std::vector<double> resample(std::span<const double> segment, std::size_t bins);

/// Scalar features of one segment under `layout`.
std::vector<double> segment_features(std::span<const double> segment, const FeatureLayout& layout);

struct Sample {
    std::vector<double> features;
    std::vector<double> series;  // resampled read series
    std::size_t label = 0;
    std::string layer_type;
    TileConfig config;
};

struct Dataset {
    std::vector<Sample> samples;
    /// "<layer type> | <config>" per class.
    std::vector<std::string> label_names;
    FeatureLayout layout;

    std::size_t classes() const { return label_names.size(); }
};

/// One sample per run; classes are (layer type, config) pairs in first-seen
/// order. Throws when fewer than 2 classes result.
Dataset build_dataset(const std::vector<ProfileRun>& runs, const FeatureLayout& layout);

struct DatasetSplit {
    Dataset train;
    Dataset test;
};

/// Per class, a seeded shuffle puts round(test_fraction * n) samples in the test set.
DatasetSplit stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

// ---- Differentiable models on flat parameter vectors ----

struct MlpShape {
    std::size_t inputs = 0;
    std::size_t hidden = 64;
    std::size_t classes = 0;

    /// W1 (hidden x inputs), b1, W2 (classes x hidden), b2.
    std::size_t size() const { return hidden * inputs + hidden + classes * hidden + classes; }
};

std::vector<double> softmax(std::span<const double> logits);

std::vector<double> mlp_logits(const MlpShape& shape, std::span<const double> params,
                               std::span<const double> x);
/// Mean cross-entropy plus l2/2 times the squared weights (biases excluded).
/// Fills `grad` when non-null.
double mlp_loss(const MlpShape& shape, std::span<const double> params,
                const std::vector<std::vector<double>>& x, std::span<const std::size_t> y,
                double l2, std::vector<double>* grad);

struct CnnShape {
    std::size_t length = 64;
    std::size_t filters = 8;
    std::size_t width = 5;
    /// Scalar features appended to the pooled filter outputs.
    std::size_t extra = 0;
    std::size_t classes = 0;

    /// Conv weights (filters x width), conv biases, dense (classes x
    /// (filters + extra)), dense biases.
    std::size_t size() const {
        return filters * width + filters + classes * (filters + extra) + classes;
    }
};

struct CnnInput {
    std::vector<double> series;
    std::vector<double> extra;
};

/// Global average of each filter's ReLU output. The convolution is centred
/// and reads past either end as the nearest edge sample.
std::vector<double> cnn_pooled(const CnnShape& shape, std::span<const double> params,
                               std::span<const double> series);
std::vector<double> cnn_logits(const CnnShape& shape, std::span<const double> params,
                               const CnnInput& x);
double cnn_loss(const CnnShape& shape, std::span<const double> params,
                const std::vector<CnnInput>& x, std::span<const std::size_t> y, double l2,
                std::vector<double>* grad);

// ---- Learners ----

enum class LearnerKind { svm, mlp, cnn, time_only };

std::string_view to_string(LearnerKind kind);
LearnerKind parse_learner_kind(std::string_view name);

struct SvmHyper {
    std::size_t epochs = 100;
    double step = 0.01;
    double l2 = 1e-4;
};

struct NetHyper {
    std::size_t epochs = 200;
    std::size_t batch = 32;
    double step = 0.05;
    double l2 = 1e-4;
    std::size_t hidden = 64;  // MLP
    std::size_t filters = 8;  // CNN
    std::size_t width = 5;    // CNN
};

struct TrainedClassifier {
    LearnerKind kind = LearnerKind::svm;
    FeatureLayout layout;
    std::vector<std::string> label_names;
    /// Fitted on log1p of the training features.
    Standardizer scaling;
    /// Divides CNN input series; 1 for other learners.
    double series_scale = 1.0;
    /// Model dimensions: svm {classes, inputs}; mlp {inputs, hidden, classes};
    /// cnn {length, filters, width, extra, classes}; time_only {classes}.
    std::vector<std::size_t> shape;
    std::vector<double> params;
    std::uint64_t train_seed = 0;

    /// Standardized log1p of the sample's features.
    std::vector<double> input(const Sample& s) const;
    std::vector<double> scores(const Sample& s) const;
    /// Argmax of scores; ties go to the lowest class.
    std::size_t predict(const Sample& s) const;
    bool operator==(const TrainedClassifier&) const = default;
};

TrainedClassifier train_svm(const Dataset& ds, const SvmHyper& hyper, std::uint64_t seed);
TrainedClassifier train_mlp(const Dataset& ds, const NetHyper& hyper, std::uint64_t seed);
TrainedClassifier train_cnn(const Dataset& ds, const NetHyper& hyper, std::uint64_t seed);
/// Nearest per-class mean duration.
TrainedClassifier baseline_time_only(const Dataset& ds);

/// Per-epoch mean training loss, recorded by train_mlp_traced.
TrainedClassifier train_mlp_traced(const Dataset& ds, const NetHyper& hyper, std::uint64_t seed,
                                   std::vector<double>* epoch_loss);

// ---- Evaluation ----

struct EvalReport {
    double accuracy = 0;
    std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
    /// Accuracy per class; NaN for classes absent from the test set.
    std::vector<double> class_accuracy;
};

/// Throws when the layout or label names differ from the classifier's.
EvalReport evaluate(const TrainedClassifier& clf, const Dataset& test);

/// Class accuracies averaged with weights equal to how many of the model's
/// weight layers have each class's layer type. Classes absent from the test
/// set are skipped; NaN when no class applies.
double model_weighted_accuracy(const EvalReport& report, const Dataset& test,
                               const ModelSpec& model);

/// One learner's row: per-model weighted accuracy, then overall accuracy.
struct AccuracyRow {
    std::string learner;
    std::vector<double> per_model;
    double overall = 0;
};

void write_accuracy_report(std::ostream& out, const std::vector<std::string>& models,
                           const std::vector<AccuracyRow>& rows);
void write_accuracy_csv(std::ostream& out, const std::vector<std::string>& models,
                        const std::vector<AccuracyRow>& rows);

/// Runs whose layer type occurs among the model's weight layers.
std::vector<ProfileRun> runs_for_model(const std::vector<ProfileRun>& runs, const ModelSpec& model);

struct BenchmarkParams {
    RunParams runs;
    int dwt_levels = 3;
    std::size_t series_len = 64;
    double test_fraction = 0.2;
    SvmHyper svm;
    NetHyper net;
};

struct TrainedEntry {
    std::string model;
    std::string learner;  // row label
    TrainedClassifier classifier;
};

struct BenchmarkResult {
    std::vector<std::string> models;
    std::vector<AccuracyRow> rows;
    std::vector<TrainedEntry> classifiers;
};

/// Each model gets its own classifiers over the classes of its layer types,
/// trained and tested on a stratified split of their runs. A row's entries
/// are model-weighted test accuracies; its overall value averages them
/// weighted by each model's weight-layer count. Rows: each learner with and
/// without DWT features, then the time-only baseline.
BenchmarkResult run_classifier_benchmark(const std::vector<ModelSpec>& models, const NpuConfig& npu,
                                         const BenchmarkParams& params, std::uint64_t seed);

/// Versioned text dump with exact hexadecimal floats.
void save_classifier(std::ostream& out, const TrainedClassifier& clf);
TrainedClassifier load_classifier(std::istream& in, const std::string& source);

}  // namespace bwleak
