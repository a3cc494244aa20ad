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

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace bwleak {

/// Feature groups kept in a window's vector.
struct FeatureMask {
    bool stats = true;
    bool approx = true;
    bool details = true;

    bool operator==(const FeatureMask&) const = default;
};

struct FeatureParams {
    std::size_t win_len = 64;
    std::size_t stride = 16;
    int dwt_levels = 3;
    FeatureMask mask;
};

/// Segments [i * stride, i * stride + win_len); a trailing partial segment
/// is dropped.
std::vector<std::vector<double>> sliding_windows(std::span<const double> signal,
                                                 std::size_t win_len, std::size_t stride);

struct HaarCoefficients {
    std::vector<double> approx;
    std::vector<std::vector<double>> details;  // details[0] is the finest level
    std::size_t padded_length = 0;
};

/// Orthonormal Haar transform. Signals whose length is not a multiple of
/// 2^levels are extended with their last value first.
HaarCoefficients haar_dwt(std::span<const double> signal, int levels);
/// Inverse of haar_dwt; returns padded_length samples.
std::vector<double> haar_idwt(const HaarCoefficients& c);

struct WindowFeatures {
    double total_bytes = 0;
    double median_bw = 0;
    double peak_bw = 0;
    double std_bw = 0;
    std::vector<double> dwt_approx;
    std::vector<std::vector<double>> dwt_detail;

    /// Statistics first, then approximation, then details finest first.
    std::vector<double> vector() const;
    std::vector<double> vector(const FeatureMask& mask) const;
};

WindowFeatures extract_features(std::span<const double> segment, int dwt_levels);

/// All sliding-window feature vectors of a signal, masked.
std::vector<std::vector<double>> window_feature_vectors(std::span<const double> signal,
                                                        const FeatureParams& params);
/// Per-window concatenation of the feature vectors of several aligned
/// signals.
std::vector<std::vector<double>> window_feature_vectors(
    const std::vector<std::vector<double>>& signals, const FeatureParams& params);

/// Column names matching WindowFeatures::vector() for a window length.
std::vector<std::string> feature_columns(std::size_t win_len, int dwt_levels);
void write_feature_csv(std::ostream& out, const std::vector<std::string>& columns,
                       const std::vector<std::vector<double>>& rows);

/// Per-dimension standardization. Dimensions with zero spread keep scale 1.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const std::vector<std::vector<double>>& rows);
    std::vector<double> apply(std::span<const double> x) const;
    bool operator==(const Standardizer&) const = default;
};

struct Codebook {
    Standardizer scaling;
    std::vector<std::vector<double>> centroids;  // in standardized space
    /// Set when duplicates left fewer distinct points than requested.
    bool collapsed = false;

    std::size_t k() const { return centroids.size(); }
    /// Nearest centroid in standardized space; ties go to the lowest index.
    std::size_t assign(std::span<const double> raw) const;
    bool operator==(const Codebook&) const = default;
};

/// k-means with farthest-point seeding on standardized vectors.
Codebook build_codebook(const std::vector<std::vector<double>>& features, std::size_t k,
                        std::uint64_t seed, int max_iterations = 50);

struct BowHistogram {
    std::vector<std::uint64_t> counts;
    std::vector<double> normalized;
};

BowHistogram bow_encode(const std::vector<std::vector<double>>& features, const Codebook& codebook);
/// Histogram of already-assigned word indices.
BowHistogram bow_from_words(std::span<const std::size_t> words, std::size_t k);

}  // namespace bwleak
