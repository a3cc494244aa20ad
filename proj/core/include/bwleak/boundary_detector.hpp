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
#include <bwleak/npu_sim.hpp>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bwleak {

struct ProfileEntry {
    std::string layer_type;  // LayerSpec::type_label()
    TileConfig config;
    double duration_windows = 0;
    double median_bw = 0;     // read bytes per window, median over the layer's span
    double mean_read_bw = 0;  // read bytes per window, mean over the layer's span
    /// Mean read rate of consecutive equal parts of the trimmed span.
    std::vector<double> part_read_bw;
    std::uint64_t tile_bytes = 0;
    /// Read bytes per window over the isolated run, from its first window,
    /// once per profiled start phase within that window.
    std::vector<std::vector<std::uint64_t>> read_series;
};

/// Attacker-side library of isolated per-layer runs.
struct ProfileDb {
    std::vector<ProfileEntry> entries;
    double window_us = 4.0;

    /// Entries ordered by duration, for tolerance lookups.
    std::vector<ProfileEntry> by_duration() const;
};

/// Mean read rate of `parts` equal parts of [begin, end) after trimming
/// `trim` windows from each end (skipped when the span is too short).
std::vector<double> part_rates(std::span<const double> prefix, std::uint64_t begin,
                               std::uint64_t end, std::size_t parts, std::size_t trim);

struct ProfileParams {
    /// Fastest legal configs profiled per distinct layer type.
    std::size_t configs_per_layer = 4;
    double window_us = 4.0;
    /// Must match the detector's rate_parts and rate_trim.
    std::size_t rate_parts = 3;
    std::size_t rate_trim = 16;
    /// Start phases per window at which each run is repeated.
    std::size_t phases = 8;
};

/// One entry per (distinct layer type, profiled config) over all `models`,
/// each simulated alone from cycle 0.
ProfileDb build_profile_db(const std::vector<ModelSpec>& models, const NpuConfig& npu,
                           const ProfileParams& params = {});

enum class SignalChannels { combined, read_write, read };

struct DetectorParams {
    /// Window statistics only: wavelet terms follow the sub-window phase of
    /// tile bursts, which differs from run to run.
    FeatureParams features{.mask = {true, false, false}};
    /// Words on each side of the histogram comparison. Every span is a
    /// separate scale with its own threshold; short spans resolve short
    /// layers, long spans average over sparse tile bursts.
    std::vector<std::size_t> bow_spans{2, 4, 8, 16, 32};
    /// Within one scale, a candidate must be the strongest within this many
    /// words on either side.
    std::size_t suppression = 2;
    /// Candidates from different scales closer than this many windows are
    /// merged, keeping the most confident.
    double merge_windows = 24;
    /// Which counter series feed the window features.
    SignalChannels channels = SignalChannels::read;
    double mad_c = 3.0;
    /// Duration tolerance for validation: tau_windows plus tau_relative times
    /// the profiled duration.
    double tau_windows = 48;
    double tau_relative = 0.01;
    /// Relative tolerance on a segment's mean read rate against the entry's.
    double rate_tolerance = 0.25;
    /// Absolute slack on the mean read rate, bytes per window.
    double rate_floor = 8;
    /// Windows trimmed from both ends of a segment before measuring its rate,
    /// when the segment is long enough to spare them.
    std::size_t rate_trim = 16;
    /// A segment's rate is compared part by part, so that a stretch spanning
    /// two different layers does not pass for one.
    std::size_t rate_parts = 3;
    /// Candidates move to the largest step in mean read rate, over
    /// refine_width windows on each side, within refine_radius of them.
    std::size_t refine_radius = 48;
    std::size_t refine_width = 24;
    /// Validation picks the cheapest chain of segments from the first to the
    /// last read activity. A matched segment costs segment_cost plus
    /// mismatch_weight times its normalized mismatch; an unmatched one costs
    /// unmatched_cost per window.
    double segment_cost = 1.0;
    double mismatch_weight = 5.0;
    double unmatched_cost = 1.0 / 16;
    /// An entry's isolated read series is slid up to align_radius windows
    /// around a segment's start; the best placement's L1 distance, over the
    /// total bytes of both, must stay within template_tolerance.
    std::size_t align_radius = 48;
    double template_tolerance = 0.2;
    /// Each run of block_windows windows of the placement is also held to
    /// block_tolerance on its own, with rate_floor bytes per window of
    /// slack, so that a short gap inside a flat stretch is not averaged away.
    std::size_t block_windows = 32;
    double block_tolerance = 0.1;
    /// Largest error of an entry placed after a reached node for its aligned
    /// end to become a node of its own.
    double extension_error = 0.5;
};

struct BoundarySet {
    std::vector<std::uint64_t> positions;  // window indices, strictly increasing
    std::vector<double> confidence;        // in [0, 1]
};

struct DetectionDiagnostics {
    std::vector<std::vector<double>> statistic;  // per scale, histogram distance per word
    std::vector<double> threshold;               // per scale
    std::vector<std::uint64_t> candidates;       // merged, before validation
    std::vector<double> candidate_confidence;
    std::vector<std::uint64_t> nodes;            // refined, with both anchors
};

/// Attacker signals selected by params.channels.
std::vector<std::vector<double>> attack_signals(const BandwidthTrace& trace,
                                                const DetectorParams& params);

/// Codebook over the sliding-window features of attacker-collected traces.
Codebook fit_codebook(const std::vector<BandwidthTrace>& traces, const DetectorParams& params,
                      std::size_t k, std::uint64_t seed);

/// Where a segment's closest profile entry sits once aligned.
struct SegmentMatch {
    double error = -1;  // normalized mismatch in [0, 1]; negative when nothing matches
    const ProfileEntry* entry = nullptr;
    std::uint64_t begin = 0;  // aligned span, windows
    std::uint64_t end = 0;
};

/// Scores stretches of one trace against the profile database.
class SegmentMatcher {
public:
    SegmentMatcher(const ProfileDb& profile, const DetectorParams& params);

    void bind(const BandwidthTrace& trace);

    /// Closest entry to windows [begin, end) by duration, per-part read rate
    /// and aligned read series.
    SegmentMatch match(std::uint64_t begin, std::uint64_t end) const;

    /// Every entry that fits when placed near `begin`, wherever it ends.
    std::vector<SegmentMatch> extensions(std::uint64_t begin) const;

private:
    bool rates_fit(const ProfileEntry& e, std::uint64_t begin, std::uint64_t end) const;
    // Best start in [lo, hi] for `e`; error is the scaled template distance.
    SegmentMatch align(const ProfileEntry& e, std::int64_t lo, std::int64_t hi) const;
    // Scaled distance of `e`'s run at `phase` placed at `start`: the larger
    // of the whole series' and the worst block's distance over tolerance.
    double template_distance(const ProfileEntry& e, std::size_t phase, std::int64_t start,
                             double cap) const;
    double coarse_distance(const ProfileEntry& e, std::int64_t start) const;

    std::vector<ProfileEntry> sorted_;
    std::vector<std::vector<std::vector<double>>> entry_prefix_;  // per entry and phase
    DetectorParams params_;
    std::vector<double> prefix_;
    const BandwidthTrace* trace_ = nullptr;
};

BoundarySet detect_boundaries(const BandwidthTrace& trace, const Codebook& codebook,
                              const ProfileDb& profile, const DetectorParams& params,
                              DetectionDiagnostics* diag = nullptr);

struct DetectionScore {
    double precision = 0;
    double recall = 0;
    std::vector<std::pair<std::size_t, std::size_t>> matched;  // (prediction, truth) indices
    std::size_t predicted = 0;
    std::size_t truth = 0;
};

/// Earliest-first one-to-one matching: predictions in order each take the
/// earliest unmatched truth within `tolerance` windows. Precision and recall
/// are 0 when their denominator is 0.
DetectionScore score_boundaries(const std::vector<std::uint64_t>& predicted,
                                const std::vector<std::uint64_t>& truth, double tolerance);

/// Table row for one model. Easy precision counts predictions that match an
/// easy boundary against all predictions left unmatched; easy recall is the
/// matched easy boundaries over all boundaries.
struct BoundaryReportRow {
    std::string model;
    std::size_t predicted = 0;
    std::size_t boundaries = 0;
    std::size_t easy_boundaries = 0;
    std::size_t matched = 0;
    std::size_t matched_easy = 0;
    double easy_precision = 0;
    double easy_recall = 0;
    double all_precision = 0;
    double all_recall = 0;
    bool na = false;  // no validated candidates
};

BoundaryReportRow score_model(const std::string& model, const std::vector<std::uint64_t>& predicted,
                              const std::vector<std::uint64_t>& truth,
                              const std::vector<BoundaryLabel>& labels, double tolerance);

/// Pools rows by summing their counts.
BoundaryReportRow aggregate_rows(const std::vector<BoundaryReportRow>& rows);

void write_boundary_report(std::ostream& out, const std::vector<BoundaryReportRow>& rows);
void write_boundary_csv(std::ostream& out, const std::vector<BoundaryReportRow>& rows);

}  // namespace bwleak
