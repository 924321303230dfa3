#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sumgan/dataset.hpp"
#include "sumgan/models.hpp"

namespace sumgan::eval {

struct Protocol {
    data::MetricProtocol kind = data::MetricProtocol::fscore_avg;
    double budget_fraction = 0.15;
    double auc_binarize_threshold = 0.5;
};

/// Mean frame score per shot.
std::vector<double> shot_scores(
    std::span<const double> frame_scores,
    const std::vector<std::array<std::int32_t, 2>>& change_points);

/// Exact 0/1 knapsack by dynamic programming: maximize the score sum subject
/// to the length budget. Ties resolve to the lexicographically smallest
/// index set. Returns selected shot indices in increasing order.
std::vector<std::size_t> knapsack_select(std::span<const double> scores,
                                         std::span<const std::int32_t> lengths,
                                         std::int64_t budget);

/// Key-shot F-score of two binary frame masks: harmonic mean of precision
/// and recall of the temporal overlap; 0 when either mask is empty or the
/// masks are disjoint.
double fscore(std::span<const std::int32_t> machine, std::span<const std::int32_t> user);

/// Per-video aggregation over user summaries: best match (max) or mean (avg).
double fscore_protocol(std::span<const std::int32_t> machine,
                       const std::vector<std::vector<std::int32_t>>& users, bool use_max);

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

struct AucResult {
    std::vector<RocPoint> points;  // sorted by descending threshold
    double auc = 0.0;
};

/// ROC sweep: predicted-positive = score >= threshold. Thresholds default
/// to the sorted unique score values; (0,0) and (1,1) anchor the trapezoidal
/// area. Labels must contain both classes.
AucResult auc_sweep(std::span<const double> scores,
                    std::span<const std::int32_t> labels,
                    std::span<const double> thresholds = {});

struct SummaryProposal {
    std::vector<std::size_t> selected_shots;
    std::vector<std::int32_t> mask;  // per original frame
    double budget_fraction = 0.15;
};

/// Shot-level selection under the length budget; the mask is the union of
/// the selected whole shots.
SummaryProposal build_proposal(
    std::span<const double> frame_scores,
    const std::vector<std::array<std::int32_t, 2>>& change_points,
    double budget_fraction);

/// Scores from the model, expanded to the original rate, then the metric the
/// protocol calls for.
double evaluate_video(const models::SumGanModel& model, const data::VideoRecord& rec,
                      const Protocol& protocol);

/// Same evaluation pipeline driven by uniform-random scores; the mean metric
/// over `trials` draws per video. The comparison floor for trained models.
double random_scores_baseline(const data::Dataset& ds, const Protocol& protocol,
                              std::size_t trials, std::uint64_t seed);

/// Metric for already-computed per-subsampled-frame scores.
double evaluate_scores(std::span<const double> subsampled_scores,
                       const data::VideoRecord& rec, const Protocol& protocol);

}  // namespace sumgan::eval
