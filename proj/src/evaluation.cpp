#include "sumgan/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "sumgan/rng.hpp"

namespace sumgan::eval {

std::vector<double> shot_scores(
    std::span<const double> frame_scores,
    const std::vector<std::array<std::int32_t, 2>>& change_points) {
    std::vector<double> out;
    out.reserve(change_points.size());
    for (const auto& cp : change_points) {
        if (cp[0] < 0 || cp[1] <= cp[0] ||
            static_cast<std::size_t>(cp[1]) > frame_scores.size()) {
            throw ContractError("shot_scores: change points do not partition the range");
        }
        double s = 0.0;
        for (std::int32_t f = cp[0]; f < cp[1]; ++f) s += frame_scores[f];
        out.push_back(s / static_cast<double>(cp[1] - cp[0]));
    }
    return out;
}

std::vector<std::size_t> knapsack_select(std::span<const double> scores,
                                         std::span<const std::int32_t> lengths,
                                         std::int64_t budget) {
    const std::size_t n = scores.size();
    if (lengths.size() != n) throw ContractError("knapsack_select: size mismatch");
    for (auto l : lengths) {
        if (l <= 0) throw ContractError("knapsack_select: lengths must be positive");
    }
    if (budget < 0) budget = 0;
    const std::size_t B = static_cast<std::size_t>(budget);

    // value[i][b] = best score over items i..n-1 with remaining capacity b
    std::vector<double> value((n + 1) * (B + 1), 0.0);
    auto val = [&](std::size_t i, std::size_t b) -> double& {
        return value[i * (B + 1) + b];
    };
    for (std::size_t i = n; i-- > 0;) {
        const auto len = static_cast<std::size_t>(lengths[i]);
        for (std::size_t b = 0; b <= B; ++b) {
            double best = val(i + 1, b);
            if (len <= b) {
                best = std::max(best, scores[i] + val(i + 1, b - len));
            }
            val(i, b) = best;
        }
    }

    // Walk forward. On value ties, taking item i is lexicographically
    // smaller than any later-starting set, except against the empty
    // completion (value 0), which is smaller still.
    std::vector<std::size_t> picked;
    std::size_t b = B;
    for (std::size_t i = 0; i < n; ++i) {
        const auto len = static_cast<std::size_t>(lengths[i]);
        const double skip = val(i + 1, b);
        if (len > b) continue;
        const double take = scores[i] + val(i + 1, b - len);
        if (take > skip || (take == skip && skip > 0.0)) {
            picked.push_back(i);
            b -= len;
        }
    }
    return picked;
}

double fscore(std::span<const std::int32_t> machine, std::span<const std::int32_t> user) {
    if (machine.size() != user.size()) {
        throw ContractError("fscore: masks must have equal length");
    }
    std::int64_t overlap = 0, m = 0, u = 0;
    for (std::size_t i = 0; i < machine.size(); ++i) {
        m += machine[i] != 0;
        u += user[i] != 0;
        overlap += (machine[i] != 0 && user[i] != 0);
    }
    if (m == 0 || u == 0 || overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(m);
    const double r = static_cast<double>(overlap) / static_cast<double>(u);
    return 2.0 * p * r / (p + r);
}

double fscore_protocol(std::span<const std::int32_t> machine,
                       const std::vector<std::vector<std::int32_t>>& users,
                       bool use_max) {
    if (users.empty()) throw ContractError("fscore_protocol: no user summaries");
    double best = 0.0, acc = 0.0;
    for (const auto& u : users) {
        const double f = fscore(machine, u);
        best = std::max(best, f);
        acc += f;
    }
    return use_max ? best : acc / static_cast<double>(users.size());
}

AucResult auc_sweep(std::span<const double> scores,
                    std::span<const std::int32_t> labels,
                    std::span<const double> thresholds) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw ContractError("auc_sweep: scores/labels size mismatch or empty");
    }
    std::int64_t pos = 0, neg = 0;
    for (auto l : labels) (l != 0 ? pos : neg) += 1;
    if (pos == 0 || neg == 0) {
        throw ContractError("auc_sweep: labels contain a single class; AUC undefined");
    }

    std::vector<double> ths;
    if (thresholds.empty()) {
        ths.assign(scores.begin(), scores.end());
        std::sort(ths.begin(), ths.end());
        ths.erase(std::unique(ths.begin(), ths.end()), ths.end());
    } else {
        ths.assign(thresholds.begin(), thresholds.end());
        std::sort(ths.begin(), ths.end());
    }

    AucResult res;
    for (auto it = ths.rbegin(); it != ths.rend(); ++it) {
        const double th = *it;
        std::int64_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= th) (labels[i] != 0 ? tp : fp) += 1;
        }
        res.points.push_back({th, static_cast<double>(fp) / static_cast<double>(neg),
                              static_cast<double>(tp) / static_cast<double>(pos)});
    }

    std::vector<std::pair<double, double>> curve;
    curve.reserve(res.points.size() + 2);
    curve.push_back({0.0, 0.0});
    for (const auto& p : res.points) curve.push_back({p.fpr, p.tpr});
    curve.push_back({1.0, 1.0});
    std::sort(curve.begin(), curve.end());

    double auc = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        auc += (curve[i].first - curve[i - 1].first) *
               (curve[i].second + curve[i - 1].second) * 0.5;
    }
    res.auc = auc;
    return res;
}

SummaryProposal build_proposal(
    std::span<const double> frame_scores,
    const std::vector<std::array<std::int32_t, 2>>& change_points,
    double budget_fraction) {
    const auto n_frames = static_cast<std::int64_t>(frame_scores.size());
    const auto budget = static_cast<std::int64_t>(
        budget_fraction * static_cast<double>(n_frames));

    std::vector<double> per_shot = shot_scores(frame_scores, change_points);
    std::vector<std::int32_t> lengths;
    lengths.reserve(change_points.size());
    for (const auto& cp : change_points) lengths.push_back(cp[1] - cp[0]);

    SummaryProposal prop;
    prop.budget_fraction = budget_fraction;
    prop.selected_shots = knapsack_select(per_shot, lengths, budget);
    prop.mask.assign(frame_scores.size(), 0);
    for (auto s : prop.selected_shots) {
        for (std::int32_t f = change_points[s][0]; f < change_points[s][1]; ++f) {
            prop.mask[f] = 1;
        }
    }
    return prop;
}

double evaluate_scores(std::span<const double> subsampled_scores,
                       const data::VideoRecord& rec, const Protocol& protocol) {
    const std::vector<double> frame_scores = data::expand_scores(
        subsampled_scores, rec.picks,
        static_cast<std::size_t>(rec.n_frames_original));

    if (protocol.kind == data::MetricProtocol::auc) {
        if (rec.gt_frame_scores.empty()) {
            throw ValidationError("video '" + rec.id +
                                  "' lacks gt_frame_scores needed for AUC");
        }
        std::vector<std::int32_t> labels(rec.gt_frame_scores.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            labels[i] = rec.gt_frame_scores[i] >= protocol.auc_binarize_threshold;
        }
        return auc_sweep(frame_scores, labels).auc;
    }

    if (rec.user_summaries.empty()) {
        throw ValidationError("video '" + rec.id +
                              "' lacks user summaries needed for the F-score");
    }
    SummaryProposal prop =
        build_proposal(frame_scores, rec.change_points, protocol.budget_fraction);
    const bool use_max = protocol.kind == data::MetricProtocol::fscore_max;
    return fscore_protocol(prop.mask, rec.user_summaries, use_max);
}

double evaluate_video(const models::SumGanModel& model, const data::VideoRecord& rec,
                      const Protocol& protocol) {
    ad::Tensor s = model.scores_for(rec.features_tensor());
    const std::vector<double> scores(s.value().begin(), s.value().end());
    return evaluate_scores(scores, rec, protocol);
}

double random_scores_baseline(const data::Dataset& ds, const Protocol& protocol,
                              std::size_t trials, std::uint64_t seed) {
    if (trials == 0 || ds.videos.empty()) {
        throw ContractError("random_scores_baseline: nothing to evaluate");
    }
    Rng root(seed);
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t v = 0; v < ds.videos.size(); ++v) {
        Rng rng = root.child(v + 1);
        const auto& rec = ds.videos[v];
        for (std::size_t t = 0; t < trials; ++t) {
            std::vector<double> s(rec.n_frames);
            for (auto& x : s) x = rng.uniform();
            acc += evaluate_scores(s, rec, protocol);
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

}  // namespace sumgan::eval
