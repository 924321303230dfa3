#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sumgan/evaluation.hpp"
#include "sumgan/rng.hpp"

using namespace sumgan;
using namespace sumgan::eval;

namespace {

/// Exhaustive knapsack with the same tie rule: max value, then the
/// lexicographically smallest index set.
std::pair<double, std::vector<std::size_t>> brute_knapsack(
    const std::vector<double>& scores, const std::vector<std::int32_t>& lengths,
    std::int64_t budget) {
    const std::size_t n = scores.size();
    double best_val = 0.0;
    std::vector<std::size_t> best_set;
    for (std::uint32_t m = 0; m < (1u << n); ++m) {
        std::int64_t len = 0;
        double val = 0.0;
        std::vector<std::size_t> set;
        for (std::size_t i = 0; i < n; ++i) {
            if (m & (1u << i)) {
                len += lengths[i];
                val += scores[i];
                set.push_back(i);
            }
        }
        if (len > budget) continue;
        if (val > best_val || (val == best_val && set < best_set)) {
            best_val = val;
            best_set = set;
        }
    }
    return {best_val, best_set};
}

/// Pairwise-concordance AUC estimator, ties counted half.
double concordance_auc(const std::vector<double>& scores,
                       const std::vector<std::int32_t>& labels) {
    double num = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) {
                num += 1.0;
            } else if (scores[i] == scores[j]) {
                num += 0.5;
            }
        }
    }
    return num / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("shot scores are per-shot means") {
    const std::vector<std::array<std::int32_t, 2>> cps = {{0, 2}, {2, 4}};
    const double frames[] = {0.0, 1.0, 1.0, 1.0};
    auto s = shot_scores(frames, cps);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == 0.5);
    CHECK(s[1] == 1.0);

    const std::vector<std::array<std::int32_t, 2>> one = {{0, 4}};
    auto g = shot_scores(frames, one);
    CHECK(g[0] == 0.75);

    const double consts[] = {0.3, 0.3, 0.3, 0.3};
    auto c = shot_scores(consts, cps);
    CHECK(c[0] == 0.3);
    CHECK(c[1] == 0.3);
}

TEST_CASE("knapsack hand cases") {
    {
        const double scores[] = {5, 4, 8};
        const std::int32_t lengths[] = {3, 4, 2};
        auto sel = knapsack_select(scores, lengths, 5);
        CHECK(sel == std::vector<std::size_t>{0, 2});
    }
    {
        const double scores[] = {1, 2, 3};
        const std::int32_t lengths[] = {5, 5, 5};
        CHECK(knapsack_select(scores, lengths, 100).size() == 3);  // room for all
        CHECK(knapsack_select(scores, lengths, 0).empty());
        CHECK(knapsack_select(scores, lengths, 4).empty());  // budget < min length
    }
    {
        // tie between {0} and {1}: prefer the lexicographically smaller set
        const double scores[] = {5, 5};
        const std::int32_t lengths[] = {1, 1};
        CHECK(knapsack_select(scores, lengths, 1) == std::vector<std::size_t>{0});
    }
    {
        // a zero-score item adds nothing: prefer the empty completion
        const double scores[] = {0.0};
        const std::int32_t lengths[] = {1};
        CHECK(knapsack_select(scores, lengths, 5).empty());
    }
}

TEST_CASE("knapsack equals exhaustive search on random instances") {
    Rng rng(2024);
    for (int inst = 0; inst < 500; ++inst) {
        const std::size_t n = 1 + rng.uniform_index(15);
        std::vector<double> scores(n);
        std::vector<std::int32_t> lengths(n);
        for (std::size_t i = 0; i < n; ++i) {
            // grid scores keep float sums order-independent, so the value
            // comparison against the oracle is exact
            scores[i] = static_cast<double>(rng.uniform_index(65)) / 64.0;
            lengths[i] = 1 + static_cast<std::int32_t>(rng.uniform_index(12));
        }
        const auto budget = static_cast<std::int64_t>(rng.uniform_index(40));
        auto got = knapsack_select(scores, lengths, budget);
        auto [bval, bset] = brute_knapsack(scores, lengths, budget);
        double gval = 0.0;
        std::int64_t glen = 0;
        for (auto i : got) {
            gval += scores[i];
            glen += lengths[i];
        }
        CHECK(glen <= budget);
        REQUIRE(gval == bval);
        REQUIRE(got == bset);
    }
}

TEST_CASE("fscore hand cases") {
    std::vector<std::int32_t> a(20, 0), b(20, 0);
    for (int i = 0; i < 10; ++i) a[i] = 1;        // frames 0-9
    for (int i = 5; i < 15; ++i) b[i] = 1;        // frames 5-14
    CHECK(fscore(a, a) == 1.0);
    CHECK(fscore(a, b) == 0.5);

    std::vector<std::int32_t> c(20, 0);
    for (int i = 15; i < 20; ++i) c[i] = 1;
    CHECK(fscore(a, c) == 0.0);

    std::vector<std::int32_t> empty(20, 0);
    CHECK(fscore(a, empty) == 0.0);
    CHECK(fscore(empty, a) == 0.0);

    // precision/recall swap symmetry: F(a, b) == F(b, a)
    CHECK(fscore(a, b) == fscore(b, a));
}

TEST_CASE("fscore protocols") {
    std::vector<std::int32_t> machine = {1, 1, 0, 0};
    std::vector<std::vector<std::int32_t>> users = {{1, 1, 0, 0}, {0, 0, 1, 1}};
    CHECK(fscore_protocol(machine, users, true) == 1.0);
    CHECK(fscore_protocol(machine, users, false) == 0.5);

    std::vector<std::vector<std::int32_t>> one = {{1, 0, 0, 0}};
    CHECK(fscore_protocol(machine, one, true) == fscore_protocol(machine, one, false));

    // order of users does not matter
    std::vector<std::vector<std::int32_t>> swapped = {users[1], users[0]};
    CHECK(fscore_protocol(machine, users, false) ==
          fscore_protocol(machine, swapped, false));
    CHECK(fscore_protocol(machine, users, true) ==
          fscore_protocol(machine, swapped, true));

    CHECK_THROWS_AS(fscore_protocol(machine, {}, true), ContractError);

    // max dominates avg on random instances
    Rng rng(7);
    for (int inst = 0; inst < 100; ++inst) {
        std::vector<std::int32_t> m(12), u1(12), u2(12), u3(12);
        for (int i = 0; i < 12; ++i) {
            m[i] = rng.uniform() < 0.4;
            u1[i] = rng.uniform() < 0.4;
            u2[i] = rng.uniform() < 0.4;
            u3[i] = rng.uniform() < 0.4;
        }
        std::vector<std::vector<std::int32_t>> us = {u1, u2, u3};
        CHECK(fscore_protocol(m, us, true) >= fscore_protocol(m, us, false));
    }
}

TEST_CASE("auc hand cases") {
    {
        // perfect ranking
        const double s[] = {0.9, 0.8, 0.2, 0.1};
        const std::int32_t l[] = {1, 1, 0, 0};
        CHECK(auc_sweep(s, l).auc == 1.0);
    }
    {
        // inverted ranking
        const double s[] = {0.1, 0.2, 0.8, 0.9};
        const std::int32_t l[] = {1, 1, 0, 0};
        CHECK(auc_sweep(s, l).auc == 0.0);
    }
    {
        const double s[] = {0.9, 0.8, 0.4, 0.3};
        const std::int32_t l[] = {1, 0, 1, 0};
        CHECK(auc_sweep(s, l).auc == doctest::Approx(0.75).epsilon(1e-12));
    }
    {
        const double s[] = {0.5, 0.5};
        const std::int32_t l[] = {1, 1};
        CHECK_THROWS_AS(auc_sweep(s, l), ContractError);
    }
}

TEST_CASE("auc equals pairwise concordance on distinct scores") {
    Rng rng(31337);
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t n = 6 + rng.uniform_index(40);
        std::vector<double> scores(n);
        std::vector<std::int32_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.uniform();  // distinct with probability 1
            labels[i] = rng.uniform() < 0.5;
        }
        labels[0] = 1;  // force both classes
        labels[1] = 0;
        const double a = auc_sweep(scores, labels).auc;
        const double c = concordance_auc(scores, labels);
        CHECK(std::fabs(a - c) <= 1e-9);
    }
}

TEST_CASE("roc points move monotonically along both axes") {
    Rng rng(4);
    std::vector<double> scores(50);
    std::vector<std::int32_t> labels(50);
    for (std::size_t i = 0; i < 50; ++i) {
        scores[i] = rng.uniform();
        labels[i] = rng.uniform() < 0.3;
    }
    labels[0] = 1;
    labels[1] = 0;
    auto res = auc_sweep(scores, labels);
    for (std::size_t i = 1; i < res.points.size(); ++i) {
        CHECK(res.points[i].threshold < res.points[i - 1].threshold);
        CHECK(res.points[i].fpr >= res.points[i - 1].fpr);
        CHECK(res.points[i].tpr >= res.points[i - 1].tpr);
    }
}

TEST_CASE("proposal respects the budget for any scores") {
    Rng rng(5);
    const std::size_t n = 100;
    std::vector<std::array<std::int32_t, 2>> cps;
    std::int32_t pos = 0;
    while (pos < static_cast<std::int32_t>(n)) {
        const std::int32_t len =
            std::min<std::int32_t>(1 + rng.uniform_index(9), n - pos);
        cps.push_back({pos, pos + len});
        pos += len;
    }
    for (int inst = 0; inst < 20; ++inst) {
        std::vector<double> scores(n);
        for (auto& v : scores) v = inst == 0 ? 0.5 : rng.uniform();  // constant too
        auto prop = build_proposal(scores, cps, 0.15);
        const auto selected =
            std::accumulate(prop.mask.begin(), prop.mask.end(), std::int64_t{0});
        CHECK(selected <= static_cast<std::int64_t>(0.15 * n));
    }
}
