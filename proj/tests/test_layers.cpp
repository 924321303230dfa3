#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "sumgan/layers.hpp"
#include "sumgan/rng.hpp"
#include "sumgan/tensor.hpp"

using namespace sumgan;
using namespace sumgan::ad;
using namespace sumgan::nn;

namespace {

void zero_params(std::vector<NamedParam>& params) {
    for (auto& p : params) {
        std::fill(p.tensor.raw_value().begin(), p.tensor.raw_value().end(), 0.0);
    }
}

bool bits_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.value().data(), b.value().data(),
                       a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("linear forward") {
    Rng rng(1);
    Linear lin(2, 1, rng);
    std::vector<NamedParam> ps;
    lin.collect("lin", ps);
    zero_params(ps);
    Tensor x = Tensor::from({1, 2}, {2, 3});
    CHECK(lin.forward(x).item() == 0.0);

    lin.weight_t.raw_value() = {1, 1};
    lin.bias.raw_value() = {1};
    CHECK(lin.forward(x).item() == 6.0);
}

TEST_CASE("compression layer reduces 1024 to 500") {
    Rng rng(2);
    Linear compress(1024, 500, rng);
    Tensor x = Tensor::uniform({3, 1024}, rng, -1.0, 1.0);
    Tensor y = compress.forward(x);
    CHECK(y.rows() == 3);
    CHECK(y.cols() == 500);
}

TEST_CASE("lstm cell closed form with zero weights") {
    Rng rng(3);
    LstmCell cell(2, 3, rng);
    std::vector<NamedParam> ps;
    cell.collect("cell", ps);
    zero_params(ps);

    Tensor x = Tensor::from({1, 2}, {0.3, -0.7});
    Tensor h0 = Tensor::zeros({1, 3});
    Tensor c0 = Tensor::from({1, 3}, {0.8, -0.2, 0.0});
    auto [h, c] = cell.step(x, h0, c0);
    for (std::size_t j = 0; j < 3; ++j) {
        const double expect_c = 0.5 * c0.value()[j];
        CHECK(c.value()[j] == doctest::Approx(expect_c).epsilon(1e-15));
        CHECK(h.value()[j] ==
              doctest::Approx(0.5 * std::tanh(expect_c)).epsilon(1e-15));
    }

    // zero initial state as well -> h stays zero
    auto [h2, c2] = cell.step(x, h0, Tensor::zeros({1, 3}));
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(h2.value()[j] == 0.0);
        CHECK(c2.value()[j] == 0.0);
    }
}

TEST_CASE("unrolled steps equal sequence-level forward bitwise") {
    Rng rng(4);
    LstmCell cell(3, 5, rng);
    Tensor X = Tensor::uniform({6, 3}, rng, -1.0, 1.0);

    Tensor seq = lstm_run_direction(cell, X, false);

    Tensor h = Tensor::zeros({1, 5});
    Tensor c = Tensor::zeros({1, 5});
    std::vector<Tensor> rows;
    for (std::size_t t = 0; t < 6; ++t) {
        auto [h2, c2] = cell.step(narrow(X, 0, t, 1), h, c);
        h = h2;
        c = c2;
        rows.push_back(h2);
    }
    Tensor manual = concat(rows, 0);
    CHECK(bits_equal(seq, manual));
}

TEST_CASE("lstm cell stays finite under gate-saturating inputs") {
    Rng rng(5);
    LstmCell cell(2, 4, rng);
    Tensor h = Tensor::zeros({1, 4});
    Tensor c = Tensor::zeros({1, 4});
    for (double mag : {1.0, 100.0, 1000.0}) {
        Tensor x = Tensor::from({1, 2}, {mag, -mag});
        auto [h2, c2] = cell.step(x, h, c);
        h = h2;
        c = c2;
        CHECK(h.all_finite());
        CHECK(c.all_finite());
    }
}

TEST_CASE("bilstm N=1 is one forward plus one backward step on the frame") {
    Rng rng(6);
    BiLstm bi(3, 4, 1, rng);
    Tensor X = Tensor::uniform({1, 3}, rng, -1.0, 1.0);
    Tensor y = bi.forward(X);
    REQUIRE(y.rows() == 1);
    REQUIRE(y.cols() == 8);

    Tensor h0 = Tensor::zeros({1, 4});
    Tensor c0 = Tensor::zeros({1, 4});
    auto [hf, cf] = bi.layers[0].first.step(X, h0, c0);
    auto [hb, cb] = bi.layers[0].second.step(X, h0, c0);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(y.value()[j] == hf.value()[j]);
        CHECK(y.value()[4 + j] == hb.value()[j]);
    }
}

TEST_CASE("direction-tied bidirectional layer: reversing input swaps the halves") {
    Rng rng(7);
    BiLstm bi(3, 4, 1, rng);
    // The symmetry holds exactly when both directions share weights.
    bi.layers[0].second = bi.layers[0].first;
    const std::size_t n = 5;
    Tensor X = Tensor::uniform({n, 3}, rng, -1.0, 1.0);

    std::vector<double> rev_data(n * 3);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < 3; ++j) {
            rev_data[t * 3 + j] = X.value()[(n - 1 - t) * 3 + j];
        }
    }
    Tensor Xr = Tensor::from({n, 3}, rev_data);

    Tensor y = bi.forward(X);
    Tensor yr = bi.forward(Xr);
    // yr[t] = [ bwd-half of y[n-1-t] | fwd-half of y[n-1-t] ], bitwise
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(yr.value()[t * 8 + j] == y.value()[(n - 1 - t) * 8 + 4 + j]);
            CHECK(yr.value()[t * 8 + 4 + j] == y.value()[(n - 1 - t) * 8 + j]);
        }
    }
}

TEST_CASE("two-layer bilstm with 500 hidden units emits 1000 features") {
    Rng rng(8);
    BiLstm bi(500, 500, 2, rng);
    Tensor X = Tensor::uniform({2, 500}, rng, -1.0, 1.0);
    Tensor y = bi.forward(X);
    CHECK(y.rows() == 2);
    CHECK(y.cols() == 1000);
}

TEST_CASE("bilstm output depends on every input position") {
    Rng rng(9);
    const std::size_t n = 6, d = 3, H = 4;
    BiLstm bi(d, H, 2, rng);
    Tensor X = Tensor::uniform({n, d}, rng, -1.0, 1.0);
    Tensor base = bi.forward(X);
    for (std::size_t tau = 0; tau < n; ++tau) {
        auto data = std::vector<double>(X.value().begin(), X.value().end());
        data[tau * d] += 0.5;
        Tensor Xp = Tensor::from({n, d}, data);
        Tensor pert = bi.forward(Xp);
        for (std::size_t t = 0; t < n; ++t) {
            double diff = 0.0;
            for (std::size_t j = 0; j < 2 * H; ++j) {
                diff = std::max(diff, std::fabs(pert.value()[t * 2 * H + j] -
                                                base.value()[t * 2 * H + j]));
            }
            CHECK(diff > 1e-12);
        }
    }
}

TEST_CASE("self-attention weights") {
    Rng rng(10);
    MultiHeadAttention att(8, 2, rng);

    Tensor x1 = Tensor::uniform({1, 8}, rng, -1.0, 1.0);
    auto out1 = att.forward(x1, x1);
    for (const auto& w : out1.weights) {
        REQUIRE(w.numel() == 1);
        CHECK(w.item() == 1.0);
    }

    // identical rows -> uniform weights 1/N
    std::vector<double> row(8);
    for (auto& v : row) v = rng.uniform(-1.0, 1.0);
    std::vector<double> data;
    for (int i = 0; i < 5; ++i) data.insert(data.end(), row.begin(), row.end());
    Tensor xs = Tensor::from({5, 8}, data);
    auto outs = att.forward(xs, xs);
    for (const auto& w : outs.weights) {
        for (double v : w.value()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
    }

    // weight rows sum to one
    Tensor xr = Tensor::uniform({7, 8}, rng, -2.0, 2.0);
    auto outr = att.forward(xr, xr);
    for (const auto& w : outr.weights) {
        for (std::size_t i = 0; i < 7; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 7; ++j) s += w.value()[i * 7 + j];
            CHECK(std::fabs(s - 1.0) <= 1e-10);
        }
    }

    CHECK_THROWS_AS(MultiHeadAttention(10, 4, rng), ConfigError);
}

TEST_CASE("self-attention is permutation-equivariant without positions") {
    Rng rng(11);
    MultiHeadAttention att(6, 3, rng);
    const std::size_t n = 4, d = 6;
    Tensor X = Tensor::uniform({n, d}, rng, -1.0, 1.0);
    const std::size_t perm[] = {2, 0, 3, 1};

    std::vector<double> pdata(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        std::memcpy(pdata.data() + i * d, X.value().data() + perm[i] * d,
                    d * sizeof(double));
    }
    Tensor Xp = Tensor::from({n, d}, pdata);

    Tensor y = att.forward(X, X).y;
    Tensor yp = att.forward(Xp, Xp).y;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            CHECK(yp.value()[i * d + j] ==
                  doctest::Approx(y.value()[perm[i] * d + j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("positional encoding matches its closed form") {
    for (std::size_t d : {4u, 6u, 16u}) {
        Tensor pe = positional_encoding(64, d);
        for (std::size_t t = 0; t < 64; ++t) {
            for (std::size_t i = 0; i < d / 2; ++i) {
                const double angle =
                    t / std::pow(10000.0, 2.0 * double(i) / double(d));
                CHECK(std::fabs(pe.value()[t * d + 2 * i] - std::sin(angle)) <= 1e-12);
                CHECK(std::fabs(pe.value()[t * d + 2 * i + 1] - std::cos(angle)) <= 1e-12);
            }
        }
    }
}

TEST_CASE("tse is sequence-to-vector") {
    Rng rng(12);
    Tse tse(6, 4, 2, rng);
    for (std::size_t n : {1u, 2u, 9u}) {
        Tensor X = Tensor::uniform({n, 6}, rng, -1.0, 1.0);
        Tensor e = tse.forward(X);
        REQUIRE(e.rank() == 1);
        CHECK(e.numel() == 4);
    }

    // N=1: pooling over a single row is the identity on that row
    Tensor X1 = Tensor::uniform({1, 6}, rng, -1.0, 1.0);
    Tensor h = tse.block.forward(
        add(tse.in_proj.forward(X1), positional_encoding(1, 4)));
    Tensor e1 = tse.forward(X1);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(e1.value()[j] == doctest::Approx(h.value()[j]).epsilon(1e-15));
    }

    // scaling the input changes the vector (only the shape is invariant)
    Tensor X = Tensor::uniform({5, 6}, rng, -1.0, 1.0);
    Tensor ea = tse.forward(X);
    Tensor eb = tse.forward(mul_const(X, 2.0));
    double diff = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
        diff = std::max(diff, std::fabs(ea.value()[j] - eb.value()[j]));
    }
    CHECK(diff > 1e-9);
}

TEST_CASE("transformer seq2seq shape, degenerate length, gradient flow") {
    Rng rng(13);
    TransformerSeq2Seq t2t(6, 2, rng);

    for (std::size_t n : {1u, 4u}) {
        Tensor X = Tensor::uniform({n, 6}, rng, -1.0, 1.0);
        Tensor y = t2t.forward(X);
        CHECK(y.rows() == n);
        CHECK(y.cols() == 6);
    }

    std::vector<NamedParam> enc_params;
    t2t.enc.collect("enc", enc_params);
    for (auto& p : enc_params) p.tensor.zero_grad();

    Graph g;
    {
        Graph::Scope scope(g);
        Tensor X = Tensor::uniform({4, 6}, rng, -1.0, 1.0);
        g.backward(sum(t2t.forward(X)));
    }
    for (const auto& p : enc_params) {
        double mx = 0.0;
        for (double v : p.tensor.grad()) mx = std::max(mx, std::fabs(v));
        INFO(p.name);
        CHECK(mx > 0.0);
    }
}
