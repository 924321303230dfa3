#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "sumgan/gradcheck.hpp"
#include "sumgan/kernels.hpp"
#include "sumgan/rng.hpp"
#include "sumgan/tensor.hpp"

using namespace sumgan;
using namespace sumgan::ad;

namespace {

Tensor leaf(const Shape& shape, std::vector<double> v) {
    return Tensor::from(shape, std::move(v)).set_requires_grad(true);
}

Tensor rand_leaf(const Shape& shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    return Tensor::uniform(shape, rng, lo, hi).set_requires_grad(true);
}

/// Project to a scalar through a fixed random direction so every output
/// element influences the loss with a distinct weight.
Tensor project(const Tensor& y, Rng& rng) {
    Tensor dir = Tensor::uniform(y.shape(), rng, 0.1, 1.0);
    return sum(mul(y, dir));
}

double fd_max_err(const std::function<Tensor()>& build,
                  std::vector<NamedParam> params) {
    return grad_check(build, params).max_rel_err;
}

}  // namespace

TEST_CASE("matmul values") {
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor p = matmul(eye, m);
    CHECK(p.value()[0] == 1.0);
    CHECK(p.value()[1] == 2.0);
    CHECK(p.value()[2] == 3.0);
    CHECK(p.value()[3] == 4.0);

    Tensor a = Tensor::from({1, 2}, {1, 2});
    Tensor b = Tensor::from({2, 1}, {3, 4});
    CHECK(matmul(a, b).item() == 11.0);

    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimError);
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(11);
    Tensor a = rand_leaf({3, 4}, rng);
    Tensor b = rand_leaf({4, 2}, rng);
    const double err = fd_max_err([&] { return sum(matmul(a, b)); },
                                  {{"a", a}, {"b", b}});
    CHECK(err < 1e-6);

    // Gradient of sum(A*B) w.r.t. A is the row of column-sums of B^T.
    Graph g;
    {
        Graph::Scope scope(g);
        a.zero_grad();
        g.backward(sum(matmul(a, b)));
    }
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            double row_sum = 0.0;
            for (std::size_t c = 0; c < 2; ++c) row_sum += b.value()[j * 2 + c];
            CHECK(a.grad()[i * 4 + j] == doctest::Approx(row_sum).epsilon(1e-12));
        }
    }
}

TEST_CASE("elementwise basics") {
    CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
    CHECK(ad::tanh(Tensor::scalar(0.0)).item() == 0.0);
    // log clamps its argument at 1e-12.
    CHECK(ad::log(Tensor::scalar(1e-20)).item() == std::log(1e-12));
    CHECK(relu(Tensor::from({3}, {-1, 0, 2})).value()[2] == 2.0);
    CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimError);

    // scalar-vs-tensor broadcasting, both sides
    Tensor v = Tensor::from({3}, {1, 2, 3});
    Tensor c = Tensor::scalar(10.0);
    CHECK(add(v, c).value()[2] == 13.0);
    CHECK(sub(c, v).value()[0] == 9.0);
    CHECK(mul(c, v).value()[1] == 20.0);
}

TEST_CASE("reductions") {
    CHECK(mean(Tensor::from({3}, {1, 2, 3})).item() == 2.0);

    Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor s0 = sum(m, 0);
    CHECK(s0.value()[0] == 4.0);
    CHECK(s0.value()[1] == 6.0);
    Tensor s1 = sum(m, 1);
    CHECK(s1.value()[0] == 3.0);
    CHECK(s1.value()[1] == 7.0);
    CHECK_THROWS_AS(sum(m, 2), DimError);

    // max ties route gradient to the lowest flat index
    Tensor t = leaf({3}, {2, 2, 1});
    Graph g;
    {
        Graph::Scope scope(g);
        g.backward(max(t));
    }
    CHECK(t.grad()[0] == 1.0);
    CHECK(t.grad()[1] == 0.0);
    CHECK(t.grad()[2] == 0.0);
}

TEST_CASE("softmax values and stabilization") {
    Tensor a = softmax(Tensor::from({2}, {0, 0}), 0);
    CHECK(a.value()[0] == doctest::Approx(0.5).epsilon(1e-15));

    Tensor b = softmax(Tensor::from({2}, {1000, 1000}), 0);
    CHECK(b.value()[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(b.all_finite());

    Tensor c = softmax(Tensor::from({2}, {0.0, std::log(3.0)}), 0);
    CHECK(c.value()[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(c.value()[1] == doctest::Approx(0.75).epsilon(1e-12));

    Rng rng(3);
    Tensor m = Tensor::uniform({5, 7}, rng, -30.0, 30.0);
    Tensor sm = softmax(m, 1);
    for (std::size_t i = 0; i < 5; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 7; ++j) {
            row += sm.value()[i * 7 + j];
            CHECK(sm.value()[i * 7 + j] > 0.0);
        }
        CHECK(std::fabs(row - 1.0) <= 1e-12);
    }
}

TEST_CASE("backward contract") {
    Tensor x = leaf({2}, {1, 2});
    Graph g;
    Graph::Scope scope(g);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(g.backward(y), ContractError);

    Tensor loss = sum(y);
    g.backward(loss);
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 4.0);
    // repeated backward without zeroing accumulates
    g.backward(loss);
    CHECK(x.grad()[0] == 4.0);
    CHECK(x.grad()[1] == 8.0);
}

TEST_CASE("leaf not involved in loss keeps zero grad") {
    Tensor x = leaf({2}, {1, 2});
    Tensor unused = leaf({2}, {5, 5});
    unused.zero_grad();
    Graph g;
    Graph::Scope scope(g);
    g.backward(sum(mul(x, x)));
    CHECK(unused.grad()[0] == 0.0);
    CHECK(unused.grad()[1] == 0.0);
}

TEST_CASE("grad_check examples") {
    Tensor x = leaf({1}, {3.0});
    std::vector<NamedParam> px = {{"x", x}};
    auto rep = grad_check([&] { return mul(x, x); }, px);
    CHECK(rep.max_rel_err < 1e-9);

    Rng rng(5);
    Tensor a = rand_leaf({2, 3}, rng, -1.0, 1.0);
    Tensor b = rand_leaf({3, 2}, rng, -1.0, 1.0);
    std::vector<NamedParam> pab = {{"a", a}, {"b", b}};
    auto rep2 = grad_check([&] { return sum(sigmoid(matmul(a, b))); }, pab);
    CHECK(rep2.max_rel_err < 1e-6);
}

TEST_CASE("every primitive matches finite differences") {
    Rng rng(20240801);
    const double tol = 1e-5;

    auto check1 = [&](const char* name, auto op, double lo = -2.0, double hi = 2.0) {
        Tensor x = rand_leaf({3, 4}, rng, lo, hi);
        Rng dir_rng = rng.child(1);
        const double err =
            fd_max_err([&, op] { Rng r = dir_rng; return project(op(x), r); },
                       {{std::string(name), x}});
        INFO(name);
        CHECK(err < tol);
    };

    check1("neg", [](const Tensor& t) { return neg(t); });
    check1("sigmoid", [](const Tensor& t) { return sigmoid(t); });
    check1("tanh", [](const Tensor& t) { return ad::tanh(t); });
    check1("exp", [](const Tensor& t) { return ad::exp(t); });
    check1("log_pos", [](const Tensor& t) { return ad::log(t); }, 0.1, 2.0);
    check1("log_clamped", [](const Tensor& t) { return ad::log(t); }, -2.0, -0.1);
    check1("relu", [](const Tensor& t) { return relu(t); });
    check1("abs", [](const Tensor& t) { return ad::abs(t); });
    check1("add_const", [](const Tensor& t) { return add_const(t, 0.7); });
    check1("mul_const", [](const Tensor& t) { return mul_const(t, -1.3); });
    check1("softmax0", [](const Tensor& t) { return softmax(t, 0); });
    check1("softmax1", [](const Tensor& t) { return softmax(t, 1); });
    check1("transpose", [](const Tensor& t) { return transpose(t); });
    check1("reshape", [](const Tensor& t) { return reshape(t, {2, 6}); });
    check1("narrow_rows", [](const Tensor& t) { return narrow(t, 0, 1, 2); });
    check1("narrow_cols", [](const Tensor& t) { return narrow(t, 1, 1, 3); });
    check1("sum_axis0", [](const Tensor& t) { return sum(t, 0); });
    check1("sum_axis1", [](const Tensor& t) { return sum(t, 1); });
    check1("mean_axis0", [](const Tensor& t) { return mean(t, 0); });
    check1("mean_full", [](const Tensor& t) { return mean(t); });
    check1("max_full", [](const Tensor& t) { return max(t); });
    check1("max_axis1", [](const Tensor& t) { return max(t, 1); });

    auto check2 = [&](const char* name, auto op, Shape sa, Shape sb) {
        Tensor x = rand_leaf(sa, rng);
        Tensor y = rand_leaf(sb, rng);
        Rng dir_rng = rng.child(2);
        const double err = fd_max_err(
            [&, op] { Rng r = dir_rng; return project(op(x, y), r); },
            {{std::string(name) + ".a", x}, {std::string(name) + ".b", y}});
        INFO(name);
        CHECK(err < tol);
    };

    check2("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, {3, 4}, {3, 4});
    check2("add_scalar_rhs", [](const Tensor& a, const Tensor& b) { return add(a, b); }, {3, 4}, {1});
    check2("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, {3, 4}, {3, 4});
    check2("sub_scalar_lhs", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, {1}, {3, 4});
    check2("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, {3, 4}, {3, 4});
    check2("mul_scalar_rhs", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, {3, 4}, {1});
    check2("matmul", [](const Tensor& a, const Tensor& b) { return matmul(a, b); }, {3, 4}, {4, 5});
    check2("matmul_pret",
           [](const Tensor& a, const Tensor& b) {
               return matmul_pret(a, b, transpose(detach(b)));
           },
           {3, 4}, {4, 5});
    check2("matmul_pret_rowvec",
           [](const Tensor& a, const Tensor& b) {
               return matmul_pret(a, b, transpose(detach(b)));
           },
           {1, 4}, {4, 5});
    check2("row_scale", [](const Tensor& a, const Tensor& b) { return row_scale(a, b); }, {3, 4}, {3});
    check2("add_row_broadcast",
           [](const Tensor& a, const Tensor& b) { return add_row_broadcast(a, b); }, {3, 4}, {4});
    check2("concat_rows",
           [](const Tensor& a, const Tensor& b) {
               const Tensor parts[] = {a, b};
               return concat(parts, 0);
           },
           {2, 4}, {3, 4});
    check2("concat_cols",
           [](const Tensor& a, const Tensor& b) {
               const Tensor parts[] = {a, b};
               return concat(parts, 1);
           },
           {3, 2}, {3, 5});

    // layer_norm and lstm_gates
    {
        Tensor x = rand_leaf({3, 6}, rng);
        Tensor gain = rand_leaf({6}, rng, 0.5, 1.5);
        Tensor bias = rand_leaf({6}, rng, -0.5, 0.5);
        Rng dir_rng = rng.child(3);
        const double err = fd_max_err(
            [&] {
                Rng r = dir_rng;
                return project(layer_norm(x, gain, bias, 1e-5), r);
            },
            {{std::string("ln.x"), x}, {std::string("ln.g"), gain},
             {std::string("ln.b"), bias}});
        CHECK(err < tol);
    }
    {
        Tensor pre = rand_leaf({1, 12}, rng);
        Tensor c_prev = rand_leaf({1, 3}, rng);
        Rng dir_rng = rng.child(4);
        const double err = fd_max_err(
            [&] {
                Rng r = dir_rng;
                return project(lstm_gates(pre, c_prev), r);
            },
            {{std::string("lg.pre"), pre}, {std::string("lg.c"), c_prev}});
        CHECK(err < tol);
    }
}

TEST_CASE("operations are deterministic and kernel-path invariant") {
    Rng rng(99);
    Tensor a = Tensor::uniform({7, 9}, rng, -2.0, 2.0);
    Tensor b = Tensor::uniform({9, 5}, rng, -2.0, 2.0);

    auto run = [&]() {
        Tensor y = sigmoid(matmul(a, b));
        Tensor z = softmax(y, 1);
        return std::vector<double>(z.value().begin(), z.value().end());
    };

    auto r1 = run();
    auto r2 = run();
    REQUIRE(r1.size() == r2.size());
    CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);

    if (kern::avx2_available()) {
        const kern::Path saved = kern::active_path();
        kern::set_path(kern::Path::scalar);
        auto rs = run();
        kern::set_path(kern::Path::avx2);
        auto rv = run();
        kern::set_path(saved);
        CHECK(std::memcmp(rs.data(), rv.data(), rs.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("check_finite raises on NaN") {
    Tensor ok = Tensor::from({2}, {1.0, 2.0});
    CHECK_NOTHROW(check_finite(ok, "ok"));
    Tensor bad = Tensor::from({2}, {1.0, std::nan("")});
    CHECK_THROWS_AS(check_finite(bad, "bad"), NumericError);
}
