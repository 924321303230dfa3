#include "sumgan/kernels.hpp"

// Reference kernels. The matmul loop nest is (i, k, j): each C element is a
// running sum over k with j innermost, which is the order the AVX2 variant
// reproduces lane-for-lane.

namespace sumgan::kern::detail {

namespace {

void add_scalar(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void scale_scalar(const double* a, double c, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * c;
}

void axpy_scalar(double c, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += c * x[i];
}

void acc_scalar(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void relu_scalar(const double* a, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void matmul_acc_scalar(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

}  // namespace

const KernelTable scalar_table = {
    add_scalar, sub_scalar, mul_scalar, scale_scalar,
    axpy_scalar, acc_scalar, relu_scalar, matmul_acc_scalar,
};

}  // namespace sumgan::kern::detail
