#include "sumgan/kernels.hpp"

// AVX2 variants. Compiled with -mavx2 when the toolchain supports it;
// otherwise this TU degenerates to "no table". Vector ops use mul+add
// pairs (never FMA) and preserve the scalar path's per-element operation
// order, so results are bit-identical to the reference kernels.

#ifdef SUMGAN_AVX2_TU

#include <immintrin.h>

namespace sumgan::kern::detail {

namespace {

void add_avx2(const double* a, const double* b, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void scale_avx2(const double* a, double c, double* y, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vc));
    }
    for (; i < n; ++i) y[i] = a[i] * c;
}

void axpy_avx2(double c, const double* x, double* y, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(vc, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += c * x[i];
}

void acc_avx2(const double* x, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i),
                                              _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) y[i] += x[i];
}

void relu_avx2(const double* a, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
    }
    for (; i < n; ++i) y[i] = a[i] > 0.0 ? a[i] : 0.0;
}

// Two C rows x 16 columns per block; the k loop updates each accumulator
// with one mul and one add per step, matching the scalar order.
void matmul_acc_avx2(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t n16 = n / 16 * 16;
    const std::size_t n4 = n / 4 * 4;

    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = a + i * k;
        const double* a1 = a0 + k;
        double* c0 = c + i * n;
        double* c1 = c0 + n;

        for (std::size_t j = 0; j < n16; j += 16) {
            __m256d r00 = _mm256_loadu_pd(c0 + j);
            __m256d r01 = _mm256_loadu_pd(c0 + j + 4);
            __m256d r02 = _mm256_loadu_pd(c0 + j + 8);
            __m256d r03 = _mm256_loadu_pd(c0 + j + 12);
            __m256d r10 = _mm256_loadu_pd(c1 + j);
            __m256d r11 = _mm256_loadu_pd(c1 + j + 4);
            __m256d r12 = _mm256_loadu_pd(c1 + j + 8);
            __m256d r13 = _mm256_loadu_pd(c1 + j + 12);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d va0 = _mm256_set1_pd(a0[p]);
                const __m256d va1 = _mm256_set1_pd(a1[p]);
                const double* bp = b + p * n + j;
                const __m256d b0 = _mm256_loadu_pd(bp);
                const __m256d b1 = _mm256_loadu_pd(bp + 4);
                const __m256d b2 = _mm256_loadu_pd(bp + 8);
                const __m256d b3 = _mm256_loadu_pd(bp + 12);
                r00 = _mm256_add_pd(r00, _mm256_mul_pd(va0, b0));
                r01 = _mm256_add_pd(r01, _mm256_mul_pd(va0, b1));
                r02 = _mm256_add_pd(r02, _mm256_mul_pd(va0, b2));
                r03 = _mm256_add_pd(r03, _mm256_mul_pd(va0, b3));
                r10 = _mm256_add_pd(r10, _mm256_mul_pd(va1, b0));
                r11 = _mm256_add_pd(r11, _mm256_mul_pd(va1, b1));
                r12 = _mm256_add_pd(r12, _mm256_mul_pd(va1, b2));
                r13 = _mm256_add_pd(r13, _mm256_mul_pd(va1, b3));
            }
            _mm256_storeu_pd(c0 + j, r00);
            _mm256_storeu_pd(c0 + j + 4, r01);
            _mm256_storeu_pd(c0 + j + 8, r02);
            _mm256_storeu_pd(c0 + j + 12, r03);
            _mm256_storeu_pd(c1 + j, r10);
            _mm256_storeu_pd(c1 + j + 4, r11);
            _mm256_storeu_pd(c1 + j + 8, r12);
            _mm256_storeu_pd(c1 + j + 12, r13);
        }
        for (std::size_t j = n16; j < n4; j += 4) {
            __m256d r0 = _mm256_loadu_pd(c0 + j);
            __m256d r1 = _mm256_loadu_pd(c1 + j);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d bv = _mm256_loadu_pd(b + p * n + j);
                r0 = _mm256_add_pd(r0, _mm256_mul_pd(_mm256_set1_pd(a0[p]), bv));
                r1 = _mm256_add_pd(r1, _mm256_mul_pd(_mm256_set1_pd(a1[p]), bv));
            }
            _mm256_storeu_pd(c0 + j, r0);
            _mm256_storeu_pd(c1 + j, r1);
        }
        for (std::size_t j = n4; j < n; ++j) {
            double s0 = c0[j];
            double s1 = c1[j];
            for (std::size_t p = 0; p < k; ++p) {
                s0 += a0[p] * b[p * n + j];
                s1 += a1[p] * b[p * n + j];
            }
            c0[j] = s0;
            c1[j] = s1;
        }
    }

    if (i < m) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n16; j += 16) {
            __m256d r0 = _mm256_loadu_pd(ci + j);
            __m256d r1 = _mm256_loadu_pd(ci + j + 4);
            __m256d r2 = _mm256_loadu_pd(ci + j + 8);
            __m256d r3 = _mm256_loadu_pd(ci + j + 12);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d va = _mm256_set1_pd(ai[p]);
                const double* bp = b + p * n + j;
                r0 = _mm256_add_pd(r0, _mm256_mul_pd(va, _mm256_loadu_pd(bp)));
                r1 = _mm256_add_pd(r1, _mm256_mul_pd(va, _mm256_loadu_pd(bp + 4)));
                r2 = _mm256_add_pd(r2, _mm256_mul_pd(va, _mm256_loadu_pd(bp + 8)));
                r3 = _mm256_add_pd(r3, _mm256_mul_pd(va, _mm256_loadu_pd(bp + 12)));
            }
            _mm256_storeu_pd(ci + j, r0);
            _mm256_storeu_pd(ci + j + 4, r1);
            _mm256_storeu_pd(ci + j + 8, r2);
            _mm256_storeu_pd(ci + j + 12, r3);
        }
        for (std::size_t j = n16; j < n4; j += 4) {
            __m256d r = _mm256_loadu_pd(ci + j);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d bv = _mm256_loadu_pd(b + p * n + j);
                r = _mm256_add_pd(r, _mm256_mul_pd(_mm256_set1_pd(ai[p]), bv));
            }
            _mm256_storeu_pd(ci + j, r);
        }
        for (std::size_t j = n4; j < n; ++j) {
            double s = ci[j];
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * b[p * n + j];
            ci[j] = s;
        }
    }
}

const KernelTable avx2_table_impl = {
    add_avx2, sub_avx2, mul_avx2, scale_avx2,
    axpy_avx2, acc_avx2, relu_avx2, matmul_acc_avx2,
};

}  // namespace

const KernelTable* avx2_table() { return &avx2_table_impl; }

}  // namespace sumgan::kern::detail

#else  // !SUMGAN_AVX2_TU

namespace sumgan::kern::detail {

const KernelTable* avx2_table() { return nullptr; }

}  // namespace sumgan::kern::detail

#endif
