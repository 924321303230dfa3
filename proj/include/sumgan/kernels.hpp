#pragma once

#include <cstddef>

namespace sumgan::kern {

/// Which implementation backs the arithmetic kernels. `scalar` is the
/// reference; `avx2` must produce bit-identical results (every kernel keeps
/// the per-element operation order of the scalar path, and FMA contraction
/// is disabled project-wide).
enum class Path { scalar, avx2 };

const char* path_name(Path p);

/// True when the binary contains the AVX2 translation unit and the CPU
/// reports AVX2 support.
bool avx2_available();

/// Active path. Defaults to the best available one; the SUMGAN_KERNELS
/// environment variable (scalar | avx2 | auto) overrides at startup.
Path active_path();

/// Select a path explicitly (tests use this). Returns false and leaves the
/// path unchanged when the requested one is unavailable.
bool set_path(Path p);

// Elementwise kernels; aliasing y with an input is allowed.
void add(const double* a, const double* b, double* y, std::size_t n);
void sub(const double* a, const double* b, double* y, std::size_t n);
void mul(const double* a, const double* b, double* y, std::size_t n);
void scale(const double* a, double c, double* y, std::size_t n);
void axpy(double c, const double* x, double* y, std::size_t n);  // y += c*x
void acc(const double* x, double* y, std::size_t n);             // y += x
void relu(const double* a, double* y, std::size_t n);

/// C[m x n] += A[m x k] * B[k x n], all row-major. Every output element
/// accumulates in ascending k order, so the scalar and SIMD paths agree
/// bit-for-bit.
void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);

namespace detail {

struct KernelTable {
    void (*add)(const double*, const double*, double*, std::size_t);
    void (*sub)(const double*, const double*, double*, std::size_t);
    void (*mul)(const double*, const double*, double*, std::size_t);
    void (*scale)(const double*, double, double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*acc)(const double*, double*, std::size_t);
    void (*relu)(const double*, double*, std::size_t);
    void (*matmul_acc)(const double*, const double*, double*,
                       std::size_t, std::size_t, std::size_t);
};

extern const KernelTable scalar_table;
const KernelTable* avx2_table();  // nullptr when unavailable in this build

}  // namespace detail

}  // namespace sumgan::kern
