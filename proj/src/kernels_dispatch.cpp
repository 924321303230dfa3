#include "sumgan/kernels.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace sumgan::kern {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

struct Dispatch {
    std::atomic<const detail::KernelTable*> table;
    std::atomic<Path> path;

    Dispatch() {
        const detail::KernelTable* t = &detail::scalar_table;
        Path p = Path::scalar;
        const bool have_avx2 = detail::avx2_table() != nullptr && cpu_has_avx2();
        const char* env = std::getenv("SUMGAN_KERNELS");
        if (env != nullptr && std::strcmp(env, "scalar") == 0) {
            // keep scalar
        } else if (env != nullptr && std::strcmp(env, "avx2") == 0 && !have_avx2) {
            std::fprintf(stderr,
                         "sumgan: SUMGAN_KERNELS=avx2 requested but AVX2 is "
                         "unavailable; using scalar kernels\n");
        } else if (have_avx2) {
            t = detail::avx2_table();
            p = Path::avx2;
        }
        table.store(t, std::memory_order_relaxed);
        path.store(p, std::memory_order_relaxed);
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

const detail::KernelTable& table() {
    return *dispatch().table.load(std::memory_order_relaxed);
}

}  // namespace

const char* path_name(Path p) {
    return p == Path::avx2 ? "avx2" : "scalar";
}

bool avx2_available() {
    return detail::avx2_table() != nullptr && cpu_has_avx2();
}

Path active_path() { return dispatch().path.load(std::memory_order_relaxed); }

bool set_path(Path p) {
    if (p == Path::avx2) {
        if (!avx2_available()) return false;
        dispatch().table.store(detail::avx2_table(), std::memory_order_relaxed);
    } else {
        dispatch().table.store(&detail::scalar_table, std::memory_order_relaxed);
    }
    dispatch().path.store(p, std::memory_order_relaxed);
    return true;
}

void add(const double* a, const double* b, double* y, std::size_t n) {
    table().add(a, b, y, n);
}
void sub(const double* a, const double* b, double* y, std::size_t n) {
    table().sub(a, b, y, n);
}
void mul(const double* a, const double* b, double* y, std::size_t n) {
    table().mul(a, b, y, n);
}
void scale(const double* a, double c, double* y, std::size_t n) {
    table().scale(a, c, y, n);
}
void axpy(double c, const double* x, double* y, std::size_t n) {
    table().axpy(c, x, y, n);
}
void acc(const double* x, double* y, std::size_t n) { table().acc(x, y, n); }
void relu(const double* a, double* y, std::size_t n) { table().relu(a, y, n); }
void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
    table().matmul_acc(a, b, c, m, k, n);
}

}  // namespace sumgan::kern
