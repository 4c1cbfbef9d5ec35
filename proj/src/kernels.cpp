#include "fedsim/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define FEDSIM_X86 1
#endif

namespace fedsim::kernels {

namespace scalar {

void axpy(double a, const double* x, const double* y, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + y[i];
}

double dot(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double sq_norm(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

}  // namespace scalar

#ifdef FEDSIM_X86
namespace avx2 {

// Mul+add (not FMA) so per-element results are bit-identical to the
// scalar kernel; only the reduction order differs in dot/sq_norm.
__attribute__((target("avx2"))) void axpy(double a, const double* x, const double* y,
                                          double* out, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d vy = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_mul_pd(va, vx), vy));
    }
    for (; i < n; ++i) out[i] = a * x[i] + y[i];
}

__attribute__((target("avx2"))) double dot(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d vy = _mm256_loadu_pd(y + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(vx, vy));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double r = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) r += x[i] * y[i];
    return r;
}

__attribute__((target("avx2"))) double sq_norm(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(vx, vx));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double r = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

}  // namespace avx2
#endif

namespace {

Isa detect() {
#ifdef FEDSIM_X86
    if (__builtin_cpu_supports("avx2")) return Isa::avx2;
#endif
    return Isa::scalar;
}

Isa g_isa = detect();

}  // namespace

Isa best_isa() { return detect(); }
Isa active_isa() { return g_isa; }
void force_isa(Isa isa) {
#ifdef FEDSIM_X86
    g_isa = isa;
#else
    (void)isa;
    g_isa = Isa::scalar;
#endif
}

void axpy(double a, const double* x, const double* y, double* out, std::size_t n) {
#ifdef FEDSIM_X86
    if (g_isa == Isa::avx2) return avx2::axpy(a, x, y, out, n);
#endif
    scalar::axpy(a, x, y, out, n);
}

double dot(const double* x, const double* y, std::size_t n) {
#ifdef FEDSIM_X86
    if (g_isa == Isa::avx2) return avx2::dot(x, y, n);
#endif
    return scalar::dot(x, y, n);
}

double sq_norm(const double* x, std::size_t n) {
#ifdef FEDSIM_X86
    if (g_isa == Isa::avx2) return avx2::sq_norm(x, n);
#endif
    return scalar::sq_norm(x, n);
}

}  // namespace fedsim::kernels
