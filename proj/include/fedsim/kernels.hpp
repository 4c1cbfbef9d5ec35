#pragma once

#include <cstddef>

// Dense double-precision inner loops. Scalar reference kernels always
// exist; an AVX2+FMA variant is selected once at startup when the CPU
// supports it. force_isa() pins a variant for equivalence testing.

namespace fedsim::kernels {

enum class Isa { scalar, avx2 };

Isa active_isa();
Isa best_isa();
void force_isa(Isa isa);

// out[i] = a * x[i] + y[i]
void axpy(double a, const double* x, const double* y, double* out, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sq_norm(const double* x, std::size_t n);

namespace scalar {
void axpy(double a, const double* x, const double* y, double* out, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sq_norm(const double* x, std::size_t n);
}  // namespace scalar

}  // namespace fedsim::kernels
