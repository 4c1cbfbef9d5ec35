#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "fedsim/kernels.hpp"

namespace fedsim {

/// Flat vector of model parameters. Immutable by convention once handed
/// out of an operation; all public operations keep entries finite.
using ParamVector = std::vector<double>;

inline bool all_finite(const ParamVector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void require_same_dim(const ParamVector& x, const ParamVector& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("dimension mismatch: " + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()));
}

/// a*x + y
inline ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
    require_same_dim(x, y);
    ParamVector out(x.size());
    kernels::axpy(a, x.data(), y.data(), out.data(), x.size());
    return out;
}

/// y += a*x
inline void axpy_inplace(double a, const ParamVector& x, ParamVector& y) {
    require_same_dim(x, y);
    kernels::axpy(a, x.data(), y.data(), y.data(), x.size());
}

inline double dot(const ParamVector& x, const ParamVector& y) {
    require_same_dim(x, y);
    return kernels::dot(x.data(), y.data(), x.size());
}

inline double sq_norm(const ParamVector& x) {
    return kernels::sq_norm(x.data(), x.size());
}

inline double norm(const ParamVector& x) { return std::sqrt(sq_norm(x)); }

inline ParamVector sub(const ParamVector& x, const ParamVector& y) {
    return axpy(-1.0, y, x);
}

inline ParamVector add(const ParamVector& x, const ParamVector& y) {
    return axpy(1.0, x, y);
}

inline ParamVector scale(double a, const ParamVector& x) {
    ParamVector zero(x.size(), 0.0);
    return axpy(a, x, zero);
}

inline ParamVector zeros(std::size_t d) { return ParamVector(d, 0.0); }

}  // namespace fedsim
