#include "fedsim/theory.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fedsim::theory {

namespace {
constexpr double kE = std::numbers::e;
constexpr double kE2 = kE * kE;

double participation_term(const TheoryInputs& in) {
    if (in.r == in.n) return in.q / static_cast<double>(in.n);
    if (in.n == 1) throw std::invalid_argument("theory: n = 1 with r < n is ill-defined");
    const double n = static_cast<double>(in.n), r = static_cast<double>(in.r);
    return in.q / n + (1.0 + in.q) * (n - r) / (r * (n - 1.0));
}
}  // namespace

void validate(const TheoryInputs& in) {
    if (in.L <= 0.0) throw std::invalid_argument("theory: L must be positive");
    if (in.n < 1 || in.r < 1 || in.E < 1 || in.K < 1)
        throw std::invalid_argument("theory: n, r, E, K must be >= 1");
    if (in.r > in.n) throw std::invalid_argument("theory: r > n");
    if (in.q < 0.0) throw std::invalid_argument("theory: q must be >= 0");
    if (in.alpha <= 0.0 || in.alpha > static_cast<double>(in.n))
        throw std::invalid_argument("theory: alpha must be in (0, n]");
    if (in.f0 < 0.0) throw std::invalid_argument("theory: f0 must be >= 0");
    if (in.sigma2 < 0.0) throw std::invalid_argument("theory: sigma2 must be >= 0");
}

double glomo_inner_constant(const TheoryInputs& in) {
    const double n = static_cast<double>(in.n), E = static_cast<double>(in.E);
    const double first = (in.alpha + 4.0 / E) / n;
    const double second =
        800.0 * kE2 * (1.0 + in.q) * (E + 1.0) * (E + 1.0) * participation_term(in);
    return first + second;
}

double glomo_eta(const TheoryInputs& in) {
    validate(in);
    const double inner = glomo_inner_constant(in);
    return 1.0 / (6.0 * in.L * static_cast<double>(in.E) *
                  std::cbrt(static_cast<double>(in.K)) * std::cbrt(inner));
}

double glomo_beta(const TheoryInputs& in, double eta) {
    if (eta <= 0.0) throw std::invalid_argument("glomo_beta: eta must be positive");
    const double E = static_cast<double>(in.E);
    const double beta =
        160.0 * kE2 * (1.0 + in.q) * eta * eta * in.L * in.L * E * E * (E + 1.0) * (E + 1.0);
    if (beta >= 1.0) {
        throw std::invalid_argument(
            "glomo_beta: formula gives beta >= 1; the range condition "
            "E+1 <= sqrt(1+q)(n-r)K/(3r(n-1)) is violated — reduce E or increase K");
    }
    return beta;
}

double glomo_rate_bound(const TheoryInputs& in) {
    validate(in);
    const double inner = glomo_inner_constant(in);
    return 39.0 * in.L * in.f0 * std::cbrt(inner) /
           std::pow(static_cast<double>(in.K), 2.0 / 3.0);
}

LomoSchedule lomo_eta(const TheoryInputs& in) {
    validate(in);
    const double n = static_cast<double>(in.n), r = static_cast<double>(in.r),
                 E = static_cast<double>(in.E), K = static_cast<double>(in.K);
    LomoSchedule out;
    out.B = in.q / n;
    if (in.r < in.n) out.B += 4.0 * (1.0 + in.q) * (n - r) / (r * (n - 1.0));
    if (out.B == 0.0)
        throw std::invalid_argument(
            "lomo_eta: B = 0 (q = 0 and r = n); the FedLOMO rate degenerates in this regime");
    out.eta = 1.0 / (8.0 * in.L * E * std::sqrt(out.B * K));
    out.zeta = 1.0 / (4.0 * K) +
               (in.alpha + 4.0 / E) / n / (16.0 * std::pow(out.B * K, 1.5));
    return out;
}

FedAvgSchedule fedavg_eta(const TheoryInputs& in) {
    validate(in);
    const double n = static_cast<double>(in.n), r = static_cast<double>(in.r),
                 E = static_cast<double>(in.E), K = static_cast<double>(in.K);
    double inner = 4.0 * in.alpha / (9.0 * n);
    if (in.r < in.n) inner += (n - r) / (6.0 * r * (n - 1.0));
    if (inner <= 0.0) throw std::invalid_argument("fedavg_eta: degenerate inner constant");
    FedAvgSchedule out;
    out.eta = 1.0 / (in.L * E * std::sqrt(3.0 * inner * K));
    out.zeta = out.eta * out.eta * in.L * in.L * E * E * inner;
    return out;
}

std::vector<double> eval_iterate_pmf(double zeta, std::size_t K) {
    if (zeta < 0.0) throw std::invalid_argument("eval_iterate_pmf: zeta must be >= 0");
    if (K < 1) throw std::invalid_argument("eval_iterate_pmf: K must be >= 1");
    // log-domain weights avoid overflow for large zeta*K
    std::vector<double> logw(K);
    const double l1z = std::log1p(zeta);
    double lmax = -1e300;
    for (std::size_t k = 0; k < K; ++k) {
        logw[k] = static_cast<double>(K - 1 - k) * l1z;
        lmax = std::max(lmax, logw[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(logw[k] - lmax);
    std::vector<double> pmf(K);
    for (std::size_t k = 0; k < K; ++k) pmf[k] = std::exp(logw[k] - lmax) / z;
    return pmf;
}

std::size_t sample_eval_iterate(double zeta, std::size_t K, RngStream& rng) {
    const auto pmf = eval_iterate_pmf(zeta, K);
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        cum += pmf[k];
        if (u < cum) return k;
    }
    return K - 1;
}

std::vector<std::string> range_condition_warnings(const TheoryInputs& in) {
    std::vector<std::string> warnings;
    const double E1 = static_cast<double>(in.E) + 1.0;
    const double K = static_cast<double>(in.K);
    const double pt = participation_term(in);
    if (pt > 0.0) {
        const double lower = std::pow(K, -1.0 / 3.0) / (1200.0 * kE2 * (1.0 + in.q) * pt);
        if (E1 < lower)
            warnings.push_back("theorem range: E+1 = " + std::to_string(E1) +
                               " is below the lower bound " + std::to_string(lower));
    }
    if (in.r < in.n) {
        const double n = static_cast<double>(in.n), r = static_cast<double>(in.r);
        const double upper = std::sqrt(1.0 + in.q) * (n - r) / (3.0 * r * (n - 1.0)) * K;
        if (E1 > upper)
            warnings.push_back("theorem range: E+1 = " + std::to_string(E1) +
                               " exceeds the upper bound " + std::to_string(upper));
    }
    return warnings;
}

}  // namespace fedsim::theory
