#pragma once

#include <string>
#include <vector>

#include "fedsim/rng.hpp"

namespace fedsim::theory {

/// Constants feeding the step-size prescriptions and the rate bounds.
struct TheoryInputs {
    double L = 1.0;
    std::size_t n = 1, r = 1, E = 1, K = 1;
    double q = 0.0;       // quantizer relative variance factor
    double alpha = 1.0;   // heterogeneity constant, in (0, n]
    double f0 = 0.0;      // f(w_0)
    double sigma2 = 0.0;  // local stochastic-gradient variance (FedAvg bound only)
};

void validate(const TheoryInputs& in);

/// Shared inner constant: (1/n)(alpha + 4/E) + 800 e^2 (1+q)(E+1)^2 (q/n + (1+q)(n-r)/(r(n-1))).
double glomo_inner_constant(const TheoryInputs& in);

double glomo_eta(const TheoryInputs& in);

/// 160 e^2 (1+q) eta^2 L^2 E^2 (E+1)^2. Throws if the result is >= 1, with
/// the violated range condition on E+1 named in the message.
double glomo_beta(const TheoryInputs& in, double eta);

/// 39 L f0 / K^{2/3} * (inner constant)^{1/3}
double glomo_rate_bound(const TheoryInputs& in);

struct LomoSchedule {
    double eta = 0.0;
    double B = 0.0;
    double zeta = 0.0;
};
/// eta = 1/(8 L E sqrt(B K)), B = q/n + 4(1+q)(n-r)/(r(n-1)). Throws when
/// B = 0 (no compression, full participation) where the rate degenerates.
LomoSchedule lomo_eta(const TheoryInputs& in);

struct FedAvgSchedule {
    double eta = 0.0;
    double zeta = 0.0;
};
FedAvgSchedule fedavg_eta(const TheoryInputs& in);

/// Evaluation-iterate distribution P(k) ~ (1+zeta)^(K-1-k); zeta = 0 is uniform.
std::vector<double> eval_iterate_pmf(double zeta, std::size_t K);
std::size_t sample_eval_iterate(double zeta, std::size_t K, RngStream& rng);

/// Range-condition warnings (informational, never fatal).
std::vector<std::string> range_condition_warnings(const TheoryInputs& in);

}  // namespace fedsim::theory
