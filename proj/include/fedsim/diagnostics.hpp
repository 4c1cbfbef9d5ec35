#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedsim/algorithms.hpp"
#include "fedsim/problems.hpp"
#include "fedsim/vec.hpp"

namespace fedsim::diagnostics {

struct AlphaProbe {
    std::size_t round = 0;
    double alpha_hat = 0.0;
    std::vector<double> per_tau_ratios;  // tau = 1..E
};

/// trajectories[i] holds client i's local parameters w_{k,0..E}; the ratio
/// ||sum_i e_tau^(i)||^2 / sum_i ||e_tau^(i)||^2 is taken per local step
/// and maximized over tau. An all-zero denominator defines the ratio as 0.
AlphaProbe alpha_estimate(const FederatedProblem& problem,
                          const std::vector<std::vector<ParamVector>>& trajectories,
                          std::size_t round = 0);

/// Eq.-(2)-style dissimilarity at w: mean and max over clients of
/// ||grad f_i(w) - grad f(w)||^2.
std::pair<double, double> bcd_estimate(const FederatedProblem& problem, const ParamVector& w);

/// Re-draws client subsets and quantizer randomness n_resamples times at
/// the current iterate and compares the trace variance of the momentum
/// aggregation u_k against plain averaging. Requires k >= 1.
std::pair<double, double> aggregation_variance_probe(const ServerState& state,
                                                     const FederatedProblem& problem,
                                                     const HyperParams& hp,
                                                     const QuantizerSpec& quantizer,
                                                     std::size_t n_resamples, RngStream& rng);

struct DriftLemmaResult {
    double max_ratio = 0.0;
    double bound = 0.0;
    bool holds = false;
    bool precondition_met = true;  // 2 eta L E^2 <= 1
};

/// Checks max_i ||delta_i|| <= 2e * eta L E (E+1) * ||w_k - w_prev|| on
/// raw (pre-quantization) paired-trajectory deltas of one round.
DriftLemmaResult drift_lemma_monitor(const std::vector<ParamVector>& client_deltas,
                                     const ParamVector& w_k, const ParamVector& w_prev,
                                     double eta, double L, std::size_t E);

}  // namespace fedsim::diagnostics
