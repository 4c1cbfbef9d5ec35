#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/problems.hpp"
#include "fedsim/quantizer.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/vec.hpp"

namespace fedsim {

enum class Algorithm { fedglomo, fedlomo, fedavg, fedpaq };

struct ServerState {
    ParamVector w_curr;
    ParamVector w_prev;
    std::optional<ParamVector> u_prev;  // absent iff k = 0
    std::size_t k = 0;

    static ServerState initial(ParamVector w0) {
        ServerState st;
        st.w_prev = w0;  // w_{-1} = w_0
        st.w_curr = std::move(w0);
        return st;
    }
};

struct HyperParams {
    double eta0 = 0.01;
    double beta = 0.2;
    std::size_t E = 10;
    std::size_t K = 100;
    std::size_t r = 25;
    double damping = 1.0;
    double lr_decay = 0.99;
    double local_momentum_gamma = 0.0;  // FedAvg-m / FedPAQ-m heavy-ball factor
    bool full_participation_round0 = true;
    bool full_batch_round0 = true;
    std::size_t batch_size = 32;
    std::size_t anchor_batch = 0;  // 0 = exact full gradient at tau = 0
    bool combined_uncompressed = false;  // single combined uplink vector when uncompressed

    double eta_at(std::size_t k) const { return std::pow(lr_decay, static_cast<double>(k)) * eta0; }
};

struct ClientMessageGlomo {
    QuantizedVector q_drift;   // Q_D(w_k - w_{k,E}^(i))
    QuantizedVector q_delta;   // Q_D((w_k - w_{k,E}) - (w_{k-1} - what_{k-1,E}))
    std::int64_t uplink_bits = 0;
    // raw (pre-quantization) quantities, kept for diagnostics
    ParamVector drift_raw;
    ParamVector delta_raw;
};

struct ClientMessageSimple {
    QuantizedVector q_drift;  // Q_D of the local displacement
    std::int64_t uplink_bits = 0;
    ParamVector drift_raw;
};

/// Thrown when a local trajectory or the server iterate goes non-finite.
class DivergenceError : public std::runtime_error {
  public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Instrumentation hook: called once per stochastic local step with the
/// batch used for every gradient evaluation at that step.
using BatchHook = std::function<void(std::size_t client, std::size_t tau,
                                     const std::vector<std::uint32_t>& batch)>;

struct ClientUpdateOptions {
    std::uint64_t seed = 0;
    std::size_t round = 0;
    bool full_batch = false;          // forces exact gradients at every tau
    bool record_trajectory = false;   // keep w_{k,tau} for probes
    BatchHook batch_hook;
};

struct GlomoClientResult {
    ClientMessageGlomo message;
    std::vector<ParamVector> trajectory;      // w_{k,0..E}, when recorded
    std::vector<ParamVector> trajectory_hat;  // what_{k-1,0..E}, when recorded
};

std::vector<std::uint32_t> sample_clients(std::size_t n, std::size_t r, RngStream& rng);

GlomoClientResult glomo_client_update(const FederatedProblem& problem, std::size_t i,
                                      const ParamVector& w_k, const ParamVector& w_prev,
                                      double eta_k, const HyperParams& hp,
                                      const QuantizerSpec& quantizer,
                                      const ClientUpdateOptions& opt);

/// Single-trajectory SPIDER local update (FedLOMO client); sends
/// Q_D(w_{k,E} - w_k).
struct SimpleClientResult {
    ClientMessageSimple message;
    std::vector<ParamVector> trajectory;
};

SimpleClientResult lomo_client_update(const FederatedProblem& problem, std::size_t i,
                                      const ParamVector& w_k, double eta_k,
                                      const HyperParams& hp, const QuantizerSpec& quantizer,
                                      const ClientUpdateOptions& opt);

/// E local SGD steps with optional heavy-ball momentum; sends
/// Q_D(w_k - w_{k,E}).
SimpleClientResult fedavg_client_update(const FederatedProblem& problem, std::size_t i,
                                        const ParamVector& w_k, double eta_k,
                                        const HyperParams& hp, const QuantizerSpec& quantizer,
                                        const ClientUpdateOptions& opt);

/// Momentum aggregation (Alg. 1 lines 8/10/11). Mutates state in place.
void glomo_server_round(ServerState& state, const std::vector<ClientMessageGlomo>& messages,
                        double beta_k);

/// Plain quantized averaging: w_{k+1} = w_k + (1/r) sum decode(q).
void averaging_server_round(ServerState& state, const std::vector<ClientMessageSimple>& messages,
                            bool message_is_descent);

struct ProbeIntervals {
    std::size_t alpha_every = 0;
    std::size_t variance_every = 0;
    std::size_t lemma_every = 0;
    std::size_t bcd_every = 0;
    std::size_t variance_resamples = 500;
};

enum class RoundStatus { ok, diverged };

struct RoundRecord {
    std::size_t k = 0;
    double loss = 0.0;
    double grad_sq_norm = 0.0;
    std::int64_t bits_up = 0;
    std::int64_t bits_down = 0;
    std::int64_t cumulative_bits = 0;
    double eta_k = 0.0;
    std::optional<double> alpha_hat;
    std::optional<std::pair<double, double>> bcd;          // (mean_sq, max_sq)
    std::optional<std::pair<double, double>> var_probe;    // (var_glomo, var_plain)
    struct Lemma {
        double max_ratio = 0.0;
        double bound = 0.0;
        bool holds = false;
        bool precondition_met = true;
    };
    std::optional<Lemma> lemma;
    double wall_time_s = 0.0;
    RoundStatus status = RoundStatus::ok;
};

struct ExperimentSpec {
    Algorithm algo = Algorithm::fedavg;
    HyperParams hp;
    QuantizerSpec quantizer;
    std::uint64_t seed = 0;
    ProbeIntervals probes;
    bool parallel_clients = false;
    double w0_scale = 0.5;  // init draw scale (purpose = init stream)
};

std::vector<RoundRecord> run_experiment(const FederatedProblem& problem,
                                        const ExperimentSpec& spec);

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

}  // namespace fedsim
