#include "fedsim/algorithms.hpp"

#include <chrono>
#include <future>
#include <numeric>
#include <thread>

#include "fedsim/diagnostics.hpp"

namespace fedsim {

namespace {

constexpr double kDivergenceNormSq = 1e16;  // ||w|| > 1e8

void check_trajectory_finite(const ParamVector& w, std::size_t client, std::size_t tau) {
    if (!all_finite(w))
        throw DivergenceError("client " + std::to_string(client) +
                              " diverged at local step tau = " + std::to_string(tau));
}

std::vector<std::uint32_t> full_index_set(std::size_t m) {
    std::vector<std::uint32_t> all(m);
    std::iota(all.begin(), all.end(), 0u);
    return all;
}

std::vector<std::uint32_t> draw_batch(std::size_t m, std::size_t batch_size, RngStream& rng) {
    if (batch_size == 0 || batch_size >= m) return full_index_set(m);
    return rng.sample_without_replacement(static_cast<std::uint32_t>(m),
                                          static_cast<std::uint32_t>(batch_size));
}

}  // namespace

std::vector<std::uint32_t> sample_clients(std::size_t n, std::size_t r, RngStream& rng) {
    if (r < 1 || r > n) throw std::invalid_argument("sample_clients: need 1 <= r <= n");
    return rng.sample_without_replacement(static_cast<std::uint32_t>(n),
                                          static_cast<std::uint32_t>(r));
}

GlomoClientResult glomo_client_update(const FederatedProblem& problem, std::size_t i,
                                      const ParamVector& w_k, const ParamVector& w_prev,
                                      double eta_k, const HyperParams& hp,
                                      const QuantizerSpec& quantizer,
                                      const ClientUpdateOptions& opt) {
    if (eta_k <= 0.0) throw std::invalid_argument("glomo_client_update: eta_k must be positive");
    if (hp.E < 1) throw std::invalid_argument("glomo_client_update: E must be >= 1");
    const std::size_t m = problem.samples_per_client();
    const std::uint32_t ci = static_cast<std::uint32_t>(i);
    RngStream batch_rng(StreamKey{opt.seed, static_cast<std::uint32_t>(opt.round), ci,
                                  StreamPurpose::batch});
    RngStream quant_rng(StreamKey{opt.seed, static_cast<std::uint32_t>(opt.round), ci,
                                  StreamPurpose::quantizer});

    GlomoClientResult res;
    ParamVector w = w_k, wh = w_prev;
    ParamVector w_last, wh_last;  // previous-tau points
    ParamVector v, vh;
    if (opt.record_trajectory) {
        res.trajectory.push_back(w);
        res.trajectory_hat.push_back(wh);
    }

    for (std::size_t tau = 0; tau < hp.E; ++tau) {
        if (tau == 0) {
            if (hp.anchor_batch > 0 && !opt.full_batch) {
                const auto anchor = draw_batch(m, hp.anchor_batch, batch_rng);
                if (opt.batch_hook) opt.batch_hook(i, tau, anchor);
                v = problem.grad_batch(i, w, anchor);
                vh = problem.grad_batch(i, wh, anchor);
            } else {
                v = problem.grad_full(i, w);
                vh = problem.grad_full(i, wh);
            }
        } else {
            const auto batch = opt.full_batch ? full_index_set(m)
                                              : draw_batch(m, hp.batch_size, batch_rng);
            if (opt.batch_hook) opt.batch_hook(i, tau, batch);
            const ParamVector g_cur = problem.grad_batch(i, w, batch);
            const ParamVector g_last = problem.grad_batch(i, w_last, batch);
            const ParamVector gh_cur = problem.grad_batch(i, wh, batch);
            const ParamVector gh_last = problem.grad_batch(i, wh_last, batch);
            // v = g_cur + damping * (v - g_last)
            ParamVector corr = sub(v, g_last);
            v = axpy(hp.damping, corr, g_cur);
            ParamVector corr_h = sub(vh, gh_last);
            vh = axpy(hp.damping, corr_h, gh_cur);
        }
        w_last = w;
        wh_last = wh;
        w = axpy(-eta_k, v, w);
        wh = axpy(-eta_k, vh, wh);
        check_trajectory_finite(w, i, tau);
        check_trajectory_finite(wh, i, tau);
        if (opt.record_trajectory) {
            res.trajectory.push_back(w);
            res.trajectory_hat.push_back(wh);
        }
    }

    res.message.drift_raw = sub(w_k, w);
    const ParamVector drift_hat = sub(w_prev, wh);
    res.message.delta_raw = sub(res.message.drift_raw, drift_hat);
    res.message.q_drift = quantize(res.message.drift_raw, quantizer, quant_rng);
    res.message.q_delta = quantize(res.message.delta_raw, quantizer, quant_rng);
    res.message.uplink_bits = res.message.q_drift.payload_bits + res.message.q_delta.payload_bits;
    return res;
}

SimpleClientResult lomo_client_update(const FederatedProblem& problem, std::size_t i,
                                      const ParamVector& w_k, double eta_k,
                                      const HyperParams& hp, const QuantizerSpec& quantizer,
                                      const ClientUpdateOptions& opt) {
    if (eta_k <= 0.0) throw std::invalid_argument("lomo_client_update: eta_k must be positive");
    const std::size_t m = problem.samples_per_client();
    const std::uint32_t ci = static_cast<std::uint32_t>(i);
    RngStream batch_rng(StreamKey{opt.seed, static_cast<std::uint32_t>(opt.round), ci,
                                  StreamPurpose::batch});
    RngStream quant_rng(StreamKey{opt.seed, static_cast<std::uint32_t>(opt.round), ci,
                                  StreamPurpose::quantizer});

    SimpleClientResult res;
    ParamVector w = w_k, w_last, v;
    if (opt.record_trajectory) res.trajectory.push_back(w);
    for (std::size_t tau = 0; tau < hp.E; ++tau) {
        if (tau == 0) {
            if (hp.anchor_batch > 0 && !opt.full_batch) {
                const auto anchor = draw_batch(m, hp.anchor_batch, batch_rng);
                if (opt.batch_hook) opt.batch_hook(i, tau, anchor);
                v = problem.grad_batch(i, w, anchor);
                // hat-trajectory evaluation slot, kept so the batch stream
                // stays aligned with the FedGLOMO client
            } else {
                v = problem.grad_full(i, w);
            }
        } else {
            const auto batch = opt.full_batch ? full_index_set(m)
                                              : draw_batch(m, hp.batch_size, batch_rng);
            if (opt.batch_hook) opt.batch_hook(i, tau, batch);
            const ParamVector g_cur = problem.grad_batch(i, w, batch);
            const ParamVector g_last = problem.grad_batch(i, w_last, batch);
            ParamVector corr = sub(v, g_last);
            v = axpy(hp.damping, corr, g_cur);
        }
        w_last = w;
        w = axpy(-eta_k, v, w);
        check_trajectory_finite(w, i, tau);
        if (opt.record_trajectory) res.trajectory.push_back(w);
    }
    res.message.drift_raw = sub(w, w_k);  // ascent direction (Alg. 4 sends w_E - w_k)
    res.message.q_drift = quantize(res.message.drift_raw, quantizer, quant_rng);
    res.message.uplink_bits = res.message.q_drift.payload_bits;
    return res;
}

SimpleClientResult fedavg_client_update(const FederatedProblem& problem, std::size_t i,
                                        const ParamVector& w_k, double eta_k,
                                        const HyperParams& hp, const QuantizerSpec& quantizer,
                                        const ClientUpdateOptions& opt) {
    if (eta_k <= 0.0) throw std::invalid_argument("fedavg_client_update: eta_k must be positive");
    const std::size_t m = problem.samples_per_client();
    const std::uint32_t ci = static_cast<std::uint32_t>(i);
    RngStream batch_rng(StreamKey{opt.seed, static_cast<std::uint32_t>(opt.round), ci,
                                  StreamPurpose::batch});
    RngStream quant_rng(StreamKey{opt.seed, static_cast<std::uint32_t>(opt.round), ci,
                                  StreamPurpose::quantizer});

    SimpleClientResult res;
    ParamVector w = w_k;
    ParamVector momentum = zeros(problem.dim());  // heavy-ball, reset every round
    if (opt.record_trajectory) res.trajectory.push_back(w);
    for (std::size_t tau = 0; tau < hp.E; ++tau) {
        ParamVector g;
        if (opt.full_batch) {
            g = problem.grad_full(i, w);
        } else {
            const auto batch = draw_batch(m, hp.batch_size, batch_rng);
            if (opt.batch_hook) opt.batch_hook(i, tau, batch);
            g = problem.grad_batch(i, w, batch);
        }
        if (hp.local_momentum_gamma > 0.0) {
            momentum = axpy(hp.local_momentum_gamma, momentum, g);
            w = axpy(-eta_k, momentum, w);
        } else {
            w = axpy(-eta_k, g, w);
        }
        check_trajectory_finite(w, i, tau);
        if (opt.record_trajectory) res.trajectory.push_back(w);
    }
    res.message.drift_raw = sub(w_k, w);  // descent direction (Alg. 3 sends w_k - w_E)
    res.message.q_drift = quantize(res.message.drift_raw, quantizer, quant_rng);
    res.message.uplink_bits = res.message.q_drift.payload_bits;
    return res;
}

void glomo_server_round(ServerState& state, const std::vector<ClientMessageGlomo>& messages,
                        double beta_k) {
    if (beta_k < 0.0 || beta_k > 1.0)
        throw std::invalid_argument("glomo_server_round: beta must be in [0, 1]");
    if (messages.empty()) throw std::invalid_argument("glomo_server_round: no messages");
    const double inv_r = 1.0 / static_cast<double>(messages.size());
    ParamVector u = zeros(state.w_curr.size());
    if (state.k == 0) {
        for (const auto& msg : messages) axpy_inplace(inv_r, decode(msg.q_drift), u);
    } else {
        if (!state.u_prev) throw std::logic_error("glomo_server_round: missing u_prev at k > 0");
        for (const auto& msg : messages) axpy_inplace(beta_k * inv_r, decode(msg.q_drift), u);
        axpy_inplace(1.0 - beta_k, *state.u_prev, u);
        for (const auto& msg : messages)
            axpy_inplace((1.0 - beta_k) * inv_r, decode(msg.q_delta), u);
    }
    ParamVector w_next = sub(state.w_curr, u);
    state.w_prev = std::move(state.w_curr);
    state.w_curr = std::move(w_next);
    state.u_prev = std::move(u);
    ++state.k;
}

void averaging_server_round(ServerState& state, const std::vector<ClientMessageSimple>& messages,
                            bool message_is_descent) {
    if (messages.empty()) throw std::invalid_argument("averaging_server_round: no messages");
    const double inv_r = 1.0 / static_cast<double>(messages.size());
    ParamVector u = zeros(state.w_curr.size());
    for (const auto& msg : messages) axpy_inplace(inv_r, decode(msg.q_drift), u);
    ParamVector w_next = message_is_descent ? sub(state.w_curr, u) : add(state.w_curr, u);
    state.w_prev = std::move(state.w_curr);
    state.w_curr = std::move(w_next);
    state.u_prev.reset();
    ++state.k;
}

namespace {

// Runs fn(i) for every index in `ids`, keeping results in `ids` order.
// Randomness is keyed per (round, client), so the thread count never
// changes the outcome.
template <typename Fn>
auto map_clients(const std::vector<std::uint32_t>& ids, bool parallel, Fn&& fn)
    -> std::vector<decltype(fn(std::uint32_t{}))> {
    using R = decltype(fn(std::uint32_t{}));
    std::vector<R> out(ids.size());
    if (!parallel || ids.size() < 2) {
        for (std::size_t j = 0; j < ids.size(); ++j) out[j] = fn(ids[j]);
        return out;
    }
    std::vector<std::future<R>> futures;
    futures.reserve(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j)
        futures.push_back(std::async(std::launch::async, fn, ids[j]));
    for (std::size_t j = 0; j < ids.size(); ++j) out[j] = futures[j].get();
    return out;
}

}  // namespace

std::vector<RoundRecord> run_experiment(const FederatedProblem& problem,
                                        const ExperimentSpec& spec) {
    const std::size_t n = problem.n_clients();
    const std::size_t d = problem.dim();
    const HyperParams& hp = spec.hp;
    if (hp.r < 1 || hp.r > n) throw std::invalid_argument("run_experiment: need 1 <= r <= n");

    // deterministic init draw
    RngStream init_rng(StreamKey{spec.seed, 0, 0, StreamPurpose::init});
    ParamVector w0(d);
    for (std::size_t j = 0; j < d; ++j) w0[j] = spec.w0_scale * init_rng.normal();
    ServerState state = ServerState::initial(std::move(w0));

    std::vector<RoundRecord> records;
    records.reserve(hp.K);
    std::int64_t cumulative_bits = 0;
    const double L = problem.smoothness_bound();

    for (std::size_t k = 0; k < hp.K; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        RoundRecord rec;
        rec.k = k;
        rec.eta_k = hp.eta_at(k);
        rec.loss = problem.loss_global(state.w_curr);
        rec.grad_sq_norm = sq_norm(problem.grad_global(state.w_curr));

        if (spec.probes.bcd_every > 0 && k % spec.probes.bcd_every == 0)
            rec.bcd = diagnostics::bcd_estimate(problem, state.w_curr);

        const bool glomo_full_round0 =
            spec.algo == Algorithm::fedglomo && k == 0 && hp.full_participation_round0;
        const std::size_t r_k = glomo_full_round0 ? n : hp.r;
        RngStream sampling_rng(StreamKey{spec.seed, static_cast<std::uint32_t>(k), 0xFFFFFFFFu,
                                         StreamPurpose::sampling});
        const auto sampled = sample_clients(n, r_k, sampling_rng);

        ClientUpdateOptions opt;
        opt.seed = spec.seed;
        opt.round = k;
        opt.full_batch = (k == 0 && hp.full_batch_round0 && spec.algo == Algorithm::fedglomo) ||
                         hp.batch_size >= problem.samples_per_client() || hp.batch_size == 0;

        try {
            if (spec.algo == Algorithm::fedglomo) {
                auto results = map_clients(sampled, spec.parallel_clients, [&](std::uint32_t i) {
                    return glomo_client_update(problem, i, state.w_curr, state.w_prev, rec.eta_k,
                                               hp, spec.quantizer, opt);
                });
                for (const auto& res : results) {
                    rec.bits_up += (hp.combined_uncompressed &&
                                    spec.quantizer.mode == QuantizerMode::identity)
                                       ? 32 * static_cast<std::int64_t>(d)
                                       : res.message.uplink_bits;
                }
                if (spec.probes.lemma_every > 0 && k >= 1 && k % spec.probes.lemma_every == 0) {
                    std::vector<ParamVector> deltas;
                    deltas.reserve(results.size());
                    for (const auto& res : results) deltas.push_back(res.message.delta_raw);
                    auto lm = diagnostics::drift_lemma_monitor(deltas, state.w_curr, state.w_prev,
                                                               rec.eta_k, L, hp.E);
                    rec.lemma = RoundRecord::Lemma{lm.max_ratio, lm.bound, lm.holds,
                                                   lm.precondition_met};
                }
                if (spec.probes.variance_every > 0 && k >= 1 &&
                    k % spec.probes.variance_every == 0) {
                    RngStream probe_rng(StreamKey{spec.seed, static_cast<std::uint32_t>(k),
                                                  0xFFFFFFFEu, StreamPurpose::sampling});
                    rec.var_probe = diagnostics::aggregation_variance_probe(
                        state, problem, hp, spec.quantizer, spec.probes.variance_resamples,
                        probe_rng);
                }
                if (spec.probes.alpha_every > 0 && k % spec.probes.alpha_every == 0) {
                    // shadow full-participation pass with this round's seeds
                    std::vector<std::vector<ParamVector>> trajectories(n);
                    ClientUpdateOptions shadow = opt;
                    shadow.record_trajectory = true;
                    auto all = full_index_set(n);
                    auto shadow_res =
                        map_clients(all, spec.parallel_clients, [&](std::uint32_t i) {
                            return glomo_client_update(problem, i, state.w_curr, state.w_prev,
                                                       rec.eta_k, hp, spec.quantizer, shadow);
                        });
                    for (std::size_t i = 0; i < n; ++i)
                        trajectories[i] = std::move(shadow_res[i].trajectory);
                    rec.alpha_hat = diagnostics::alpha_estimate(problem, trajectories, k).alpha_hat;
                }
                std::vector<ClientMessageGlomo> messages;
                messages.reserve(results.size());
                for (auto& res : results) messages.push_back(std::move(res.message));
                const double beta_k = k == 0 ? 1.0 : hp.beta;
                glomo_server_round(state, messages, beta_k);
                rec.bits_down = 2 * 32 * static_cast<std::int64_t>(d) *
                                static_cast<std::int64_t>(r_k);
            } else {
                const bool is_lomo = spec.algo == Algorithm::fedlomo;
                auto results = map_clients(sampled, spec.parallel_clients, [&](std::uint32_t i) {
                    return is_lomo ? lomo_client_update(problem, i, state.w_curr, rec.eta_k, hp,
                                                        spec.quantizer, opt)
                                   : fedavg_client_update(problem, i, state.w_curr, rec.eta_k, hp,
                                                          spec.quantizer, opt);
                });
                for (const auto& res : results) rec.bits_up += res.message.uplink_bits;
                if (spec.probes.alpha_every > 0 && k % spec.probes.alpha_every == 0) {
                    std::vector<std::vector<ParamVector>> trajectories(n);
                    ClientUpdateOptions shadow = opt;
                    shadow.record_trajectory = true;
                    auto all = full_index_set(n);
                    auto shadow_res =
                        map_clients(all, spec.parallel_clients, [&](std::uint32_t i) {
                            return is_lomo
                                       ? lomo_client_update(problem, i, state.w_curr, rec.eta_k,
                                                            hp, spec.quantizer, shadow)
                                       : fedavg_client_update(problem, i, state.w_curr, rec.eta_k,
                                                              hp, spec.quantizer, shadow);
                        });
                    for (std::size_t i = 0; i < n; ++i)
                        trajectories[i] = std::move(shadow_res[i].trajectory);
                    rec.alpha_hat = diagnostics::alpha_estimate(problem, trajectories, k).alpha_hat;
                }
                std::vector<ClientMessageSimple> messages;
                messages.reserve(results.size());
                for (auto& res : results) messages.push_back(std::move(res.message));
                averaging_server_round(state, messages, /*message_is_descent=*/!is_lomo);
                rec.bits_down = 32 * static_cast<std::int64_t>(d) * static_cast<std::int64_t>(r_k);
            }
        } catch (const DivergenceError&) {
            rec.status = RoundStatus::diverged;
        }

        cumulative_bits += rec.bits_up + rec.bits_down;
        rec.cumulative_bits = cumulative_bits;

        if (rec.status == RoundStatus::ok &&
            (!all_finite(state.w_curr) || sq_norm(state.w_curr) > kDivergenceNormSq))
            rec.status = RoundStatus::diverged;

        rec.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        records.push_back(std::move(rec));
        if (records.back().status == RoundStatus::diverged) break;
    }
    return records;
}

const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::fedglomo: return "fedglomo";
        case Algorithm::fedlomo: return "fedlomo";
        case Algorithm::fedavg: return "fedavg";
        case Algorithm::fedpaq: return "fedpaq";
    }
    return "unknown";
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "fedglomo") return Algorithm::fedglomo;
    if (name == "fedlomo") return Algorithm::fedlomo;
    if (name == "fedavg") return Algorithm::fedavg;
    if (name == "fedpaq") return Algorithm::fedpaq;
    throw std::invalid_argument("unknown algorithm: " + name);
}

}  // namespace fedsim
