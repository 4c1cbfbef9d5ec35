// Acceptance gate: one pass/fail line per criterion, exit 1 on any failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/diagnostics.hpp"
#include "fedsim/harness.hpp"
#include "fedsim/theory.hpp"

using namespace fedsim;
namespace fs = std::filesystem;

namespace {

const QuantizerSpec kIdentity{1, QuantizerMode::identity};

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("CRITERION %2d: %s  (%s)\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

ParamVector random_vec(std::size_t n, RngStream& rng) {
    ParamVector v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- 1: quantizer unbiasedness, d=16, s=4, 1e6 samples, 4 SE ----
void criterion_1() {
    const std::size_t d = 16, N = 1000000;
    QuantizerSpec spec{4, QuantizerMode::stochastic};
    auto vrng = stream({401, 0, 0, StreamPurpose::init});
    const auto v = random_vec(d, vrng);

    auto rng = stream({402, 0, 0, StreamPurpose::quantizer});
    ParamVector sum(d, 0.0), sumsq(d, 0.0);
    for (std::size_t t = 0; t < N; ++t) {
        const auto out = decode(quantize(v, spec, rng));
        for (std::size_t i = 0; i < d; ++i) {
            sum[i] += out[i];
            sumsq[i] += out[i] * out[i];
        }
    }
    bool pass = true;
    double worst = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double mean = sum[i] / static_cast<double>(N);
        const double var = sumsq[i] / static_cast<double>(N) - mean * mean;
        const double se = std::sqrt(var / static_cast<double>(N));
        const double z = se == 0.0 ? (mean == v[i] ? 0.0 : 1e9) : std::abs(mean - v[i]) / se;
        worst = std::max(worst, z);
        if (z > 4.0) pass = false;
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "d=16 s=4 N=1e6, worst per-coordinate |z| = %.2f <= 4", worst);
    report(1, pass, buf);
}

// ---- 2: quantizer variance bound over the (d, s) grid ----
void criterion_2() {
    auto rng = stream({403, 0, 0, StreamPurpose::quantizer});
    bool pass = true;
    double worst = 0.0;
    for (std::size_t d : {std::size_t{4}, std::size_t{64}, std::size_t{512}}) {
        const std::uint32_t sqrt_d = static_cast<std::uint32_t>(std::floor(std::sqrt(d)));
        for (std::uint32_t s : {1u, 4u, sqrt_d}) {
            QuantizerSpec spec{s, QuantizerMode::stochastic};
            const double q = variance_factor(d, spec);
            for (int trial = 0; trial < 100; ++trial) {
                const auto v = random_vec(d, rng);
                const std::size_t N = 300;
                double err = 0.0;
                for (std::size_t t = 0; t < N; ++t) {
                    const auto out = decode(quantize(v, spec, rng));
                    for (std::size_t i = 0; i < d; ++i) {
                        const double e = out[i] - v[i];
                        err += e * e;
                    }
                }
                const double ratio = err / static_cast<double>(N) / (q * sq_norm(v));
                worst = std::max(worst, ratio);
                if (ratio > 1.05) pass = false;
            }
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "100 vectors per (d, s) cell, worst E||err||^2 / bound = %.3f <= 1.05", worst);
    report(2, pass, buf);
}

harness::RunConfig reduction_config(const char* algo) {
    auto cfg = harness::parse_config(std::string(R"({
        "algorithm": ")") + algo + R"(",
        "seed": 404,
        "problem": {"kind": "quadratic", "n": 10, "d": 6, "heterogeneity": 1.0,
                    "samples_per_client": 8},
        "hyper": {"K": 20, "E": 4, "r": 5, "eta0": 0.03, "beta": 1.0, "lr_decay": 1.0,
                  "batch_size": 2, "damping": 1.0,
                  "full_participation_round0": false, "full_batch_round0": false},
        "quantizer": {"mode": "identity"}})");
    return cfg;
}

// ---- 3: reduction equivalences ----
void criterion_3() {
    // (a) FedGLOMO(beta = 1, identity) == FedLOMO, bit-identical iterates
    auto glomo_cfg = reduction_config("fedglomo");
    auto lomo_cfg = reduction_config("fedlomo");
    const auto problem = harness::build_problem(glomo_cfg);

    auto to_spec = [](const harness::RunConfig& cfg) {
        ExperimentSpec spec;
        spec.algo = cfg.algorithm;
        spec.hp = cfg.hyper;
        spec.quantizer = cfg.quantizer;
        spec.seed = cfg.seed;
        return spec;
    };
    const auto glomo = run_experiment(problem, to_spec(glomo_cfg));
    const auto lomo = run_experiment(problem, to_spec(lomo_cfg));
    bool pass_a = glomo.size() == 20 && lomo.size() == 20;
    for (std::size_t k = 0; pass_a && k < 20; ++k)
        pass_a = glomo[k].loss == lomo[k].loss && glomo[k].grad_sq_norm == lomo[k].grad_sq_norm;

    // (b) FedAvg(E=1, r=n, full batch, identity) == gradient descent
    auto rng = stream({405, 0, 0, StreamPurpose::init});
    auto quad = gen_synthetic(ProblemKind::quadratic, 4, 6, 1.0, rng);
    HyperParams hp;
    hp.E = 1;
    hp.r = 4;
    hp.eta0 = 0.05;
    hp.lr_decay = 1.0;
    hp.batch_size = 0;
    ParamVector w_gd = random_vec(quad.dim(), rng);
    auto state = ServerState::initial(w_gd);
    bool pass_b = true;
    double worst_b = 0.0;
    for (int step = 0; step < 50; ++step) {
        std::vector<ClientMessageSimple> msgs;
        for (std::size_t i = 0; i < 4; ++i) {
            ClientUpdateOptions opt;
            opt.full_batch = true;
            opt.round = static_cast<std::size_t>(step);
            msgs.push_back(
                fedavg_client_update(quad, i, state.w_curr, hp.eta0, hp, kIdentity, opt).message);
        }
        averaging_server_round(state, msgs, true);
        w_gd = axpy(-hp.eta0, quad.grad_global(w_gd), w_gd);
        const double err = norm(sub(state.w_curr, w_gd));
        worst_b = std::max(worst_b, err);
        if (err > 1e-10) pass_b = false;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "(a) beta=1 equivalence over K=20: %s; (b) GD match, worst |w-w_gd| = %.2e",
                  pass_a ? "exact" : "BROKEN", worst_b);
    report(3, pass_a && pass_b, buf);
}

// ---- 4: drift lemma over 10^3 random quadratic instances ----
void criterion_4() {
    const std::size_t Es[] = {2, 5, 10};
    std::size_t held = 0, total = 0;
    for (std::uint64_t t = 0; t < 1000; ++t) {
        auto rng = stream({500 + t, 0, 0, StreamPurpose::init});
        SyntheticOptions opt;
        opt.samples_per_client = 4;
        auto pr = gen_synthetic(ProblemKind::quadratic, 3, 5, 1.0, rng, opt);
        const double L = pr.smoothness_bound();
        const std::size_t E = Es[t % 3];
        const double eta =
            (0.2 + 0.79 * rng.uniform()) / (2.0 * L * static_cast<double>(E * E));

        const auto w_k = random_vec(pr.dim(), rng);
        const auto w_prev = add(w_k, random_vec(pr.dim(), rng));
        HyperParams hp;
        hp.E = E;
        hp.damping = 1.0;
        std::vector<ParamVector> deltas;
        for (std::size_t i = 0; i < pr.n_clients(); ++i) {
            ClientUpdateOptions copt;
            copt.full_batch = true;
            deltas.push_back(glomo_client_update(pr, i, w_k, w_prev, eta, hp, kIdentity, copt)
                                 .message.delta_raw);
        }
        const auto res = diagnostics::drift_lemma_monitor(deltas, w_k, w_prev, eta, L, E);
        ++total;
        if (res.precondition_met && res.holds) ++held;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "E in {2,5,10}, held in %zu / %zu instances", held, total);
    report(4, held == total, buf);
}

// ---- 5: alpha <= n always; heterogeneous median dominates homogeneous ----
void criterion_5() {
    bool bound_ok = true;
    std::vector<double> het_alphas, hom_alphas;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (double het : {0.0, 1.0}) {
            std::ostringstream cfg_text;
            cfg_text << R"({"algorithm": "fedglomo", "seed": )" << 600 + seed
                     << R"(, "problem": {"kind": "logistic_l2", "n": 50, "d": 10,
                          "heterogeneity": )"
                     << het << R"(, "samples_per_client": 20},
                         "hyper": {"K": 8, "E": 5, "r": 25, "eta0": 0.1, "batch_size": 10},
                         "quantizer": {"s": 4},
                         "probes": {"alpha_every": 1}})";
            auto cfg = harness::parse_config(cfg_text.str());
            const auto problem = harness::build_problem(cfg);
            ExperimentSpec spec;
            spec.algo = cfg.algorithm;
            spec.hp = cfg.hyper;
            spec.quantizer = cfg.quantizer;
            spec.seed = cfg.seed;
            spec.probes = cfg.probes;
            const auto records = run_experiment(problem, spec);
            for (const auto& rec : records) {
                if (!rec.alpha_hat) continue;
                if (*rec.alpha_hat > 50.0 + 1e-9) bound_ok = false;
                (het > 0.0 ? het_alphas : hom_alphas).push_back(*rec.alpha_hat);
            }
        }
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v.empty() ? 0.0 : v[v.size() / 2];
    };
    const double med_het = median(het_alphas), med_hom = median(hom_alphas);
    const bool pass = bound_ok && med_het > med_hom;
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "alpha <= n everywhere: %s; median alpha het=1: %.4f > het=0: %.4f",
                  bound_ok ? "yes" : "NO", med_het, med_hom);
    report(5, pass, buf);
}

// ---- 6: Theorem-driven rate bound on a quadratic ensemble ----
void criterion_6() {
    std::size_t pass_count = 0, total = 0;
    std::ostringstream detail;
    for (int preset = 0; preset < 2; ++preset) {
        const QuantizerSpec qspec =
            preset == 0 ? kIdentity : QuantizerSpec{3, QuantizerMode::stochastic};
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            auto rng = stream({700 + seed, 0, 0, StreamPurpose::init});
            SyntheticOptions opt;
            opt.samples_per_client = 6;
            auto pr = gen_synthetic(ProblemKind::quadratic, 20, 10, 1.0, rng, opt);

            theory::TheoryInputs in;
            in.L = pr.smoothness_bound();
            in.n = 20;
            in.r = 10;
            in.E = 5;
            in.K = 64;
            in.q = variance_factor(pr.dim(), qspec);
            in.alpha = 20.0;

            ExperimentSpec spec;
            spec.algo = Algorithm::fedglomo;
            spec.hp.E = 5;
            spec.hp.K = 64;
            spec.hp.r = 10;
            spec.hp.eta0 = theory::glomo_eta(in);
            spec.hp.beta = theory::glomo_beta(in, spec.hp.eta0);
            spec.hp.lr_decay = 1.0;
            spec.hp.damping = 1.0;
            spec.hp.batch_size = 0;  // full local batches
            spec.quantizer = qspec;
            spec.seed = 700 + seed;
            const auto records = run_experiment(pr, spec);

            in.f0 = records.front().loss;
            const double bound = theory::glomo_rate_bound(in);
            double avg = 0.0;
            for (const auto& rec : records) avg += rec.grad_sq_norm / 64.0;
            ++total;
            if (records.size() == 64 && avg <= bound) ++pass_count;
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "avg grad^2 <= theorem bound in %zu / %zu instances (need 19)",
                  pass_count, total);
    report(6, pass_count >= 19, buf);
}

// ---- 7: momentum aggregation variance vs plain averaging ----
void criterion_7() {
    auto cfg = harness::parse_config(R"({
        "algorithm": "fedglomo", "seed": 801,
        "problem": {"kind": "quadratic", "n": 50, "d": 10, "heterogeneity": 1.0,
                    "samples_per_client": 4},
        "hyper": {"K": 51, "E": 10, "r": 25, "beta": 0.2, "eta0": 0.02, "batch_size": 0,
                  "damping": 1.0},
        "quantizer": {"s": 4},
        "probes": {"variance_every": 1, "variance_resamples": 500}})");
    const auto problem = harness::build_problem(cfg);
    ExperimentSpec spec;
    spec.algo = cfg.algorithm;
    spec.hp = cfg.hyper;
    spec.quantizer = cfg.quantizer;
    spec.seed = cfg.seed;
    spec.probes = cfg.probes;
    const auto records = run_experiment(problem, spec);

    std::size_t wins = 0, probed = 0;
    for (const auto& rec : records) {
        if (rec.k < 5 || rec.k > 50 || !rec.var_probe) continue;
        ++probed;
        if (rec.var_probe->first < rec.var_probe->second) ++wins;
    }
    const bool pass = probed == 46 && wins * 5 >= probed * 4;  // >= 80%
    char buf[96];
    std::snprintf(buf, sizeof buf, "var_glomo < var_plain in %zu / %zu probed rounds (need 80%%)",
                  wins, probed);
    report(7, pass, buf);
}

harness::RunConfig budget_config(const char* algo, int bits, std::uint64_t seed) {
    std::ostringstream text;
    text << R"({"algorithm": ")" << algo << R"(", "seed": )" << seed << R"(,
        "problem": {"kind": "logistic_l2", "n": 50, "d": 200, "heterogeneity": 1.0,
                    "samples_per_client": 40},
        "hyper": {"K": 200, "E": 10, "r": 25, "eta0": 0.5, "batch_size": 8,
                  "lr_decay": 0.98, "beta": 0.5, "damping": 0.8},
        "quantizer": {"bits": )" << bits << R"(}})";
    return harness::parse_config(text.str());
}

// ---- 8: communication-budget comparison, FedGLOMO(b) vs FedPAQ-m(2b) ----
void criterion_8() {
    std::size_t wins = 0;
    std::ostringstream detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto paq_cfg = budget_config("fedpaq", 4, 900 + seed);
        auto glomo_cfg = budget_config("fedglomo", 2, 900 + seed);

        const auto problem = harness::build_problem(paq_cfg);
        auto to_spec = [](const harness::RunConfig& cfg) {
            ExperimentSpec spec;
            spec.algo = cfg.algorithm;
            spec.hp = cfg.hyper;
            spec.quantizer = cfg.quantizer;
            spec.seed = cfg.seed;
            return spec;
        };
        const auto paq = run_experiment(problem, to_spec(paq_cfg));
        const auto glomo = run_experiment(problem, to_spec(glomo_cfg));
        if (paq.size() != 200 || glomo.size() != 200) continue;

        const double target = paq.back().grad_sq_norm;
        const std::int64_t paq_bits = paq.back().cumulative_bits;
        std::int64_t glomo_bits_at_target = -1;
        for (const auto& rec : glomo)
            if (rec.grad_sq_norm <= target) {
                glomo_bits_at_target = rec.cumulative_bits;
                break;
            }
        const bool win = glomo_bits_at_target >= 0 &&
                         static_cast<double>(glomo_bits_at_target) <=
                             0.8 * static_cast<double>(paq_bits);
        if (win) ++wins;
        detail << (win ? "W" : "L");
    }
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "FedGLOMO(2-bit) hit FedPAQ-m(4-bit) final grad^2 within 0.8x bits: %zu / 5 [%s]",
                  wins, detail.str().c_str());
    report(8, wins >= 4, buf);
}

// ---- 9: Appendix-A style cost ratio ----
void criterion_9() {
    const double ratio = comm_cost_ratio(10000000, 1.0, 2.0);
    char buf[64];
    std::snprintf(buf, sizeof buf, "comm_cost_ratio = %.4f (target 5.7 +- 0.1)", ratio);
    report(9, std::abs(ratio - 5.7) <= 0.1, buf);
}

// ---- 10: byte-identical rounds.jsonl on rerun, parallel clients on ----
void criterion_10() {
    const fs::path base = fs::temp_directory_path() / "fedsim_acceptance_det";
    fs::remove_all(base);
    bool pass = true;
    std::string detail;

    auto rerun_identical = [&](harness::RunConfig cfg, const std::string& tag) {
        cfg.parallel_clients = true;
        harness::run(cfg, base / (tag + "_a"));
        harness::run(cfg, base / (tag + "_b"));
        const bool same = slurp(base / (tag + "_a") / "rounds.jsonl") ==
                          slurp(base / (tag + "_b") / "rounds.jsonl");
        if (!same) pass = false;
        detail += tag + (same ? ": identical " : ": DIFFERS ");
    };
    rerun_identical(reduction_config("fedglomo"), "reduction");
    auto budget = budget_config("fedglomo", 2, 901);
    budget.hyper.K = 40;  // truncated replay of the criterion-8 setting
    rerun_identical(budget, "budget");
    fs::remove_all(base);
    report(10, pass, detail);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    if (g_failures > 0) {
        std::printf("ACCEPTANCE: %d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("ACCEPTANCE: all criteria passed\n");
    return 0;
}
