// Command-line front end: run / sweep / verify / export.
//
// Exit codes: 0 success, 1 configuration (or verification) failure,
// 2 divergence, 3 I/O failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsim/diagnostics.hpp"
#include "fedsim/harness.hpp"
#include "fedsim/quantizer.hpp"
#include "fedsim/rng.hpp"

namespace {

using fedsim::harness::ConfigError;
using fedsim::harness::RunConfig;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;
constexpr int kExitIo = 3;

json parse_value_token(const std::string& token) {
    try {
        return json::parse(token);
    } catch (const json::exception&) {
        return json(token);  // bare word, e.g. an algorithm name
    }
}

int do_run(const std::string& config_path, const std::string& out_dir) {
    RunConfig cfg = fedsim::harness::parse_config_file(config_path);
    auto result = fedsim::harness::run(cfg, out_dir);
    std::cout << result.summary.dump(2) << "\n";
    std::cout << "wrote " << result.dir.string() << "\n";
    return result.diverged ? kExitDiverged : kExitOk;
}

int do_sweep(const std::string& config_path, const std::string& axis,
             const std::vector<std::string>& value_tokens, const std::string& out_dir,
             bool parallel) {
    RunConfig base = fedsim::harness::parse_config_file(config_path);
    std::vector<json> values;
    for (const auto& token : value_tokens) values.push_back(parse_value_token(token));
    auto result = fedsim::harness::sweep(base, axis, values, out_dir, parallel);
    for (const auto& dir : result.run_dirs) std::cout << dir.string() << "\n";
    std::cout << "merged table: " << result.merged_csv.string() << "\n";
    return kExitOk;
}

int do_export(const std::vector<std::string>& dirs, const std::string& out_csv) {
    std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
    auto out = fedsim::harness::export_plotdata(paths, out_csv);
    std::cout << "wrote " << out.string() << "\n";
    return kExitOk;
}

// Monte-Carlo check of the quantizer contract on the configured dimension:
// unbiasedness of the decoded mean and the variance bound q * ||v||^2.
int verify_quantizer(const RunConfig& cfg) {
    const auto problem = fedsim::harness::build_problem(cfg);
    const std::size_t d = problem.dim();
    const double q = fedsim::variance_factor(d, cfg.quantizer);
    fedsim::RngStream rng({cfg.seed, 0, 0, fedsim::StreamPurpose::quantizer});

    fedsim::ParamVector v(d);
    for (auto& x : v) x = rng.normal();
    const double vnorm_sq = fedsim::sq_norm(v);

    const std::size_t trials = 200000;
    fedsim::ParamVector mean(d, 0.0);
    double err_sq_sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        auto decoded = fedsim::decode(fedsim::quantize(v, cfg.quantizer, rng));
        for (std::size_t i = 0; i < d; ++i) {
            mean[i] += decoded[i];
            const double e = decoded[i] - v[i];
            err_sq_sum += e * e;
        }
    }
    double bias_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double b = mean[i] / static_cast<double>(trials) - v[i];
        bias_sq += b * b;
    }
    const double mean_err_sq = err_sq_sum / static_cast<double>(trials);
    const double var_bound = q * vnorm_sq;
    // bias tolerance: a few MC standard errors of the coordinate means
    const double bias_tol = 16.0 * var_bound / static_cast<double>(trials) + 1e-18;
    const bool unbiased = bias_sq <= bias_tol;
    const bool bounded = mean_err_sq <= 1.02 * var_bound + 1e-12;
    std::printf("quantizer: d=%zu s=%u q=%.6g ||bias||^2=%.3e (tol %.3e) E||err||^2=%.6g "
                "bound=%.6g\n",
                d, cfg.quantizer.s, q, bias_sq, bias_tol, mean_err_sq, var_bound);
    std::printf("verify quantizer: %s\n", unbiased && bounded ? "PASS" : "FAIL");
    return unbiased && bounded ? kExitOk : kExitConfig;
}

// Run the configured experiment with the drift-bound monitor on every round
// and report whether the bound held whenever its precondition was met.
int verify_lemma(const RunConfig& cfg_in) {
    RunConfig cfg = cfg_in;
    cfg.probes.lemma_every = 1;
    if (cfg.algorithm != fedsim::Algorithm::fedglomo) {
        std::fprintf(stderr, "verify lemma: requires algorithm=fedglomo\n");
        return kExitConfig;
    }
    auto problem = fedsim::harness::build_problem(cfg);
    if (cfg.hyperparam_source == fedsim::harness::HyperparamSource::theorem)
        fedsim::harness::apply_theorem_hyperparams(cfg, problem);
    fedsim::ExperimentSpec spec;
    spec.algo = cfg.algorithm;
    spec.hp = cfg.hyper;
    spec.quantizer = cfg.quantizer;
    spec.seed = cfg.seed;
    spec.probes = cfg.probes;
    spec.parallel_clients = cfg.parallel_clients;
    spec.w0_scale = cfg.w0_scale;
    const auto records = fedsim::run_experiment(problem, spec);

    std::size_t checked = 0, held = 0, skipped = 0;
    double worst = 0.0;
    for (const auto& rec : records) {
        if (!rec.lemma) continue;
        if (!rec.lemma->precondition_met) {
            ++skipped;
            continue;
        }
        ++checked;
        if (rec.lemma->holds) ++held;
        if (rec.lemma->bound > 0.0)
            worst = std::max(worst, rec.lemma->max_ratio / rec.lemma->bound);
    }
    std::printf("lemma: rounds checked=%zu held=%zu precondition-skipped=%zu "
                "worst lhs/bound=%.4f\n",
                checked, held, skipped, worst);
    const bool ok = checked > 0 && held == checked;
    std::printf("verify lemma: %s\n", ok ? "PASS" : "FAIL");
    return ok ? kExitOk : kExitConfig;
}

// Run with the alpha probe on and report the observed statistic against its
// Cauchy-Schwarz ceiling n.
int verify_alpha(const RunConfig& cfg_in) {
    RunConfig cfg = cfg_in;
    if (cfg.probes.alpha_every == 0) cfg.probes.alpha_every = 1;
    auto problem = fedsim::harness::build_problem(cfg);
    if (cfg.hyperparam_source == fedsim::harness::HyperparamSource::theorem)
        fedsim::harness::apply_theorem_hyperparams(cfg, problem);
    fedsim::ExperimentSpec spec;
    spec.algo = cfg.algorithm;
    spec.hp = cfg.hyper;
    spec.quantizer = cfg.quantizer;
    spec.seed = cfg.seed;
    spec.probes = cfg.probes;
    spec.parallel_clients = cfg.parallel_clients;
    spec.w0_scale = cfg.w0_scale;
    const auto records = fedsim::run_experiment(problem, spec);

    const double n = static_cast<double>(problem.n_clients());
    std::size_t probes = 0;
    double max_alpha = 0.0;
    bool within = true;
    for (const auto& rec : records) {
        if (!rec.alpha_hat) continue;
        ++probes;
        max_alpha = std::max(max_alpha, *rec.alpha_hat);
        if (*rec.alpha_hat > n * (1.0 + 1e-9)) within = false;
    }
    std::printf("alpha: probes=%zu max alpha_hat=%.4f n=%g\n", probes, max_alpha, n);
    const bool ok = probes > 0 && within;
    std::printf("verify alpha: %s\n", ok ? "PASS" : "FAIL");
    return ok ? kExitOk : kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated optimization simulator (FedGLOMO, FedLOMO, FedAvg/FedPAQ)"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", axis, out_csv = "plot.csv", what;
    std::vector<std::string> values, dirs;
    bool parallel = false;

    auto* run_cmd = app.add_subcommand("run", "execute one experiment from a config file");
    run_cmd->add_option("config", config_path, "JSON config file")->required();
    run_cmd->add_option("--out", out_dir, "output directory (default: out)");

    auto* sweep_cmd = app.add_subcommand("sweep", "run the config once per axis value");
    sweep_cmd->add_option("config", config_path, "JSON config file")->required();
    sweep_cmd->add_option("--axis", axis, "dotted config path, e.g. hyper.eta0")->required();
    sweep_cmd->add_option("--values", values, "comma-separated axis values")
        ->required()
        ->delimiter(',');
    sweep_cmd->add_option("--out", out_dir, "output directory (default: out)");
    sweep_cmd->add_flag("--parallel", parallel, "run sweep points concurrently");

    auto* verify_cmd = app.add_subcommand("verify", "check quantizer | lemma | alpha");
    verify_cmd->add_option("what", what, "one of: quantizer, lemma, alpha")->required();
    verify_cmd->add_option("config", config_path, "JSON config file")->required();

    auto* export_cmd = app.add_subcommand("export", "merge run directories into plot.csv");
    export_cmd->add_option("dirs", dirs, "run directories")->required();
    export_cmd->add_option("--out", out_csv, "output CSV path (default: plot.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (run_cmd->parsed()) return do_run(config_path, out_dir);
        if (sweep_cmd->parsed()) return do_sweep(config_path, axis, values, out_dir, parallel);
        if (export_cmd->parsed()) return do_export(dirs, out_csv);
        if (verify_cmd->parsed()) {
            RunConfig cfg = fedsim::harness::parse_config_file(config_path);
            if (what == "quantizer") return verify_quantizer(cfg);
            if (what == "lemma") return verify_lemma(cfg);
            if (what == "alpha") return verify_alpha(cfg);
            std::fprintf(stderr, "verify: unknown target '%s'\n", what.c_str());
            return kExitConfig;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const fedsim::DivergenceError& e) {
        std::fprintf(stderr, "diverged: %s\n", e.what());
        return kExitDiverged;
    } catch (const std::ios_base::failure& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitConfig;
}
