#include "fedsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include "fedsim/theory.hpp"

namespace fedsim::harness {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& path,
                  std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown key: " + path + "." + it.key());
    }
}

template <typename T>
T get_or(const json& obj, const std::string& path, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("type mismatch at " + path + "." + key);
    }
}

ProblemKind kind_from_name(const std::string& name) {
    if (name == "quadratic") return ProblemKind::quadratic;
    if (name == "logistic_l2") return ProblemKind::logistic_l2;
    if (name == "mlp_relu") return ProblemKind::mlp_relu;
    throw ConfigError("problem.kind: unknown kind '" + name + "'");
}

const char* kind_name(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::quadratic: return "quadratic";
        case ProblemKind::logistic_l2: return "logistic_l2";
        case ProblemKind::mlp_relu: return "mlp_relu";
    }
    return "unknown";
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
    return out;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be an object");
    require_keys(doc, "$",
                 {"algorithm", "seed", "problem", "hyper", "quantizer", "probes",
                  "hyperparam_source", "parallel_clients", "w0_scale"});

    RunConfig cfg;
    if (!doc.contains("algorithm")) throw ConfigError("missing required key: $.algorithm");
    try {
        cfg.algorithm = algorithm_from_name(doc.at("algorithm").get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("$.algorithm: ") + e.what());
    }
    cfg.seed = get_or<std::uint64_t>(doc, "$", "seed", 0);
    cfg.parallel_clients = get_or<bool>(doc, "$", "parallel_clients", false);
    cfg.w0_scale = get_or<double>(doc, "$", "w0_scale", 0.5);

    const std::string source = get_or<std::string>(doc, "$", "hyperparam_source", "manual");
    if (source == "manual")
        cfg.hyperparam_source = HyperparamSource::manual;
    else if (source == "theorem")
        cfg.hyperparam_source = HyperparamSource::theorem;
    else
        throw ConfigError("$.hyperparam_source: must be 'manual' or 'theorem'");

    if (!doc.contains("problem")) throw ConfigError("missing required key: $.problem");
    const json& pj = doc.at("problem");
    require_keys(pj, "$.problem",
                 {"kind", "n", "d", "heterogeneity", "samples_per_client", "classes",
                  "mlp_hidden", "lambda", "smoothness", "csv", "partition"});
    if (!pj.contains("kind")) throw ConfigError("missing required key: $.problem.kind");
    cfg.problem.kind = kind_from_name(pj.at("kind").get<std::string>());
    cfg.problem.n = get_or<std::size_t>(pj, "$.problem", "n", 50);
    cfg.problem.d = get_or<std::size_t>(pj, "$.problem", "d", 10);
    cfg.problem.heterogeneity = get_or<double>(pj, "$.problem", "heterogeneity", 0.0);
    cfg.problem.samples_per_client =
        get_or<std::size_t>(pj, "$.problem", "samples_per_client", 20);
    cfg.problem.classes = get_or<std::size_t>(pj, "$.problem", "classes", 2);
    cfg.problem.mlp_hidden = get_or<std::size_t>(pj, "$.problem", "mlp_hidden", 16);
    cfg.problem.lambda = get_or<double>(pj, "$.problem", "lambda", 1e-4);
    if (pj.contains("smoothness") && !pj.at("smoothness").is_null())
        cfg.problem.smoothness = pj.at("smoothness").get<double>();
    if (pj.contains("csv") && !pj.at("csv").is_null())
        cfg.problem.csv = pj.at("csv").get<std::string>();
    if (pj.contains("partition")) {
        const json& part = pj.at("partition");
        require_keys(part, "$.problem.partition", {"scheme", "n_shards", "shards_per_client"});
        const std::string scheme =
            get_or<std::string>(part, "$.problem.partition", "scheme", "sorted_shards");
        if (scheme == "sorted_shards")
            cfg.problem.partition.scheme = PartitionSpec::Scheme::sorted_shards;
        else if (scheme == "iid")
            cfg.problem.partition.scheme = PartitionSpec::Scheme::iid;
        else
            throw ConfigError("$.problem.partition.scheme: unknown scheme '" + scheme + "'");
        cfg.problem.partition.n_shards =
            get_or<std::size_t>(part, "$.problem.partition", "n_shards", 100);
        cfg.problem.partition.shards_per_client =
            get_or<std::size_t>(part, "$.problem.partition", "shards_per_client", 2);
    }
    if (cfg.problem.heterogeneity < 0.0)
        throw ConfigError("$.problem.heterogeneity: must be >= 0");
    if (cfg.problem.n < 1) throw ConfigError("$.problem.n: must be >= 1");

    const json hj = doc.contains("hyper") ? doc.at("hyper") : json::object();
    require_keys(hj, "$.hyper",
                 {"eta0", "beta", "E", "K", "r", "damping", "lr_decay", "local_momentum_gamma",
                  "batch_size", "anchor_batch", "full_participation_round0", "full_batch_round0",
                  "combined_uncompressed"});
    HyperParams& hp = cfg.hyper;
    hp.eta0 = get_or<double>(hj, "$.hyper", "eta0", 0.01);
    hp.beta = get_or<double>(hj, "$.hyper", "beta", 0.2);
    hp.E = get_or<std::size_t>(hj, "$.hyper", "E", 10);
    hp.K = get_or<std::size_t>(hj, "$.hyper", "K", 100);
    hp.r = get_or<std::size_t>(hj, "$.hyper", "r", 25);
    hp.damping = get_or<double>(hj, "$.hyper", "damping",
                                cfg.problem.heterogeneity > 0.0 ? 0.8 : 1.0);
    hp.lr_decay = get_or<double>(hj, "$.hyper", "lr_decay", 0.99);
    hp.local_momentum_gamma = get_or<double>(hj, "$.hyper", "local_momentum_gamma",
                                             cfg.algorithm == Algorithm::fedavg ||
                                                     cfg.algorithm == Algorithm::fedpaq
                                                 ? 0.9
                                                 : 0.0);
    hp.batch_size = get_or<std::size_t>(hj, "$.hyper", "batch_size", 32);
    hp.anchor_batch = get_or<std::size_t>(hj, "$.hyper", "anchor_batch", 0);
    hp.full_participation_round0 = get_or<bool>(hj, "$.hyper", "full_participation_round0", true);
    hp.full_batch_round0 = get_or<bool>(hj, "$.hyper", "full_batch_round0", true);
    hp.combined_uncompressed = get_or<bool>(hj, "$.hyper", "combined_uncompressed", false);

    if (hp.r < 1 || hp.r > cfg.problem.n)
        throw ConfigError("$.hyper.r: requires 1 <= r <= n (r = " + std::to_string(hp.r) +
                          ", n = " + std::to_string(cfg.problem.n) + ")");
    if (hp.beta < 0.0 || hp.beta > 1.0) throw ConfigError("$.hyper.beta: must be in [0, 1]");
    if (hp.eta0 <= 0.0) throw ConfigError("$.hyper.eta0: must be positive");
    if (hp.lr_decay <= 0.0 || hp.lr_decay > 1.0)
        throw ConfigError("$.hyper.lr_decay: must be in (0, 1]");
    if (hp.damping <= 0.0 || hp.damping > 1.0)
        throw ConfigError("$.hyper.damping: must be in (0, 1]");
    if (hp.local_momentum_gamma < 0.0 || hp.local_momentum_gamma >= 1.0)
        throw ConfigError("$.hyper.local_momentum_gamma: must be in [0, 1)");
    if (hp.E < 1 || hp.K < 1) throw ConfigError("$.hyper.E/K: must be >= 1");

    const json qj = doc.contains("quantizer") ? doc.at("quantizer") : json::object();
    require_keys(qj, "$.quantizer", {"mode", "s", "bits"});
    const bool default_identity =
        cfg.algorithm == Algorithm::fedavg;  // FedPAQ = FedAvg + compression
    const std::string mode =
        get_or<std::string>(qj, "$.quantizer", "mode", default_identity ? "identity" : "stochastic");
    if (mode == "identity")
        cfg.quantizer.mode = QuantizerMode::identity;
    else if (mode == "stochastic")
        cfg.quantizer.mode = QuantizerMode::stochastic;
    else
        throw ConfigError("$.quantizer.mode: must be 'identity' or 'stochastic'");
    if (qj.contains("bits")) {
        if (qj.contains("s")) throw ConfigError("$.quantizer: give either 's' or 'bits', not both");
        cfg.quantizer.s = QuantizerSpec::from_bits(qj.at("bits").get<int>()).s;
    } else {
        cfg.quantizer.s = get_or<std::uint32_t>(qj, "$.quantizer", "s", 4);
    }
    if (cfg.quantizer.s < 1) throw ConfigError("$.quantizer.s: must be >= 1");

    const json prj = doc.contains("probes") ? doc.at("probes") : json::object();
    require_keys(prj, "$.probes",
                 {"alpha_every", "variance_every", "lemma_every", "bcd_every",
                  "variance_resamples"});
    cfg.probes.alpha_every = get_or<std::size_t>(prj, "$.probes", "alpha_every", 0);
    cfg.probes.variance_every = get_or<std::size_t>(prj, "$.probes", "variance_every", 0);
    cfg.probes.lemma_every = get_or<std::size_t>(prj, "$.probes", "lemma_every", 0);
    cfg.probes.bcd_every = get_or<std::size_t>(prj, "$.probes", "bcd_every", 0);
    cfg.probes.variance_resamples =
        get_or<std::size_t>(prj, "$.probes", "variance_resamples", 500);

    if (cfg.hyperparam_source == HyperparamSource::theorem &&
        cfg.problem.kind == ProblemKind::mlp_relu && !cfg.problem.smoothness)
        throw ConfigError(
            "$.hyperparam_source: theorem source with mlp_relu requires "
            "$.problem.smoothness (surrogate L) to be declared");
    return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

json config_echo(const RunConfig& cfg) {
    json doc;
    doc["algorithm"] = algorithm_name(cfg.algorithm);
    doc["seed"] = cfg.seed;
    doc["parallel_clients"] = cfg.parallel_clients;
    doc["w0_scale"] = cfg.w0_scale;
    doc["hyperparam_source"] =
        cfg.hyperparam_source == HyperparamSource::theorem ? "theorem" : "manual";
    json& pj = doc["problem"];
    pj["kind"] = kind_name(cfg.problem.kind);
    pj["n"] = cfg.problem.n;
    pj["d"] = cfg.problem.d;
    pj["heterogeneity"] = cfg.problem.heterogeneity;
    pj["samples_per_client"] = cfg.problem.samples_per_client;
    pj["classes"] = cfg.problem.classes;
    pj["mlp_hidden"] = cfg.problem.mlp_hidden;
    pj["lambda"] = cfg.problem.lambda;
    if (cfg.problem.smoothness) pj["smoothness"] = *cfg.problem.smoothness;
    if (cfg.problem.csv) {
        pj["csv"] = *cfg.problem.csv;
        json& part = pj["partition"];
        part["scheme"] = cfg.problem.partition.scheme == PartitionSpec::Scheme::iid
                             ? "iid"
                             : "sorted_shards";
        part["n_shards"] = cfg.problem.partition.n_shards;
        part["shards_per_client"] = cfg.problem.partition.shards_per_client;
    }
    json& hj = doc["hyper"];
    hj["eta0"] = cfg.hyper.eta0;
    hj["beta"] = cfg.hyper.beta;
    hj["E"] = cfg.hyper.E;
    hj["K"] = cfg.hyper.K;
    hj["r"] = cfg.hyper.r;
    hj["damping"] = cfg.hyper.damping;
    hj["lr_decay"] = cfg.hyper.lr_decay;
    hj["local_momentum_gamma"] = cfg.hyper.local_momentum_gamma;
    hj["batch_size"] = cfg.hyper.batch_size;
    hj["anchor_batch"] = cfg.hyper.anchor_batch;
    hj["full_participation_round0"] = cfg.hyper.full_participation_round0;
    hj["full_batch_round0"] = cfg.hyper.full_batch_round0;
    hj["combined_uncompressed"] = cfg.hyper.combined_uncompressed;
    json& qj = doc["quantizer"];
    qj["mode"] = cfg.quantizer.mode == QuantizerMode::identity ? "identity" : "stochastic";
    qj["s"] = cfg.quantizer.s;
    json& prj = doc["probes"];
    prj["alpha_every"] = cfg.probes.alpha_every;
    prj["variance_every"] = cfg.probes.variance_every;
    prj["lemma_every"] = cfg.probes.lemma_every;
    prj["bcd_every"] = cfg.probes.bcd_every;
    prj["variance_resamples"] = cfg.probes.variance_resamples;
    return doc;
}

FederatedProblem build_problem(const RunConfig& cfg) {
    RngStream data_rng(StreamKey{cfg.seed, 0, 0xDA7Au, StreamPurpose::init});
    if (cfg.problem.csv) {
        const Dataset data = load_csv(*cfg.problem.csv);
        auto shards = partition_sorted_shards(data, cfg.problem.partition, data_rng);
        if (shards.size() != cfg.problem.n)
            throw ConfigError("$.problem: partition yields " + std::to_string(shards.size()) +
                              " clients but n = " + std::to_string(cfg.problem.n));
        switch (cfg.problem.kind) {
            case ProblemKind::logistic_l2:
                return FederatedProblem::make_logistic(std::move(shards), cfg.problem.lambda);
            case ProblemKind::mlp_relu:
                return FederatedProblem::make_mlp(std::move(shards), cfg.problem.mlp_hidden,
                                                  cfg.problem.classes, cfg.problem.lambda,
                                                  cfg.problem.smoothness, data_rng);
            case ProblemKind::quadratic:
                throw ConfigError("$.problem.csv: quadratic problems cannot be loaded from CSV");
        }
    }
    SyntheticOptions opt;
    opt.samples_per_client = cfg.problem.samples_per_client;
    opt.classes = cfg.problem.classes;
    opt.mlp_hidden = cfg.problem.mlp_hidden;
    opt.lambda = cfg.problem.lambda;
    opt.smoothness_override = cfg.problem.smoothness;
    return gen_synthetic(cfg.problem.kind, cfg.problem.n, cfg.problem.d,
                         cfg.problem.heterogeneity, data_rng, opt);
}

json apply_theorem_hyperparams(RunConfig& cfg, const FederatedProblem& problem) {
    theory::TheoryInputs in;
    in.L = problem.smoothness_bound();
    in.n = problem.n_clients();
    in.r = cfg.hyper.r;
    in.E = cfg.hyper.E;
    in.K = cfg.hyper.K;
    in.q = variance_factor(problem.dim(), cfg.quantizer);
    in.alpha = static_cast<double>(in.n);  // always-valid Cauchy-Schwarz bound

    json meta;
    meta["L"] = in.L;
    meta["q"] = in.q;
    meta["alpha"] = in.alpha;
    cfg.hyper.lr_decay = 1.0;  // the theorems prescribe constant step sizes
    switch (cfg.algorithm) {
        case Algorithm::fedglomo: {
            cfg.hyper.eta0 = theory::glomo_eta(in);
            cfg.hyper.beta = theory::glomo_beta(in, cfg.hyper.eta0);
            meta["eta"] = cfg.hyper.eta0;
            meta["beta"] = cfg.hyper.beta;
            break;
        }
        case Algorithm::fedlomo: {
            const auto sched = theory::lomo_eta(in);
            cfg.hyper.eta0 = sched.eta;
            meta["eta"] = sched.eta;
            meta["B"] = sched.B;
            meta["zeta"] = sched.zeta;
            break;
        }
        case Algorithm::fedavg:
        case Algorithm::fedpaq: {
            const auto sched = theory::fedavg_eta(in);
            cfg.hyper.eta0 = sched.eta;
            meta["eta"] = sched.eta;
            meta["zeta"] = sched.zeta;
            break;
        }
    }
    meta["warnings"] = theory::range_condition_warnings(in);
    return meta;
}

json record_to_json(const RoundRecord& rec) {
    json j;
    j["v"] = 1;
    j["k"] = rec.k;
    j["loss"] = rec.loss;
    j["grad_sq_norm"] = rec.grad_sq_norm;
    j["bits_up"] = rec.bits_up;
    j["bits_down"] = rec.bits_down;
    j["cumulative_bits"] = rec.cumulative_bits;
    j["eta_k"] = rec.eta_k;
    j["status"] = rec.status == RoundStatus::diverged ? "diverged" : "ok";
    if (rec.alpha_hat) j["alpha_hat"] = *rec.alpha_hat;
    if (rec.bcd) {
        j["bcd_mean_sq"] = rec.bcd->first;
        j["bcd_max_sq"] = rec.bcd->second;
    }
    if (rec.var_probe) {
        j["var_glomo"] = rec.var_probe->first;
        j["var_plain"] = rec.var_probe->second;
    }
    if (rec.lemma) {
        j["lemma_max_ratio"] = rec.lemma->max_ratio;
        j["lemma_bound"] = rec.lemma->bound;
        j["lemma_holds"] = rec.lemma->holds;
        j["lemma_precondition_met"] = rec.lemma->precondition_met;
    }
    return j;
}

RunResult run(const RunConfig& cfg_in, const std::filesystem::path& out_dir) {
    RunConfig cfg = cfg_in;
    std::filesystem::create_directories(out_dir);

    FederatedProblem problem = build_problem(cfg);
    json theorem_meta;
    if (cfg.hyperparam_source == HyperparamSource::theorem) {
        try {
            theorem_meta = apply_theorem_hyperparams(cfg, problem);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("theorem hyperparameters: ") + e.what());
        }
    }

    {
        auto echo = open_out(out_dir / "config.echo");
        json doc = config_echo(cfg);
        if (!theorem_meta.is_null()) doc["theorem_meta"] = theorem_meta;
        doc["resolved"]["L"] = problem.smoothness_bound();
        doc["resolved"]["dim"] = problem.dim();
        doc["resolved"]["q"] = variance_factor(problem.dim(), cfg.quantizer);
        if (cfg.problem.kind == ProblemKind::mlp_relu && !cfg.problem.smoothness)
            doc["resolved"]["smoothness_is_probed_surrogate"] = true;
        echo << doc.dump(2) << "\n";
    }

    ExperimentSpec spec;
    spec.algo = cfg.algorithm;
    spec.hp = cfg.hyper;
    spec.quantizer = cfg.quantizer;
    spec.seed = cfg.seed;
    spec.probes = cfg.probes;
    spec.parallel_clients = cfg.parallel_clients;
    spec.w0_scale = cfg.w0_scale;

    RunResult result;
    result.dir = out_dir;
    result.records = run_experiment(problem, spec);

    {
        // wall times live in a separate stream so rounds.jsonl stays
        // byte-identical across replays
        auto rounds = open_out(out_dir / "rounds.jsonl");
        auto timings = open_out(out_dir / "timings.jsonl");
        for (const auto& rec : result.records) {
            rounds << record_to_json(rec).dump() << "\n";
            json t;
            t["k"] = rec.k;
            t["wall_time_s"] = rec.wall_time_s;
            timings << t.dump() << "\n";
        }
    }

    double min_gsn = std::numeric_limits<double>::infinity();
    double sum_gsn = 0.0;
    std::int64_t total_bits = 0;
    std::vector<double> alphas;
    for (const auto& rec : result.records) {
        min_gsn = std::min(min_gsn, rec.grad_sq_norm);
        sum_gsn += rec.grad_sq_norm;
        total_bits = rec.cumulative_bits;
        if (rec.alpha_hat) alphas.push_back(*rec.alpha_hat);
        if (rec.status == RoundStatus::diverged) result.diverged = true;
    }
    json summary;
    summary["rounds_completed"] = result.records.size();
    summary["status"] = result.diverged ? "diverged" : "ok";
    if (!result.records.empty()) {
        summary["final_loss"] = result.records.back().loss;
        summary["final_grad_sq_norm"] = result.records.back().grad_sq_norm;
        summary["min_grad_sq_norm"] = min_gsn;
        summary["avg_grad_sq_norm"] = sum_gsn / static_cast<double>(result.records.size());
        summary["total_bits"] = total_bits;
    }
    if (!alphas.empty()) {
        std::sort(alphas.begin(), alphas.end());
        summary["alpha_hat_max"] = alphas.back();
        summary["alpha_hat_median"] = alphas[alphas.size() / 2];
    }
    if (!theorem_meta.is_null() && cfg.algorithm == Algorithm::fedglomo &&
        !result.records.empty()) {
        theory::TheoryInputs in;
        in.L = problem.smoothness_bound();
        in.n = problem.n_clients();
        in.r = cfg.hyper.r;
        in.E = cfg.hyper.E;
        in.K = cfg.hyper.K;
        in.q = variance_factor(problem.dim(), cfg.quantizer);
        in.alpha = static_cast<double>(in.n);
        in.f0 = result.records.front().loss;
        const double bound = theory::glomo_rate_bound(in);
        summary["theorem_bound"] = bound;
        summary["theorem_bound_satisfied"] =
            summary["avg_grad_sq_norm"].get<double>() <= bound;
    }
    {
        auto out = open_out(out_dir / "summary.json");
        out << summary.dump(2) << "\n";
    }
    result.summary = std::move(summary);
    return result;
}

SweepResult sweep(const RunConfig& base, const std::string& axis,
                  const std::vector<nlohmann::json>& values,
                  const std::filesystem::path& out_dir, bool parallel) {
    if (values.empty()) throw ConfigError("sweep: need at least one value");
    json base_doc = config_echo(base);
    std::string pointer = "/" + axis;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const json::json_pointer jp(pointer);
    try {
        (void)base_doc.at(jp);
    } catch (const json::exception&) {
        throw ConfigError("sweep: axis '" + axis + "' does not name an existing config field");
    }

    std::filesystem::create_directories(out_dir);
    SweepResult result;
    std::vector<RunConfig> cfgs;
    for (std::size_t v = 0; v < values.size(); ++v) {
        json doc = base_doc;
        doc[jp] = values[v];
        cfgs.push_back(parse_config(doc.dump()));
        result.run_dirs.push_back(out_dir / ("run_" + std::to_string(v)));
    }

    auto run_one = [&](std::size_t v) { return run(cfgs[v], result.run_dirs[v]); };
    std::vector<RunResult> runs(values.size());
    if (parallel && values.size() > 1) {
        std::vector<std::future<RunResult>> futures;
        for (std::size_t v = 0; v < values.size(); ++v)
            futures.push_back(std::async(std::launch::async, run_one, v));
        for (std::size_t v = 0; v < values.size(); ++v) runs[v] = futures[v].get();
    } else {
        for (std::size_t v = 0; v < values.size(); ++v) runs[v] = run_one(v);
    }

    // merged comparison table, bits normalized by d*r as in the paper's plots
    const bool seed_axis = axis == "seed";
    std::map<std::size_t, std::vector<std::pair<double, double>>> per_k;  // k -> (loss, gsn)
    if (seed_axis)
        for (const auto& rr : runs)
            for (const auto& rec : rr.records)
                per_k[rec.k].push_back({rec.loss, rec.grad_sq_norm});

    result.merged_csv = out_dir / "merged.csv";
    auto csv = open_out(result.merged_csv);
    csv << "# merged sweep table; bits_norm = cumulative_bits / (d * r)\n";
    csv << "axis_value,k,loss,grad_sq_norm,bits_up,bits_down,cumulative_bits,bits_norm,eta_k,"
           "status";
    if (seed_axis) csv << ",loss_mean,loss_std,grad_sq_norm_mean,grad_sq_norm_std";
    csv << "\n";
    for (std::size_t v = 0; v < values.size(); ++v) {
        const double dr = static_cast<double>(cfgs[v].hyper.r);
        std::ifstream echo_in(result.run_dirs[v] / "config.echo");
        json echo = json::parse(echo_in);
        const double dim = echo.at("resolved").at("dim").get<double>();
        for (const auto& rec : runs[v].records) {
            csv << values[v].dump() << "," << rec.k << "," << rec.loss << ","
                << rec.grad_sq_norm << "," << rec.bits_up << "," << rec.bits_down << ","
                << rec.cumulative_bits << ","
                << static_cast<double>(rec.cumulative_bits) / (dim * dr) << "," << rec.eta_k
                << "," << (rec.status == RoundStatus::diverged ? "diverged" : "ok");
            if (seed_axis) {
                const auto& samples = per_k[rec.k];
                double mean_l = 0.0, mean_g = 0.0;
                for (const auto& [l, g] : samples) {
                    mean_l += l;
                    mean_g += g;
                }
                mean_l /= static_cast<double>(samples.size());
                mean_g /= static_cast<double>(samples.size());
                double var_l = 0.0, var_g = 0.0;
                for (const auto& [l, g] : samples) {
                    var_l += (l - mean_l) * (l - mean_l);
                    var_g += (g - mean_g) * (g - mean_g);
                }
                const double denom = std::max<std::size_t>(1, samples.size() - 1);
                csv << "," << mean_l << "," << std::sqrt(var_l / denom) << "," << mean_g << ","
                    << std::sqrt(var_g / denom);
            }
            csv << "\n";
        }
    }
    return result;
}

std::filesystem::path export_plotdata(const std::vector<std::filesystem::path>& run_dirs,
                                      const std::filesystem::path& out_csv) {
    auto csv = open_out(out_csv);
    csv << "# one row per run x round\n";
    csv << "# bits_norm = cumulative_bits / (d * r), the paper-style x axis\n";
    csv << "run_dir,algorithm,seed,k,loss,grad_sq_norm,bits_up,bits_down,cumulative_bits,"
           "bits_norm,eta_k,status,alpha_hat,bcd_mean_sq\n";
    for (const auto& dir : run_dirs) {
        const auto rounds_path = dir / "rounds.jsonl";
        const auto echo_path = dir / "config.echo";
        std::ifstream rounds_in(rounds_path);
        std::ifstream echo_in(echo_path);
        if (!rounds_in || !echo_in)
            throw std::runtime_error("export: missing records in " + dir.string());
        const json echo = json::parse(echo_in);
        const double dim = echo.at("resolved").at("dim").get<double>();
        const double r = echo.at("hyper").at("r").get<double>();
        const std::string algo = echo.at("algorithm").get<std::string>();
        const std::uint64_t seed = echo.at("seed").get<std::uint64_t>();
        std::string line;
        bool any = false;
        while (std::getline(rounds_in, line)) {
            if (line.empty()) continue;
            any = true;
            const json rec = json::parse(line);
            csv << dir.string() << "," << algo << "," << seed << "," << rec.at("k") << ","
                << rec.at("loss").get<double>() << "," << rec.at("grad_sq_norm").get<double>()
                << "," << rec.at("bits_up").get<std::int64_t>() << ","
                << rec.at("bits_down").get<std::int64_t>() << ","
                << rec.at("cumulative_bits").get<std::int64_t>() << ","
                << rec.at("cumulative_bits").get<double>() / (dim * r) << ","
                << rec.at("eta_k").get<double>() << "," << rec.at("status").get<std::string>()
                << ",";
            if (rec.contains("alpha_hat")) csv << rec.at("alpha_hat").get<double>();
            csv << ",";
            if (rec.contains("bcd_mean_sq")) csv << rec.at("bcd_mean_sq").get<double>();
            csv << "\n";
        }
        if (!any) throw std::runtime_error("export: no records in " + rounds_path.string());
    }
    return out_csv;
}

}  // namespace fedsim::harness
