#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/algorithms.hpp"
#include "fedsim/problems.hpp"

namespace fedsim::harness {

/// Config or validation problem; maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ProblemConfig {
    ProblemKind kind = ProblemKind::quadratic;
    std::size_t n = 50;
    std::size_t d = 10;
    double heterogeneity = 0.0;
    std::size_t samples_per_client = 20;
    std::size_t classes = 2;
    std::size_t mlp_hidden = 16;
    double lambda = 1e-4;
    std::optional<double> smoothness;  // mlp surrogate override
    std::optional<std::string> csv;    // CSV ingestion instead of synthesis
    PartitionSpec partition;
};

enum class HyperparamSource { manual, theorem };

struct RunConfig {
    Algorithm algorithm = Algorithm::fedavg;
    std::uint64_t seed = 0;
    ProblemConfig problem;
    HyperParams hyper;
    QuantizerSpec quantizer;
    ProbeIntervals probes;
    HyperparamSource hyperparam_source = HyperparamSource::manual;
    bool parallel_clients = false;
    double w0_scale = 0.5;
};

/// Parses and validates a JSON config document. Unknown keys, type
/// mismatches, and invariant violations raise ConfigError naming the
/// offending path. Defaults: n=50, r=25, E=10, beta=0.2, gamma=0.9,
/// lr_decay=0.99, lambda=1e-4, damping 0.8 when heterogeneity > 0.
RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::filesystem::path& path);

/// Canonical JSON echo of a resolved config; parsing it reproduces the
/// run bit-identically.
nlohmann::json config_echo(const RunConfig& cfg);

FederatedProblem build_problem(const RunConfig& cfg);

/// Fills eta0/beta (and forces a flat schedule) from the matching theorem
/// formulas; alpha defaults to n. Returns run metadata about the fill.
nlohmann::json apply_theorem_hyperparams(RunConfig& cfg, const FederatedProblem& problem);

struct RunResult {
    std::filesystem::path dir;
    std::vector<RoundRecord> records;
    nlohmann::json summary;
    bool diverged = false;
};

/// Executes a run and writes config.echo, rounds.jsonl, timings.jsonl and
/// summary.json into out_dir.
RunResult run(const RunConfig& cfg, const std::filesystem::path& out_dir);

nlohmann::json record_to_json(const RoundRecord& rec);

struct SweepResult {
    std::vector<std::filesystem::path> run_dirs;
    std::filesystem::path merged_csv;
};

/// One run per value of the dotted config path (e.g. "hyper.eta0", "seed",
/// "algorithm"); writes merged.csv keyed by (axis value, k) with a
/// bits-normalized column, plus per-k mean/std columns for seed sweeps.
SweepResult sweep(const RunConfig& base, const std::string& axis,
                  const std::vector<nlohmann::json>& values,
                  const std::filesystem::path& out_dir, bool parallel = false);

/// Tidy per-run-per-round CSV merged from completed run directories.
std::filesystem::path export_plotdata(const std::vector<std::filesystem::path>& run_dirs,
                                      const std::filesystem::path& out_csv);

}  // namespace fedsim::harness
