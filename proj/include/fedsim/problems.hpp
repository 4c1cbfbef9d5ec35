#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsim/rng.hpp"
#include "fedsim/vec.hpp"

namespace fedsim {

enum class ProblemKind { quadratic, logistic_l2, mlp_relu };

/// One client's slice of a dataset: m_i rows of p features plus a label
/// column. Labels are class indices (>= 0), or 0/1 for binary tasks.
struct ClientShard {
    std::vector<double> features;  // row-major, m x p
    std::vector<int> labels;       // length m
    std::size_t m = 0;
    std::size_t p = 0;
    int client_id = 0;
};

struct PartitionSpec {
    enum class Scheme { sorted_shards, iid };
    std::size_t n_shards = 100;
    std::size_t shards_per_client = 2;
    Scheme scheme = Scheme::sorted_shards;
};

struct Dataset {
    std::vector<double> features;  // row-major, m x p
    std::vector<int> labels;
    std::size_t m = 0;
    std::size_t p = 0;
};

/// n client objectives sharing one parameterization of dimension d.
/// Quadratic clients are sums of per-sample quadratic pieces with a shared
/// diagonal curvature, so L and stationary points are exact. Logistic is
/// binary with l2 regularization. The MLP is one ReLU hidden layer with
/// softmax cross-entropy, gradients by manual backprop.
class FederatedProblem {
  public:
    ProblemKind kind() const { return kind_; }
    std::size_t n_clients() const { return n_; }
    std::size_t dim() const { return d_; }
    std::size_t samples_per_client() const { return m_; }
    double smoothness_bound() const { return smoothness_; }

    double loss(std::size_t i, const ParamVector& w) const;
    double loss_global(const ParamVector& w) const;

    ParamVector grad_full(std::size_t i, const ParamVector& w) const;
    ParamVector grad_batch(std::size_t i, const ParamVector& w,
                           std::span<const std::uint32_t> batch) const;
    ParamVector grad_global(const ParamVector& w) const;

    // --- quadratic-only accessors (oracle tests, synthetic construction)
    const ParamVector& quad_curvature() const { return quad_diag_; }
    ParamVector quad_client_center(std::size_t i) const;

    static FederatedProblem make_quadratic(std::vector<std::vector<ParamVector>> sample_centers,
                                           ParamVector diag, std::vector<double> offsets);
    static FederatedProblem make_logistic(std::vector<ClientShard> shards, double lambda);
    static FederatedProblem make_mlp(std::vector<ClientShard> shards, std::size_t hidden,
                                     std::size_t classes, double lambda,
                                     std::optional<double> smoothness_override, RngStream& rng);

  private:
    FederatedProblem() = default;

    double sample_loss(std::size_t i, std::size_t j, const ParamVector& w) const;
    void sample_grad_accumulate(std::size_t i, std::size_t j, const ParamVector& w,
                                ParamVector& acc) const;
    double regularizer(const ParamVector& w) const;
    void regularizer_grad(const ParamVector& w, ParamVector& acc, double scale) const;
    void compute_smoothness();

    ProblemKind kind_ = ProblemKind::quadratic;
    std::size_t n_ = 0, d_ = 0, m_ = 0;
    double smoothness_ = 1.0;
    double lambda_ = 0.0;

    // quadratic: per client, per sample centers; shared diagonal curvature
    std::vector<std::vector<ParamVector>> quad_centers_;
    ParamVector quad_diag_;
    std::vector<double> quad_offsets_;

    // logistic / mlp
    std::vector<ClientShard> shards_;
    std::size_t mlp_hidden_ = 0;
    std::size_t mlp_classes_ = 0;
};

double smoothness_bound(const FederatedProblem& problem);

/// Appendix-style shard partitioner: sort by label, cut into n_shards equal
/// shards, deal shards_per_client shards to each client uniformly at random
/// without replacement. The iid scheme shuffles rows instead.
std::vector<ClientShard> partition_sorted_shards(const Dataset& data, const PartitionSpec& spec,
                                                 RngStream& rng);

struct SyntheticOptions {
    std::size_t samples_per_client = 20;
    std::size_t classes = 2;
    std::size_t mlp_hidden = 16;
    double lambda = 1e-4;
    std::optional<double> smoothness_override;
};

/// heterogeneity = 0 gives every client an identical objective; larger
/// values spread quadratic minimizers or skew client label distributions.
FederatedProblem gen_synthetic(ProblemKind kind, std::size_t n, std::size_t d,
                               double heterogeneity, RngStream& rng,
                               const SyntheticOptions& opt = {});

/// CSV with a header row, feature columns, final integer label column.
Dataset load_csv(const std::string& path);

}  // namespace fedsim
