#include "fedsim/problems.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fedsim {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) {
    if (z > 30.0) return z;
    return std::log1p(std::exp(z));
}

double power_iteration_lambda_max(const ClientShard& shard, int iters = 200) {
    // largest eigenvalue of X^T X via power iteration on p-dim vectors
    const std::size_t m = shard.m, p = shard.p;
    std::vector<double> v(p, 1.0 / std::sqrt(static_cast<double>(p)));
    std::vector<double> xv(m), next(p);
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            const double* row = shard.features.data() + j * p;
            for (std::size_t k = 0; k < p; ++k) acc += row[k] * v[k];
            xv[j] = acc;
        }
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const double* row = shard.features.data() + j * p;
            for (std::size_t k = 0; k < p; ++k) next[k] += row[k] * xv[j];
        }
        double nn = std::sqrt(kernels::sq_norm(next.data(), p));
        if (nn == 0.0) return 0.0;
        lambda = nn;
        for (std::size_t k = 0; k < p; ++k) v[k] = next[k] / nn;
    }
    return lambda;
}

}  // namespace

// ---------------------------------------------------------------- quadratic

FederatedProblem FederatedProblem::make_quadratic(
    std::vector<std::vector<ParamVector>> sample_centers, ParamVector diag,
    std::vector<double> offsets) {
    FederatedProblem pr;
    pr.kind_ = ProblemKind::quadratic;
    pr.n_ = sample_centers.size();
    if (pr.n_ == 0) throw std::invalid_argument("make_quadratic: need at least one client");
    pr.d_ = diag.size();
    pr.m_ = sample_centers[0].size();
    for (const auto& client : sample_centers) {
        if (client.size() != pr.m_)
            throw std::invalid_argument("make_quadratic: unequal client sample counts");
        for (const auto& c : client)
            if (c.size() != pr.d_) throw std::invalid_argument("make_quadratic: center dim mismatch");
    }
    for (double a : diag)
        if (a <= 0.0) throw std::invalid_argument("make_quadratic: curvature must be positive");
    if (offsets.empty()) offsets.assign(pr.n_, 0.0);
    for (double b : offsets)
        if (b < 0.0) throw std::invalid_argument("make_quadratic: offsets must be non-negative");
    pr.quad_centers_ = std::move(sample_centers);
    pr.quad_diag_ = std::move(diag);
    pr.quad_offsets_ = std::move(offsets);
    pr.compute_smoothness();
    return pr;
}

ParamVector FederatedProblem::quad_client_center(std::size_t i) const {
    ParamVector c = zeros(d_);
    for (const auto& cj : quad_centers_[i]) axpy_inplace(1.0, cj, c);
    return scale(1.0 / static_cast<double>(m_), c);
}

// ---------------------------------------------------------------- logistic

FederatedProblem FederatedProblem::make_logistic(std::vector<ClientShard> shards,
                                                 double lambda) {
    FederatedProblem pr;
    pr.kind_ = ProblemKind::logistic_l2;
    pr.n_ = shards.size();
    if (pr.n_ == 0) throw std::invalid_argument("make_logistic: need at least one client");
    pr.d_ = shards[0].p;
    pr.m_ = shards[0].m;
    for (const auto& sh : shards) {
        if (sh.p != pr.d_ || sh.m != pr.m_)
            throw std::invalid_argument("make_logistic: ragged shards");
        for (int y : sh.labels)
            if (y != 0 && y != 1)
                throw std::invalid_argument("make_logistic: labels must be 0/1");
    }
    pr.lambda_ = lambda;
    pr.shards_ = std::move(shards);
    pr.compute_smoothness();
    return pr;
}

// ---------------------------------------------------------------- mlp

FederatedProblem FederatedProblem::make_mlp(std::vector<ClientShard> shards, std::size_t hidden,
                                            std::size_t classes, double lambda,
                                            std::optional<double> smoothness_override,
                                            RngStream& rng) {
    FederatedProblem pr;
    pr.kind_ = ProblemKind::mlp_relu;
    pr.n_ = shards.size();
    if (pr.n_ == 0) throw std::invalid_argument("make_mlp: need at least one client");
    const std::size_t p = shards[0].p;
    pr.m_ = shards[0].m;
    pr.mlp_hidden_ = hidden;
    pr.mlp_classes_ = classes;
    pr.d_ = hidden * p + hidden + classes * hidden + classes;
    for (const auto& sh : shards) {
        if (sh.p != p || sh.m != pr.m_) throw std::invalid_argument("make_mlp: ragged shards");
        for (int y : sh.labels)
            if (y < 0 || static_cast<std::size_t>(y) >= classes)
                throw std::invalid_argument("make_mlp: label out of class range");
    }
    pr.lambda_ = lambda;
    pr.shards_ = std::move(shards);
    if (smoothness_override) {
        pr.smoothness_ = *smoothness_override;
    } else {
        // ReLU nets are not globally smooth; probe gradient Lipschitz ratios
        // near the init scale and pad by 1.5x.
        double best = 1.0;
        const std::size_t probes = 100;
        for (std::size_t t = 0; t < probes; ++t) {
            ParamVector x(pr.d_), y(pr.d_);
            for (std::size_t j = 0; j < pr.d_; ++j) {
                x[j] = 0.5 * rng.normal();
                y[j] = x[j] + 0.05 * rng.normal();
            }
            const std::size_t i = rng.uniform_int(pr.n_);
            ParamVector gx = pr.grad_full(i, x);
            ParamVector gy = pr.grad_full(i, y);
            const double dx = norm(sub(x, y));
            if (dx > 0.0) best = std::max(best, norm(sub(gx, gy)) / dx);
        }
        pr.smoothness_ = 1.5 * best;
    }
    return pr;
}

// ---------------------------------------------------------------- shared

void FederatedProblem::compute_smoothness() {
    switch (kind_) {
        case ProblemKind::quadratic: {
            smoothness_ = *std::max_element(quad_diag_.begin(), quad_diag_.end());
            break;
        }
        case ProblemKind::logistic_l2: {
            double best = 0.0;
            for (const auto& sh : shards_) {
                const double lam = power_iteration_lambda_max(sh);
                best = std::max(best, 0.25 * lam / static_cast<double>(sh.m) + lambda_);
            }
            smoothness_ = best;
            break;
        }
        case ProblemKind::mlp_relu:
            break;  // set in make_mlp
    }
}

double FederatedProblem::regularizer(const ParamVector& w) const {
    return kind_ == ProblemKind::quadratic ? 0.0 : 0.5 * lambda_ * sq_norm(w);
}

void FederatedProblem::regularizer_grad(const ParamVector& w, ParamVector& acc,
                                        double scale) const {
    if (kind_ == ProblemKind::quadratic || lambda_ == 0.0) return;
    axpy_inplace(scale * lambda_, w, acc);
}

double FederatedProblem::sample_loss(std::size_t i, std::size_t j, const ParamVector& w) const {
    switch (kind_) {
        case ProblemKind::quadratic: {
            const ParamVector& c = quad_centers_[i][j];
            double acc = 0.0;
            for (std::size_t k = 0; k < d_; ++k) {
                const double diff = w[k] - c[k];
                acc += 0.5 * quad_diag_[k] * diff * diff;
            }
            return acc + quad_offsets_[i];
        }
        case ProblemKind::logistic_l2: {
            const ClientShard& sh = shards_[i];
            const double* x = sh.features.data() + j * sh.p;
            const double margin = kernels::dot(x, w.data(), sh.p);
            const double yy = sh.labels[j] == 1 ? 1.0 : -1.0;
            return softplus(-yy * margin);
        }
        case ProblemKind::mlp_relu: {
            const ClientShard& sh = shards_[i];
            const double* x = sh.features.data() + j * sh.p;
            const std::size_t p = sh.p, h = mlp_hidden_, c = mlp_classes_;
            const double* W1 = w.data();
            const double* b1 = W1 + h * p;
            const double* W2 = b1 + h;
            const double* b2 = W2 + c * h;
            std::vector<double> a1(h);
            for (std::size_t u = 0; u < h; ++u) {
                double z = b1[u] + kernels::dot(W1 + u * p, x, p);
                a1[u] = z > 0.0 ? z : 0.0;
            }
            std::vector<double> z2(c);
            double zmax = -1e300;
            for (std::size_t v = 0; v < c; ++v) {
                z2[v] = b2[v] + kernels::dot(W2 + v * h, a1.data(), h);
                zmax = std::max(zmax, z2[v]);
            }
            double lse = 0.0;
            for (std::size_t v = 0; v < c; ++v) lse += std::exp(z2[v] - zmax);
            lse = zmax + std::log(lse);
            return lse - z2[static_cast<std::size_t>(sh.labels[j])];
        }
    }
    return 0.0;
}

void FederatedProblem::sample_grad_accumulate(std::size_t i, std::size_t j, const ParamVector& w,
                                              ParamVector& acc) const {
    switch (kind_) {
        case ProblemKind::quadratic: {
            const ParamVector& c = quad_centers_[i][j];
            for (std::size_t k = 0; k < d_; ++k) acc[k] += quad_diag_[k] * (w[k] - c[k]);
            return;
        }
        case ProblemKind::logistic_l2: {
            const ClientShard& sh = shards_[i];
            const double* x = sh.features.data() + j * sh.p;
            const double margin = kernels::dot(x, w.data(), sh.p);
            const double yy = sh.labels[j] == 1 ? 1.0 : -1.0;
            const double coef = -yy * sigmoid(-yy * margin);
            for (std::size_t k = 0; k < sh.p; ++k) acc[k] += coef * x[k];
            return;
        }
        case ProblemKind::mlp_relu: {
            const ClientShard& sh = shards_[i];
            const double* x = sh.features.data() + j * sh.p;
            const std::size_t p = sh.p, h = mlp_hidden_, c = mlp_classes_;
            const double* W1 = w.data();
            const double* b1 = W1 + h * p;
            const double* W2 = b1 + h;
            const double* b2 = W2 + c * h;
            double* gW1 = acc.data();
            double* gb1 = gW1 + h * p;
            double* gW2 = gb1 + h;
            double* gb2 = gW2 + c * h;

            std::vector<double> z1(h), a1(h);
            for (std::size_t u = 0; u < h; ++u) {
                z1[u] = b1[u] + kernels::dot(W1 + u * p, x, p);
                a1[u] = z1[u] > 0.0 ? z1[u] : 0.0;
            }
            std::vector<double> z2(c);
            double zmax = -1e300;
            for (std::size_t v = 0; v < c; ++v) {
                z2[v] = b2[v] + kernels::dot(W2 + v * h, a1.data(), h);
                zmax = std::max(zmax, z2[v]);
            }
            double denom = 0.0;
            for (std::size_t v = 0; v < c; ++v) denom += std::exp(z2[v] - zmax);
            std::vector<double> dz2(c);
            for (std::size_t v = 0; v < c; ++v) dz2[v] = std::exp(z2[v] - zmax) / denom;
            dz2[static_cast<std::size_t>(sh.labels[j])] -= 1.0;

            std::vector<double> da1(h, 0.0);
            for (std::size_t v = 0; v < c; ++v) {
                gb2[v] += dz2[v];
                for (std::size_t u = 0; u < h; ++u) {
                    gW2[v * h + u] += dz2[v] * a1[u];
                    da1[u] += dz2[v] * W2[v * h + u];
                }
            }
            for (std::size_t u = 0; u < h; ++u) {
                if (z1[u] <= 0.0) continue;
                gb1[u] += da1[u];
                for (std::size_t k = 0; k < p; ++k) gW1[u * p + k] += da1[u] * x[k];
            }
            return;
        }
    }
}

double FederatedProblem::loss(std::size_t i, const ParamVector& w) const {
    if (i >= n_) throw std::out_of_range("loss: client index");
    double acc = 0.0;
    for (std::size_t j = 0; j < m_; ++j) acc += sample_loss(i, j, w);
    return acc / static_cast<double>(m_) + regularizer(w);
}

double FederatedProblem::loss_global(const ParamVector& w) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) acc += loss(i, w);
    return acc / static_cast<double>(n_);
}

ParamVector FederatedProblem::grad_full(std::size_t i, const ParamVector& w) const {
    if (i >= n_) throw std::out_of_range("grad_full: client index");
    ParamVector g = zeros(d_);
    for (std::size_t j = 0; j < m_; ++j) sample_grad_accumulate(i, j, w, g);
    const double inv = 1.0 / static_cast<double>(m_);
    for (double& x : g) x *= inv;
    regularizer_grad(w, g, 1.0);
    return g;
}

ParamVector FederatedProblem::grad_batch(std::size_t i, const ParamVector& w,
                                         std::span<const std::uint32_t> batch) const {
    if (i >= n_) throw std::out_of_range("grad_batch: client index");
    if (batch.empty()) throw std::invalid_argument("grad_batch: empty batch");
    ParamVector g = zeros(d_);
    for (std::uint32_t j : batch) {
        if (j >= m_) throw std::out_of_range("grad_batch: sample index");
        sample_grad_accumulate(i, j, w, g);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& x : g) x *= inv;
    regularizer_grad(w, g, 1.0);
    return g;
}

ParamVector FederatedProblem::grad_global(const ParamVector& w) const {
    ParamVector g = zeros(d_);
    for (std::size_t i = 0; i < n_; ++i) axpy_inplace(1.0, grad_full(i, w), g);
    return scale(1.0 / static_cast<double>(n_), g);
}

double smoothness_bound(const FederatedProblem& problem) { return problem.smoothness_bound(); }

// ---------------------------------------------------------------- partition

std::vector<ClientShard> partition_sorted_shards(const Dataset& data, const PartitionSpec& spec,
                                                 RngStream& rng) {
    if (spec.n_shards == 0 || spec.shards_per_client == 0)
        throw std::invalid_argument("partition: shard counts must be positive");
    if (data.m % spec.n_shards != 0)
        throw std::invalid_argument("partition: sample count not divisible by n_shards");
    if (spec.n_shards % spec.shards_per_client != 0)
        throw std::invalid_argument("partition: n_shards not divisible by shards_per_client");

    std::vector<std::uint32_t> order(data.m);
    std::iota(order.begin(), order.end(), 0u);
    if (spec.scheme == PartitionSpec::Scheme::sorted_shards) {
        std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return data.labels[a] < data.labels[b];
        });
    } else {
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            std::size_t j = i + rng.uniform_int(order.size() - i);
            std::swap(order[i], order[j]);
        }
    }

    // deal shards to clients uniformly at random without replacement
    std::vector<std::uint32_t> shard_order(spec.n_shards);
    std::iota(shard_order.begin(), shard_order.end(), 0u);
    for (std::size_t i = 0; i + 1 < shard_order.size(); ++i) {
        std::size_t j = i + rng.uniform_int(shard_order.size() - i);
        std::swap(shard_order[i], shard_order[j]);
    }

    const std::size_t shard_size = data.m / spec.n_shards;
    const std::size_t n_clients = spec.n_shards / spec.shards_per_client;
    std::vector<ClientShard> out(n_clients);
    for (std::size_t c = 0; c < n_clients; ++c) {
        ClientShard& sh = out[c];
        sh.client_id = static_cast<int>(c);
        sh.p = data.p;
        sh.m = shard_size * spec.shards_per_client;
        sh.features.reserve(sh.m * sh.p);
        sh.labels.reserve(sh.m);
        for (std::size_t s = 0; s < spec.shards_per_client; ++s) {
            const std::uint32_t shard = shard_order[c * spec.shards_per_client + s];
            for (std::size_t j = 0; j < shard_size; ++j) {
                const std::uint32_t row = order[shard * shard_size + j];
                const double* src = data.features.data() + row * data.p;
                sh.features.insert(sh.features.end(), src, src + data.p);
                sh.labels.push_back(data.labels[row]);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- synthesis

namespace {

std::vector<ClientShard> synth_classification_shards(std::size_t n, std::size_t p,
                                                     std::size_t classes, std::size_t m,
                                                     double het, RngStream& rng) {
    // class means on a noisy simplex
    std::vector<std::vector<double>> means(classes, std::vector<double>(p));
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t k = 0; k < p; ++k) means[c][k] = 1.5 * rng.normal();

    auto draw_client = [&](int id, std::size_t pref_a, std::size_t pref_b) {
        ClientShard sh;
        sh.client_id = id;
        sh.p = p;
        sh.m = m;
        sh.features.resize(m * p);
        sh.labels.resize(m);
        for (std::size_t j = 0; j < m; ++j) {
            std::size_t y;
            if (rng.uniform() < het) {
                y = rng.uniform() < 0.5 ? pref_a : pref_b;
            } else {
                y = rng.uniform_int(classes);
            }
            sh.labels[j] = static_cast<int>(y);
            double* row = sh.features.data() + j * p;
            for (std::size_t k = 0; k < p; ++k) row[k] = means[y][k] + 0.8 * rng.normal();
        }
        return sh;
    };

    std::vector<ClientShard> shards;
    shards.reserve(n);
    if (het == 0.0) {
        // homogeneous setting: every client holds the very same data
        ClientShard base = draw_client(0, 0, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ClientShard sh = base;
            sh.client_id = static_cast<int>(i);
            shards.push_back(std::move(sh));
        }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            shards.push_back(draw_client(static_cast<int>(i), (2 * i) % classes,
                                         (2 * i + 1) % classes));
    }
    return shards;
}

}  // namespace

FederatedProblem gen_synthetic(ProblemKind kind, std::size_t n, std::size_t d,
                               double heterogeneity, RngStream& rng,
                               const SyntheticOptions& opt) {
    if (heterogeneity < 0.0) throw std::invalid_argument("gen_synthetic: heterogeneity < 0");
    switch (kind) {
        case ProblemKind::quadratic: {
            ParamVector diag(d);
            for (std::size_t k = 0; k < d; ++k) diag[k] = 0.5 + rng.uniform();
            ParamVector base(d);
            for (std::size_t k = 0; k < d; ++k) base[k] = rng.normal();
            // shared, zero-mean sample jitter so client minimizers equal c_i
            const std::size_t m = opt.samples_per_client;
            std::vector<ParamVector> jitter(m, zeros(d));
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t k = 0; k < d; ++k) jitter[j][k] = 0.5 * rng.normal();
            ParamVector jmean = zeros(d);
            for (const auto& jv : jitter) axpy_inplace(1.0 / static_cast<double>(m), jv, jmean);
            for (auto& jv : jitter) axpy_inplace(-1.0, jmean, jv);

            std::vector<std::vector<ParamVector>> centers(n);
            for (std::size_t i = 0; i < n; ++i) {
                ParamVector ci = base;
                if (heterogeneity > 0.0)
                    for (std::size_t k = 0; k < d; ++k) ci[k] += heterogeneity * rng.normal();
                centers[i].reserve(m);
                for (std::size_t j = 0; j < m; ++j) centers[i].push_back(add(ci, jitter[j]));
            }
            return FederatedProblem::make_quadratic(std::move(centers), std::move(diag), {});
        }
        case ProblemKind::logistic_l2: {
            const double het = std::min(heterogeneity, 1.0);
            auto shards = synth_classification_shards(n, d, 2, opt.samples_per_client, het, rng);
            return FederatedProblem::make_logistic(std::move(shards), opt.lambda);
        }
        case ProblemKind::mlp_relu: {
            const double het = std::min(heterogeneity, 1.0);
            auto shards = synth_classification_shards(n, d, opt.classes, opt.samples_per_client,
                                                      het, rng);
            return FederatedProblem::make_mlp(std::move(shards), opt.mlp_hidden, opt.classes,
                                              opt.lambda, opt.smoothness_override, rng);
        }
    }
    throw std::invalid_argument("gen_synthetic: unknown kind");
}

// ---------------------------------------------------------------- csv

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file");
    const std::size_t n_cols = 1 + std::count(line.begin(), line.end(), ',');
    if (n_cols < 2) throw std::runtime_error("load_csv: need at least one feature column");

    Dataset data;
    data.p = n_cols - 1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != n_cols)
            throw std::runtime_error("load_csv: ragged row at line " + std::to_string(line_no));
        const double lab = row.back();
        if (lab != std::floor(lab) || lab < 0.0)
            throw std::runtime_error("load_csv: label must be a non-negative integer at line " +
                                     std::to_string(line_no));
        data.features.insert(data.features.end(), row.begin(), row.end() - 1);
        data.labels.push_back(static_cast<int>(lab));
        ++data.m;
    }
    if (data.m == 0) throw std::runtime_error("load_csv: no data rows");
    return data;
}

}  // namespace fedsim
