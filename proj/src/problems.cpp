#include "precondiag/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "precondiag/errors.hpp"

namespace precondiag {

namespace {

constexpr double kQuadraticInitStd = 10.0;
constexpr double kMatfacInitStd = 0.5;

class QuadraticObjective final : public Objective {
public:
    QuadraticObjective(std::uint64_t seed, Index m, Index n, double condition_number)
        : rows_(m), cols_(n) {
        if (m < 1 || n < 1) throw ShapeError("quadratic objective needs m, n >= 1");
        if (condition_number < 1.0) throw ConfigError("condition_number must be >= 1");
        const Index dim = m * n;
        Rng basis_rng(seed_fanout(seed, 0, "quadratic_basis"));
        const Matrix basis = random_orthogonal(dim, basis_rng);
        Rng eig_rng(seed_fanout(seed, 0, "quadratic_eigs"));
        Vector eigs(dim);
        for (Index i = 0; i < dim; ++i)
            eigs(i) = std::exp(eig_rng.uniform() * std::log(condition_number));
        a_ = basis * eigs.asDiagonal() * basis.transpose();
        a_ = 0.5 * (a_ + a_.transpose());  // keep it exactly symmetric
        Rng target_rng(seed_fanout(seed, 0, "quadratic_target"));
        w_star_ = gaussian_matrix(m, n, target_rng);
    }

    std::vector<std::pair<Index, Index>> param_shapes() const override {
        return {{rows_, cols_}};
    }

    std::vector<Matrix> initial_params(std::uint64_t seed) const override {
        Rng rng(seed_fanout(seed, 0, "quadratic_init"));
        return {w_star_ + kQuadraticInitStd * gaussian_matrix(rows_, cols_, rng)};
    }

    LossGrads loss_and_grads(const std::vector<Matrix>& params,
                             std::optional<std::int64_t>) const override {
        const Matrix d = vec(params.at(0) - w_star_);
        const Matrix ad = a_ * d;
        LossGrads out;
        out.loss = 0.5 * (d.transpose() * ad)(0, 0);
        out.grads.push_back(unvec(ad, rows_, cols_));
        return out;
    }

private:
    Index rows_, cols_;
    Matrix a_;       // mn x mn SPD
    Matrix w_star_;  // minimizer
};

class MatfacObjective final : public Objective {
public:
    MatfacObjective(std::uint64_t seed, Index m, Index n, Index rank, double noise_std)
        : m_(m), n_(n), rank_(rank) {
        if (rank < 1 || rank > std::min(m, n)) throw ConfigError("rank must be in [1, min(m, n)]");
        Rng u_rng(seed_fanout(seed, 0, "matfac_u"));
        Rng v_rng(seed_fanout(seed, 1, "matfac_v"));
        Matrix u_star = gaussian_matrix(m, rank, u_rng);
        const Matrix v_star = gaussian_matrix(n, rank, v_rng);
        // Spread the target spectrum over a decade inside the rank subspace;
        // a clustered spectrum makes every adaptive method look alike.
        for (Index k = 0; k < rank; ++k)
            u_star.col(k) *= std::pow(0.1, static_cast<double>(k) /
                                               static_cast<double>(std::max<Index>(1, rank - 1)));
        y_ = u_star * v_star.transpose();
        if (noise_std > 0.0) {
            Rng noise_rng(seed_fanout(seed, 2, "matfac_noise"));
            y_ += noise_std * gaussian_matrix(m, n, noise_rng);
        }
    }

    std::vector<std::pair<Index, Index>> param_shapes() const override {
        return {{m_, rank_}, {n_, rank_}};
    }

    std::vector<Matrix> initial_params(std::uint64_t seed) const override {
        Rng u_rng(seed_fanout(seed, 0, "matfac_init_u"));
        Rng v_rng(seed_fanout(seed, 1, "matfac_init_v"));
        return {kMatfacInitStd * gaussian_matrix(m_, rank_, u_rng),
                kMatfacInitStd * gaussian_matrix(n_, rank_, v_rng)};
    }

    LossGrads loss_and_grads(const std::vector<Matrix>& params,
                             std::optional<std::int64_t>) const override {
        const Matrix& u = params.at(0);
        const Matrix& v = params.at(1);
        const Matrix residual = u * v.transpose() - y_;
        const double scale = static_cast<double>(m_) * static_cast<double>(n_);
        LossGrads out;
        out.loss = residual.squaredNorm() / scale;
        out.grads.push_back(2.0 / scale * residual * v);
        out.grads.push_back(2.0 / scale * residual.transpose() * u);
        return out;
    }

private:
    Index m_, n_, rank_;
    Matrix y_;
};

class MlpObjective final : public Objective {
public:
    MlpObjective(std::uint64_t seed, std::vector<Index> layer_sizes, Dataset dataset,
                 Index batch_size)
        : seed_(seed),
          layers_(std::move(layer_sizes)),
          data_(std::move(dataset)),
          batch_size_(batch_size) {
        if (layers_.size() < 2) throw ConfigError("mlp needs at least two layer sizes");
        if (data_.n_rows() < 1) throw DataError("mlp dataset is empty");
        if (data_.n_features() != layers_.front())
            throw ShapeError("dataset feature width does not match the first layer size");
        if (batch_size_ < 1) throw ConfigError("batch_size must be >= 1");
        const auto classes = static_cast<double>(layers_.back());
        for (std::size_t i = 0; i < data_.labels.size(); ++i) {
            const double y = data_.labels[i];
            if (y != std::floor(y) || y < 0.0 || y >= classes)
                throw DataError("label out of class range at row " + std::to_string(i + 1));
        }
    }

    std::vector<std::pair<Index, Index>> param_shapes() const override {
        std::vector<std::pair<Index, Index>> shapes;
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            shapes.emplace_back(layers_[l], layers_[l + 1]);
            shapes.emplace_back(1, layers_[l + 1]);
        }
        return shapes;
    }

    std::vector<Matrix> initial_params(std::uint64_t seed) const override {
        std::vector<Matrix> params;
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            Rng rng(seed_fanout(seed, l, "mlp_init"));
            params.push_back(gaussian_matrix(layers_[l], layers_[l + 1], rng) /
                             std::sqrt(static_cast<double>(layers_[l])));
            params.push_back(Matrix::Zero(1, layers_[l + 1]));
        }
        return params;
    }

    LossGrads loss_and_grads(const std::vector<Matrix>& params,
                             std::optional<std::int64_t> step) const override {
        const std::vector<Index> rows = batch_rows(step);
        const Index batch = static_cast<Index>(rows.size());
        const std::size_t n_layers = layers_.size() - 1;
        if (params.size() != 2 * n_layers) throw ShapeError("mlp expects weight+bias per layer");

        std::vector<Matrix> activations;  // activations[l] feeds layer l
        activations.reserve(n_layers + 1);
        Matrix x(batch, data_.n_features());
        for (Index b = 0; b < batch; ++b) x.row(b) = data_.features.row(rows[b]);
        activations.push_back(std::move(x));
        for (std::size_t l = 0; l < n_layers; ++l) {
            Matrix z = activations[l] * params[2 * l];
            z.rowwise() += params[2 * l + 1].row(0);
            activations.push_back(l + 1 < n_layers ? z.array().tanh().matrix() : std::move(z));
        }

        // Softmax cross-entropy, mean over the batch.
        const Matrix& logits = activations.back();
        Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
        const Vector log_z = shifted.array().exp().rowwise().sum().log();
        double loss = 0.0;
        Matrix delta(batch, layers_.back());
        for (Index b = 0; b < batch; ++b) {
            const auto y = static_cast<Index>(data_.labels[rows[b]]);
            loss -= shifted(b, y) - log_z(b);
            delta.row(b) = (shifted.row(b).array() - log_z(b)).exp();
            delta(b, y) -= 1.0;
        }
        loss /= static_cast<double>(batch);
        delta /= static_cast<double>(batch);

        LossGrads out;
        out.loss = loss;
        out.grads.resize(params.size());
        for (std::size_t l = n_layers; l-- > 0;) {
            out.grads[2 * l] = activations[l].transpose() * delta;
            out.grads[2 * l + 1] = delta.colwise().sum();
            if (l > 0) {
                delta = (delta * params[2 * l].transpose()).array() *
                        (1.0 - activations[l].array().square());
            }
        }
        return out;
    }

private:
    std::vector<Index> batch_rows(std::optional<std::int64_t> step) const {
        const Index n = data_.n_rows();
        std::vector<Index> rows;
        if (!step) {
            rows.resize(n);
            std::iota(rows.begin(), rows.end(), Index{0});
            return rows;
        }
        if (*step < 1) throw StateError("minibatch step index must be >= 1");
        const Index effective_batch = std::min(batch_size_, n);
        const std::int64_t batches_per_epoch = (n + effective_batch - 1) / effective_batch;
        const std::int64_t epoch = (*step - 1) / batches_per_epoch;
        const std::int64_t slot = (*step - 1) % batches_per_epoch;

        std::vector<Index> perm(n);
        std::iota(perm.begin(), perm.end(), Index{0});
        Rng rng(seed_fanout(seed_, static_cast<std::uint64_t>(epoch), "shuffle"));
        for (Index i = n - 1; i > 0; --i)
            std::swap(perm[i], perm[rng.below(i + 1)]);

        const Index begin = static_cast<Index>(slot) * effective_batch;
        const Index end = std::min(begin + effective_batch, n);
        rows.assign(perm.begin() + begin, perm.begin() + end);
        return rows;
    }

    std::uint64_t seed_;
    std::vector<Index> layers_;
    Dataset data_;
    Index batch_size_;
};

}  // namespace

std::unique_ptr<Objective> make_quadratic(std::uint64_t seed, Index m, Index n,
                                          double condition_number) {
    return std::make_unique<QuadraticObjective>(seed, m, n, condition_number);
}

std::unique_ptr<Objective> make_matfac(std::uint64_t seed, Index m, Index n, Index rank,
                                       double noise_std) {
    return std::make_unique<MatfacObjective>(seed, m, n, rank, noise_std);
}

std::unique_ptr<Objective> make_mlp(std::uint64_t seed, std::vector<Index> layer_sizes,
                                    Dataset dataset, Index batch_size) {
    return std::make_unique<MlpObjective>(seed, std::move(layer_sizes), std::move(dataset),
                                          batch_size);
}

Dataset make_blobs(std::uint64_t seed, Index n_samples, Index n_features, Index n_classes,
                   double center_spread) {
    if (n_samples < 1 || n_features < 1 || n_classes < 1)
        throw ConfigError("blob generator needs positive sample, feature and class counts");
    Rng center_rng(seed_fanout(seed, 0, "blob_centers"));
    const Matrix centers = center_spread * gaussian_matrix(n_classes, n_features, center_rng);
    Rng point_rng(seed_fanout(seed, 0, "blob_points"));
    Dataset d;
    d.features.resize(n_samples, n_features);
    d.labels.resize(n_samples);
    for (Index i = 0; i < n_samples; ++i) {
        const Index c = i % n_classes;
        for (Index j = 0; j < n_features; ++j)
            d.features(i, j) = centers(c, j) + point_rng.normal();
        d.labels[i] = static_cast<double>(c);
    }
    d.source = "blobs(seed=" + std::to_string(seed) + ")";
    return d;
}

Dataset load_csv_dataset(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file '" + path + "'");

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (has_header && line_no == 1) continue;
        if (line.empty()) continue;
        std::vector<double> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string cell = line.substr(start, comma - start);
            char* end = nullptr;
            const double value = std::strtod(cell.c_str(), &end);
            while (end && *end == ' ') ++end;
            if (cell.empty() || end == cell.c_str() || *end != '\0')
                throw DataError("non-numeric cell '" + cell + "' at line " +
                                std::to_string(line_no));
            cells.push_back(value);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (!rows.empty() && cells.size() != rows.front().size())
            throw DataError("ragged row at line " + std::to_string(line_no) + ": expected " +
                            std::to_string(rows.front().size()) + " cells, got " +
                            std::to_string(cells.size()));
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw DataError("dataset file '" + path + "' has no data rows");
    if (rows.front().size() < 2)
        throw DataError("dataset needs at least one feature column plus the label column");

    Dataset d;
    const auto n = static_cast<Index>(rows.size());
    const auto f = static_cast<Index>(rows.front().size() - 1);
    d.features.resize(n, f);
    d.labels.resize(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < f; ++j) d.features(i, j) = rows[i][j];
        d.labels[i] = rows[i].back();
    }
    d.source = path;
    return d;
}

Dataset standardize_features(Dataset d) {
    const double n = static_cast<double>(d.n_rows());
    for (Index j = 0; j < d.n_features(); ++j) {
        auto col = d.features.col(j);
        const double mean = col.mean();
        col.array() -= mean;
        const double stddev = std::sqrt(col.squaredNorm() / n);
        if (stddev > 1e-12) col /= stddev;
    }
    return d;
}

namespace {

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

double gradient_audit(const Objective& objective, const std::vector<Matrix>& params, int n_probes,
                      double fd_eps, std::uint64_t seed) {
    const LossGrads analytic = objective.loss_and_grads(params, std::nullopt);
    Rng rng(seed_fanout(seed, 0, "gradient_audit"));
    std::vector<Matrix> probe = params;
    double worst = 0.0;
    for (int k = 0; k < n_probes; ++k) {
        const auto p = static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(params.size())));
        const Index i = rng.below(params[p].rows());
        const Index j = rng.below(params[p].cols());
        const double saved = probe[p](i, j);
        probe[p](i, j) = saved + fd_eps;
        const double up = objective.loss_and_grads(probe, std::nullopt).loss;
        probe[p](i, j) = saved - fd_eps;
        const double down = objective.loss_and_grads(probe, std::nullopt).loss;
        probe[p](i, j) = saved;
        const double fd = (up - down) / (2.0 * fd_eps);
        worst = std::max(worst, relative_error(fd, analytic.grads[p](i, j)));
    }
    return worst;
}

double rotated_gradient_check(const Objective& objective, const std::vector<Matrix>& params,
                              const Matrix& p, const Matrix& q, double probe_eps, int n_probes,
                              std::uint64_t seed) {
    std::size_t layer = params.size();
    for (std::size_t idx = 0; idx < params.size(); ++idx) {
        if (params[idx].rows() == p.rows() && params[idx].cols() == q.rows()) {
            layer = idx;
            break;
        }
    }
    if (layer == params.size())
        throw ShapeError("no parameter matches the rotation factors' shape");

    const Matrix w_tilde = p.transpose() * params[layer] * q;
    std::vector<Matrix> base = params;
    base[layer] = p * w_tilde * q.transpose();
    const LossGrads analytic = objective.loss_and_grads(base, std::nullopt);
    const Matrix rotated_grad = p.transpose() * analytic.grads[layer] * q;

    Rng rng(seed_fanout(seed, 0, "rotated_probe"));
    std::vector<Matrix> probe = base;
    double worst = 0.0;
    for (int k = 0; k < n_probes; ++k) {
        const Index i = rng.below(w_tilde.rows());
        const Index j = rng.below(w_tilde.cols());
        Matrix shifted = w_tilde;
        shifted(i, j) += probe_eps;
        probe[layer] = p * shifted * q.transpose();
        const double up = objective.loss_and_grads(probe, std::nullopt).loss;
        shifted(i, j) -= 2.0 * probe_eps;
        probe[layer] = p * shifted * q.transpose();
        const double down = objective.loss_and_grads(probe, std::nullopt).loss;
        const double fd = (up - down) / (2.0 * probe_eps);
        worst = std::max(worst, relative_error(fd, rotated_grad(i, j)));
    }
    return worst;
}

}  // namespace precondiag
