#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "precondiag/matrix.hpp"

namespace precondiag {

struct Dataset {
    Matrix features;             // N x F
    std::vector<double> labels;  // length N; class ids for classification
    std::string source;          // path or generator description

    Index n_rows() const { return features.rows(); }
    Index n_features() const { return features.cols(); }
};

struct LossGrads {
    double loss = 0.0;
    std::vector<Matrix> grads;  // one per parameter, same shapes as params
};

// A deterministic differentiable test problem. Given (params, step) the loss
// and exact gradients are pure; step selects the seeded minibatch for that
// training step, nullopt means full batch.
class Objective {
public:
    virtual ~Objective() = default;
    virtual std::vector<std::pair<Index, Index>> param_shapes() const = 0;
    virtual std::vector<Matrix> initial_params(std::uint64_t seed) const = 0;
    virtual LossGrads loss_and_grads(const std::vector<Matrix>& params,
                                     std::optional<std::int64_t> step) const = 0;
};

// L(W) = 1/2 vec(W - W*)^T A vec(W - W*), A symmetric positive definite with
// eigenvalues log-uniform in [1, condition_number]. Full batch only.
std::unique_ptr<Objective> make_quadratic(std::uint64_t seed, Index m, Index n,
                                          double condition_number);

// L(U, V) = ||U V^T - Y||_F^2 / (mn) with Y = U* V*^T + noise_std * N(0, 1).
// Two matrix parameters U (m x rank) and V (n x rank). Full batch only.
std::unique_ptr<Objective> make_matfac(std::uint64_t seed, Index m, Index n, Index rank,
                                       double noise_std);

// Fully connected classifier: tanh hidden activations, softmax cross-entropy,
// manual backprop. Parameters alternate weight (f_in x f_out) and bias
// (1 x f_out). Minibatches are drawn by seeded shuffle-per-epoch without
// replacement; the epoch permutation seed is hash(seed, epoch, "shuffle").
std::unique_ptr<Objective> make_mlp(std::uint64_t seed, std::vector<Index> layer_sizes,
                                    Dataset dataset, Index batch_size);

// Seeded Gaussian blob classification data: class centers ~ center_spread * N(0, 1),
// points ~ center + N(0, 1).
Dataset make_blobs(std::uint64_t seed, Index n_samples, Index n_features, Index n_classes,
                   double center_spread);

// Comma-separated numeric rows, label in the last column, optional single
// header row. Throws DataError naming the offending line.
Dataset load_csv_dataset(const std::string& path, bool has_header);

// Zero mean, unit variance per feature column (constant columns are centered
// only).
Dataset standardize_features(Dataset d);

// Max relative error between analytic and central-difference gradients over
// n_probes seeded entries, full batch.
double gradient_audit(const Objective& objective, const std::vector<Matrix>& params, int n_probes,
                      double fd_eps, std::uint64_t seed);

// Checks the rotated-parameter gradient identity grad_{W~} = P^T grad_W Q by
// differencing the reparameterized objective (layer W = P W~ Q^T) on n_probes
// seeded entries of W~. The probed layer is the first whose shape matches
// (p.rows() x q.rows()). Returns the max relative error.
double rotated_gradient_check(const Objective& objective, const std::vector<Matrix>& params,
                              const Matrix& p, const Matrix& q, double probe_eps, int n_probes,
                              std::uint64_t seed);

}  // namespace precondiag
