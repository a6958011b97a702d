#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "precondiag/rng.hpp"

namespace precondiag {

// Dense 64-bit real matrices are the universal carrier for weights,
// gradients and moment accumulators. Eigen's default column-major layout is
// load-bearing: vec() below is a plain reshape.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Full square factor pair from an SVD: g = p * diag_rect(sigma) * q_t.
struct SvdFactors {
    Matrix p;       // m x m, orthogonal
    Vector sigma;   // min(m, n), non-negative, non-increasing
    Matrix q_t;     // n x n, stored as Q^T
};

// Full (non-truncated) SVD with square orthogonal factors.
// Throws NumericError on non-finite input; retries a failed decomposition
// once with a 1e-12-relative perturbation before giving up.
SvdFactors full_svd(const Matrix& g);

// min(m, n) x min(m, n) identity-permutation embedding of sigma into an
// m x n rectangular diagonal matrix.
Matrix sigma_matrix(const SvdFactors& f, Index rows, Index cols);

// Kronecker product. Exists for small-scale verification; results above
// element_cap elements throw ShapeError.
Matrix kron(const Matrix& a, const Matrix& b, std::int64_t element_cap = std::int64_t{1} << 24);

// Column-stacking vectorization (mn x 1), so vec(A X B) = (B^T kron A) vec(X).
Matrix vec(const Matrix& a);

// Inverse of vec for the given shape.
Matrix unvec(const Matrix& v, Index rows, Index cols);

// ||offdiag(a)||_F / max(||a||_F, tiny), in [0, 1]; 0 for diagonal and zero
// matrices. Square input only.
double off_diagonal_ratio(const Matrix& a);

// Frobenius distance of a square matrix from the identity.
double orthogonality_defect(const Matrix& a);

bool all_finite(const Matrix& a);

// Seeded i.i.d. standard normal matrix.
Matrix gaussian_matrix(Index rows, Index cols, Rng& rng);

// Haar-ish random orthogonal matrix: QR of a Gaussian with sign fix.
Matrix random_orthogonal(Index n, Rng& rng);

}  // namespace precondiag
