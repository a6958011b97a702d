#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "precondiag/matrix.hpp"
#include "precondiag/optimizers.hpp"

namespace precondiag {

struct Histogram {
    std::vector<double> edges;        // n_bins + 1, uniform over [-max|x|, +max|x|]
    std::vector<std::int64_t> counts; // n_bins
};

// Diagonality statistics of COV(g) = vec(g) vec(g)^T, computed without ever
// materializing the (mn)^2 matrix.
struct CovStats {
    double offdiag_ratio = 0.0;     // ||offdiag(COV)||_F / ||COV||_F, exact
    Histogram histogram;            // off-diagonal element values
    std::int64_t n_elements = 0;    // (mn)^2 - mn when exhaustive, sample count otherwise
};

// Exhaustive when (mn)^2 <= max_elements, otherwise max_elements seeded
// uniform off-diagonal samples. The ratio is exact either way.
CovStats cov_offdiag_stats(const Matrix& g, std::int64_t max_elements = std::int64_t{1} << 22,
                           std::uint64_t sample_seed = 0, int n_bins = 64);

// Just the exact ratio, O(mn); what the per-step metrics use.
double cov_offdiag_ratio(const Matrix& g);

struct HamiltonianSample {
    std::int64_t step = 0;
    double loss = 0.0;
    double kinetic = 0.0;  // >= 0 always
    double total = 0.0;    // loss + kinetic
};

// H = loss + 1/2 <M / (sqrt(V) + eps), M> for the full-moment optimizers.
HamiltonianSample hamiltonian_value(double loss, const FullMomentState& state, double eps);

// H = loss + 1/4 <u 1^T / sqrt(r 1^T), u 1^T> + 1/4 <1 v^T / sqrt(1 s^T), 1 v^T>.
HamiltonianSample hfac_hamiltonian_value(double loss, const HfacState& state);

// H = loss + 1/2 <M / sqrt(r s^T / 1^T r), M>; kinetic is zero without momentum.
HamiltonianSample adafactor_hamiltonian_value(double loss, const FactoredMomentState& state);

// Closed-form rank-1 factorization minimizing the elementwise I-divergence:
// r = V 1_n, s = V^T 1_m / sum(V). Exact on rank-1 inputs.
std::pair<Vector, Vector> factored_second_moment(const Matrix& v);

// Sum over entries of d(p, q) = p log(p/q) - p + q with p = V_ij, q = r_i s_j.
double i_divergence(const Matrix& v, const Vector& r, const Vector& s);

struct DescentReport {
    double fraction_non_increasing = 0.0;  // transitions with H_{t+1} <= H_t + tol
    double max_increase = 0.0;             // largest positive jump, 0 if none
    std::int64_t n_transitions = 0;
};

DescentReport hamiltonian_descent_report(const std::vector<HamiltonianSample>& trajectory,
                                         double tol = 0.0);

}  // namespace precondiag
