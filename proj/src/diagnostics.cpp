#include "precondiag/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "precondiag/errors.hpp"

namespace precondiag {

namespace {

int bin_index(double x, double lo, double hi, int n_bins) {
    const int idx = static_cast<int>(std::floor((x - lo) / (hi - lo) * n_bins));
    return std::clamp(idx, 0, n_bins - 1);
}

}  // namespace

double cov_offdiag_ratio(const Matrix& g) {
    if (!all_finite(g)) throw NumericError("non-finite input to cov_offdiag_ratio");
    const double s2 = g.array().square().sum();
    const double s4 = g.array().square().square().sum();
    const double off_sq = std::max(0.0, s2 * s2 - s4);
    return std::sqrt(off_sq) / std::max(s2, std::numeric_limits<double>::min());
}

CovStats cov_offdiag_stats(const Matrix& g, std::int64_t max_elements, std::uint64_t sample_seed,
                           int n_bins) {
    if (!all_finite(g)) throw NumericError("non-finite input to cov_offdiag_stats");
    if (n_bins < 1) throw ConfigError("histogram needs at least one bin");
    const Matrix v = vec(g);
    const std::int64_t n = v.size();

    CovStats stats;
    // ||COV||_F^2 = (sum v^2)^2 and the diagonal contributes sum v^4, so the
    // ratio never needs the matrix.
    const double s2 = v.array().square().sum();
    const double s4 = v.array().square().square().sum();
    const double off_sq = std::max(0.0, s2 * s2 - s4);
    stats.offdiag_ratio = std::sqrt(off_sq) / std::max(s2, std::numeric_limits<double>::min());

    // Largest |v_i v_j| over i != j: product of the two largest magnitudes.
    double top1 = 0.0, top2 = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = std::abs(v(i));
        if (a > top1) {
            top2 = top1;
            top1 = a;
        } else if (a > top2) {
            top2 = a;
        }
    }
    const double max_off = (n > 1) ? top1 * top2 : 0.0;
    const double half_range = max_off > 0.0 ? max_off : 1.0;

    stats.histogram.counts.assign(n_bins, 0);
    stats.histogram.edges.resize(n_bins + 1);
    for (int b = 0; b <= n_bins; ++b)
        stats.histogram.edges[b] = -half_range + 2.0 * half_range * b / n_bins;

    const std::int64_t total = n * n;
    if (total <= max_elements) {
        stats.n_elements = total - n;
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
                if (i == j) continue;
                ++stats.histogram.counts[bin_index(v(i) * v(j), -half_range, half_range, n_bins)];
            }
    } else {
        stats.n_elements = max_elements;
        Rng rng(sample_seed);
        for (std::int64_t k = 0; k < max_elements; ++k) {
            const std::int64_t i = rng.below(n);
            std::int64_t j = rng.below(n - 1);
            if (j >= i) ++j;
            ++stats.histogram.counts[bin_index(v(i) * v(j), -half_range, half_range, n_bins)];
        }
    }
    return stats;
}

HamiltonianSample hamiltonian_value(double loss, const FullMomentState& state, double eps) {
    if ((state.v.array() < 0.0).any())
        throw DomainError("second moment has a negative entry");
    const double kinetic =
        0.5 * (state.m.array().square() / (state.v.array().sqrt() + eps)).sum();
    return {state.t, loss, kinetic, loss + kinetic};
}

HamiltonianSample hfac_hamiltonian_value(double loss, const HfacState& state) {
    if ((state.r.array() <= 0.0).any() || (state.s.array() <= 0.0).any())
        throw DomainError("factored second moment must be entrywise positive");
    const double n = static_cast<double>(state.v_vec.size());
    const double m = static_cast<double>(state.u.size());
    const double left = 0.25 * n * (state.u.array().square() / state.r.array().sqrt()).sum();
    const double right = 0.25 * m * (state.v_vec.array().square() / state.s.array().sqrt()).sum();
    return {state.t, loss, left + right, loss + left + right};
}

HamiltonianSample adafactor_hamiltonian_value(double loss, const FactoredMomentState& state) {
    if (!state.m) return {state.t, loss, 0.0, loss};
    if ((state.r.array() <= 0.0).any() || (state.s.array() <= 0.0).any())
        throw DomainError("factored second moment must be entrywise positive");
    const Matrix v_hat = state.r * state.s.transpose() / state.r.sum();
    const double kinetic = 0.5 * (state.m->array().square() / v_hat.array().sqrt()).sum();
    return {state.t, loss, kinetic, loss + kinetic};
}

std::pair<Vector, Vector> factored_second_moment(const Matrix& v) {
    if ((v.array() <= 0.0).any())
        throw DomainError("factored_second_moment requires entrywise positive input");
    Vector r = v.rowwise().sum();
    Vector s = v.colwise().sum().transpose() / r.sum();
    return {std::move(r), std::move(s)};
}

double i_divergence(const Matrix& v, const Vector& r, const Vector& s) {
    if (r.size() != v.rows() || s.size() != v.cols())
        throw ShapeError("factor lengths do not match the matrix");
    if ((v.array() <= 0.0).any() || (r.array() <= 0.0).any() || (s.array() <= 0.0).any())
        throw DomainError("i_divergence requires entrywise positive inputs");
    double total = 0.0;
    for (Index j = 0; j < v.cols(); ++j)
        for (Index i = 0; i < v.rows(); ++i) {
            const double p = v(i, j);
            const double q = r(i) * s(j);
            total += p * std::log(p / q) - p + q;
        }
    return total;
}

DescentReport hamiltonian_descent_report(const std::vector<HamiltonianSample>& trajectory,
                                         double tol) {
    if (trajectory.size() < 2) throw StateError("descent report needs at least two samples");
    DescentReport report;
    report.n_transitions = static_cast<std::int64_t>(trajectory.size()) - 1;
    std::int64_t ok = 0;
    for (std::size_t i = 1; i < trajectory.size(); ++i) {
        const double delta = trajectory[i].total - trajectory[i - 1].total;
        if (delta <= tol) ++ok;
        report.max_increase = std::max(report.max_increase, delta);
    }
    report.max_increase = std::max(0.0, report.max_increase);
    report.fraction_non_increasing =
        static_cast<double>(ok) / static_cast<double>(report.n_transitions);
    return report;
}

}  // namespace precondiag
