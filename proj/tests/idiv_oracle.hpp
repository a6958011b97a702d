#pragma once

#include <limits>

#include "precondiag/diagnostics.hpp"

namespace test_util {

// Numeric minimization of the I-divergence objective in log coordinates with
// backtracking descent and random restarts. Deliberately independent of the
// closed form it cross-checks.
inline double idiv_numeric_min(const precondiag::Matrix& v, std::uint64_t seed) {
    using precondiag::Index;
    using precondiag::Matrix;
    using precondiag::Vector;
    const Index m = v.rows(), n = v.cols();
    const auto objective = [&](const Vector& log_r, const Vector& log_s) {
        return precondiag::i_divergence(v, log_r.array().exp().matrix(),
                                        log_s.array().exp().matrix());
    };
    double best = std::numeric_limits<double>::infinity();
    precondiag::Rng rng(seed);
    for (int restart = 0; restart < 4; ++restart) {
        Vector log_r = 0.5 * precondiag::gaussian_matrix(m, 1, rng);
        Vector log_s = 0.5 * precondiag::gaussian_matrix(n, 1, rng);
        double f = objective(log_r, log_s);
        double step = 0.5;
        for (int iter = 0; iter < 5000 && step > 1e-14; ++iter) {
            const Vector r = log_r.array().exp().matrix();
            const Vector s = log_s.array().exp().matrix();
            Vector g_r(m), g_s(n);
            for (Index i = 0; i < m; ++i) g_r(i) = (r(i) * s.transpose() - v.row(i)).sum();
            for (Index j = 0; j < n; ++j)
                g_s(j) = (s(j) * r.transpose() - v.col(j).transpose()).sum();
            const Vector cand_r = log_r - step * g_r;
            const Vector cand_s = log_s - step * g_s;
            const double f_cand = objective(cand_r, cand_s);
            if (f_cand < f) {
                log_r = cand_r;
                log_s = cand_s;
                f = f_cand;
                step *= 1.1;
            } else {
                step *= 0.5;
            }
        }
        best = std::min(best, f);
    }
    return best;
}

}  // namespace test_util
