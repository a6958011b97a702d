#include "precondiag/projection.hpp"

#include "precondiag/errors.hpp"

namespace precondiag {

namespace {

const Matrix& left_factor(const ProjectionState& state) {
    if (!state.p) throw StateError("projection state has no left factor");
    return *state.p;
}

const Matrix& right_factor(const ProjectionState& state) {
    if (!state.q_t) throw StateError("projection state has no right factor");
    return *state.q_t;
}

void check_shape(bool ok, const Matrix& g) {
    if (!ok)
        throw ShapeError("projection factors do not conform to a " + std::to_string(g.rows()) +
                         "x" + std::to_string(g.cols()) + " gradient");
}

}  // namespace

ProjectionState maybe_refresh(const ProjectionState& state, const ProjectionPolicy& policy,
                              std::int64_t t, const Matrix& g) {
    if (policy.period_t < 1) throw ConfigError("projection period must be >= 1");
    if (t < 1) throw StateError("step index must be >= 1");
    if (policy.mode == ProjectionMode::Identity) return state;
    if ((t - 1) % policy.period_t != 0) return state;
    // A basis computed at step t is never recomputed within the same step.
    if (state.refreshed_at_step == t) return state;

    SvdFactors f = full_svd(g);
    ProjectionState fresh;
    fresh.refreshed_at_step = t;
    if (policy.mode == ProjectionMode::TwoSided) {
        fresh.p = std::move(f.p);
        fresh.q_t = std::move(f.q_t);
    } else if (g.rows() <= g.cols()) {
        fresh.p = std::move(f.p);
    } else {
        fresh.q_t = std::move(f.q_t);
    }
    return fresh;
}

Matrix project(const Matrix& g, const ProjectionState& state, ProjectionMode mode) {
    switch (mode) {
        case ProjectionMode::Identity:
            return g;
        case ProjectionMode::OneSided:
            if (g.rows() <= g.cols()) {
                const Matrix& p = left_factor(state);
                check_shape(p.rows() == g.rows(), g);
                return p.transpose() * g;
            } else {
                const Matrix& q_t = right_factor(state);
                check_shape(q_t.rows() == g.cols(), g);
                return g * q_t.transpose();
            }
        case ProjectionMode::TwoSided: {
            const Matrix& p = left_factor(state);
            const Matrix& q_t = right_factor(state);
            check_shape(p.rows() == g.rows() && q_t.rows() == g.cols(), g);
            return p.transpose() * g * q_t.transpose();
        }
    }
    throw StateError("unreachable projection mode");
}

Matrix project_back(const Matrix& u, const ProjectionState& state, ProjectionMode mode) {
    switch (mode) {
        case ProjectionMode::Identity:
            return u;
        case ProjectionMode::OneSided:
            if (u.rows() <= u.cols()) {
                const Matrix& p = left_factor(state);
                check_shape(p.rows() == u.rows(), u);
                return p * u;
            } else {
                const Matrix& q_t = right_factor(state);
                check_shape(q_t.rows() == u.cols(), u);
                return u * q_t;
            }
        case ProjectionMode::TwoSided: {
            const Matrix& p = left_factor(state);
            const Matrix& q_t = right_factor(state);
            check_shape(p.rows() == u.rows() && q_t.rows() == u.cols(), u);
            return p * u * q_t;
        }
    }
    throw StateError("unreachable projection mode");
}

}  // namespace precondiag
