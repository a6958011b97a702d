#pragma once

#include <cstdint>
#include <optional>

#include "precondiag/matrix.hpp"

namespace precondiag {

enum class ProjectionMode {
    Identity,  // no basis; diagonalized optimizers collapse to their base rule
    OneSided,  // rotate by the factor on the smaller dimension only
    TwoSided,  // rotate by both factors
};

// Refresh policy: recompute the basis at t = 1 and whenever (t-1) mod period_t
// is zero (1-based steps, so a basis always exists).
struct ProjectionPolicy {
    std::int64_t period_t = 200;
    ProjectionMode mode = ProjectionMode::Identity;
};

// Cached orthogonal basis. OneSided stores exactly one factor, the one on the
// smaller dimension; TwoSided stores both; Identity stores none.
struct ProjectionState {
    std::optional<Matrix> p;    // m x m left factor
    std::optional<Matrix> q_t;  // n x n right factor, stored as Q^T
    std::int64_t refreshed_at_step = 0;
};

// Returns a refreshed state (factors from full_svd(g), refreshed_at_step = t)
// when the policy says so, the input state otherwise. Identity mode never
// refreshes.
ProjectionState maybe_refresh(const ProjectionState& state, const ProjectionPolicy& policy,
                              std::int64_t t, const Matrix& g);

// TwoSided: P^T g Q. OneSided: P^T g when rows <= cols, g Q otherwise.
// Identity: g unchanged.
Matrix project(const Matrix& g, const ProjectionState& state, ProjectionMode mode);

// Inverse rotation: P u Q^T / P u / u Q^T / u, mirroring project.
Matrix project_back(const Matrix& u, const ProjectionState& state, ProjectionMode mode);

}  // namespace precondiag
