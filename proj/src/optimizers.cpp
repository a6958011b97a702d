#include "precondiag/optimizers.hpp"

#include <algorithm>
#include <cmath>

#include "precondiag/errors.hpp"

namespace precondiag {

OptimizerKind optimizer_from_name(std::string_view name) {
    if (name == "adamw") return OptimizerKind::AdamW;
    if (name == "adadiag") return OptimizerKind::AdaDiag;
    if (name == "adadiag++") return OptimizerKind::AdaDiagTwoSided;
    if (name == "adafactor") return OptimizerKind::Adafactor;
    if (name == "adafacdiag") return OptimizerKind::AdafacDiag;
    if (name == "hfac") return OptimizerKind::Hfac;
    if (name == "hfacdiag") return OptimizerKind::HfacDiag;
    throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::string optimizer_name(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::AdamW: return "adamw";
        case OptimizerKind::AdaDiag: return "adadiag";
        case OptimizerKind::AdaDiagTwoSided: return "adadiag++";
        case OptimizerKind::Adafactor: return "adafactor";
        case OptimizerKind::AdafacDiag: return "adafacdiag";
        case OptimizerKind::Hfac: return "hfac";
        case OptimizerKind::HfacDiag: return "hfacdiag";
    }
    return "unknown";
}

double Schedule::at(std::int64_t t) const {
    if (t < 1) throw StateError("schedule queried at step < 1");
    if (kind == Kind::Constant) return peak;
    if (total_steps < 1) throw ConfigError("warmup_cosine schedule needs total_steps >= 1");
    const auto warmup = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(warmup_frac * static_cast<double>(total_steps))));
    if (t <= warmup) return peak * static_cast<double>(t) / static_cast<double>(warmup);
    const double floor_lr = final_frac * peak;
    if (t >= total_steps || total_steps == warmup) return floor_lr;
    const double progress =
        static_cast<double>(t - warmup) / static_cast<double>(total_steps - warmup);
    return floor_lr + (peak - floor_lr) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

double bias_corrected_beta(double beta, std::int64_t t) {
    if (t < 1) throw StateError("bias_corrected_beta requires t >= 1");
    if (t == 1) return 0.0;  // 1 - beta^0 = 0, so the first moment is the raw gradient
    return beta * (1.0 - std::pow(beta, static_cast<double>(t - 1))) /
           (1.0 - std::pow(beta, static_cast<double>(t)));
}

FullMomentState make_full_state(Index rows, Index cols) {
    FullMomentState s;
    s.m = Matrix::Zero(rows, cols);
    s.v = Matrix::Zero(rows, cols);
    return s;
}

FactoredMomentState make_factored_state(Index rows, Index cols, bool with_momentum) {
    FactoredMomentState s;
    if (with_momentum) s.m = Matrix::Zero(rows, cols);
    s.r = Vector::Zero(rows);
    s.s = Vector::Zero(cols);
    return s;
}

HfacState make_hfac_state(Index rows, Index cols) {
    HfacState s;
    s.u = Vector::Zero(rows);
    s.v_vec = Vector::Zero(cols);
    s.r = Vector::Zero(rows);
    s.s = Vector::Zero(cols);
    return s;
}

double rms(const Matrix& u) {
    if (u.size() == 0) return 0.0;
    return std::sqrt(u.squaredNorm() / static_cast<double>(u.size()));
}

Matrix clip_by_rms(const Matrix& u, double d) {
    if (d <= 0.0) throw ConfigError("clip threshold must be positive");
    return u / std::max(1.0, rms(u) / d);
}

namespace {

void check_step_shapes(const Matrix& w, const Matrix& g) {
    if (w.rows() != g.rows() || w.cols() != g.cols())
        throw ShapeError("weight and gradient shapes differ");
}

ProjectionMode resolve_mode(const Hyperparams& h, ProjectionMode natural, const char* rule) {
    const ProjectionMode mode = h.projection.mode;
    if (mode != natural && mode != ProjectionMode::Identity)
        throw ConfigError(std::string(rule) + " does not support the configured projection mode");
    return mode;
}

ProjectionPolicy policy_with(const Hyperparams& h, ProjectionMode mode) {
    return {h.projection.period_t, mode};
}

// Shared body of AdamW / AdaDiag / AdaDiag++: only the rotation differs.
FullStepResult full_moment_step(const Matrix& w, const Matrix& g, const FullMomentState& state,
                                const Hyperparams& h, ProjectionMode mode) {
    check_step_shapes(w, g);
    const std::int64_t t = state.t + 1;
    ProjectionState proj = maybe_refresh(state.proj, policy_with(h, mode), t, g);
    const Matrix gt = project(g, proj, mode);
    if (state.m.rows() != gt.rows() || state.m.cols() != gt.cols())
        throw ShapeError("moment shape does not match the projected gradient");

    const double b1 = bias_corrected_beta(h.beta1, t);
    const double b2 = bias_corrected_beta(h.beta2, t);
    FullMomentState next;
    next.m = b1 * state.m + (1.0 - b1) * gt;
    next.v = b2 * state.v + (1.0 - b2) * gt.array().square().matrix();
    next.t = t;
    next.proj = std::move(proj);

    const Matrix direction =
        (next.m.array() / (next.v.array().sqrt() + h.eps_adam)).matrix();
    const Matrix update = project_back(direction, next.proj, mode);
    Matrix w_next = w - h.lr.at(t) * (update + h.weight_decay * w);
    if (!all_finite(w_next) || !all_finite(next.m) || !all_finite(next.v))
        throw NumericError("non-finite optimizer update", t);
    return {std::move(w_next), std::move(next)};
}

FactoredStepResult factored_step(const Matrix& w, const Matrix& g,
                                 const FactoredMomentState& state, const Hyperparams& h,
                                 ProjectionMode mode, bool with_momentum) {
    check_step_shapes(w, g);
    const std::int64_t t = state.t + 1;
    ProjectionState proj = maybe_refresh(state.proj, policy_with(h, mode), t, g);
    const Matrix gt = project(g, proj, mode);
    if (state.r.size() != gt.rows() || state.s.size() != gt.cols())
        throw ShapeError("factored accumulators do not match the projected gradient");
    if (with_momentum != state.m.has_value())
        throw StateError("momentum flag does not match the optimizer state");

    const double b1 = bias_corrected_beta(h.beta1, t);
    const double b2 = bias_corrected_beta(h.beta2, t);
    const Eigen::ArrayXXd sq = gt.array().square() + h.eps_factored;

    FactoredMomentState next;
    next.r = b2 * state.r + (1.0 - b2) * sq.rowwise().sum().matrix();
    next.s = b2 * state.s + (1.0 - b2) * sq.colwise().sum().transpose().matrix();
    next.t = t;

    const Matrix v_hat = next.r * next.s.transpose() / next.r.sum();
    const Matrix normalized = (gt.array() / v_hat.array().sqrt()).matrix();
    const Matrix clipped = clip_by_rms(normalized, h.clip_threshold);

    Matrix inner;
    if (with_momentum) {
        next.m = b1 * (*state.m) + (1.0 - b1) * clipped;
        inner = *next.m;
    } else {
        inner = clipped;
    }
    const Matrix update = project_back(inner, proj, mode);
    next.proj = std::move(proj);
    Matrix w_next = w - h.lr.at(t) * (update + h.weight_decay * w);
    if (!all_finite(w_next) || !all_finite(next.r) || !all_finite(next.s))
        throw NumericError("non-finite optimizer update", t);
    return {std::move(w_next), std::move(next)};
}

HfacStepResult hfac_step(const Matrix& w, const Matrix& g, const HfacState& state,
                         const Hyperparams& h, ProjectionMode mode) {
    check_step_shapes(w, g);
    const std::int64_t t = state.t + 1;
    ProjectionState proj = maybe_refresh(state.proj, policy_with(h, mode), t, g);
    const Matrix gt = project(g, proj, mode);
    const Index rows = gt.rows(), cols = gt.cols();
    if (state.u.size() != rows || state.v_vec.size() != cols)
        throw ShapeError("hfac accumulators do not match the projected gradient");

    const double b1 = bias_corrected_beta(h.beta1, t);
    const double b2 = bias_corrected_beta(h.beta2, t);
    const Eigen::ArrayXXd sq = gt.array().square() + h.eps_factored;
    const Vector row_mean = gt.rowwise().mean();
    const Vector col_mean = gt.colwise().mean().transpose();

    HfacState next;
    next.u = b1 * state.u + (1.0 - b1) * row_mean;
    next.v_vec = b1 * state.v_vec + (1.0 - b1) * col_mean;
    next.r = b2 * state.r + (1.0 - b2) * sq.rowwise().sum().matrix();
    next.s = b2 * state.s + (1.0 - b2) * sq.colwise().sum().transpose().matrix();
    next.t = t;

    const Matrix v_hat = next.r * next.s.transpose() / next.r.sum();
    // phi varies along rows only, psi along columns only; both broadcast to m x n.
    const Eigen::ArrayXd phi_col =
        b1 * (next.u - row_mean).array() / (next.r.array() / static_cast<double>(cols)).sqrt();
    const Eigen::ArrayXd psi_row =
        b1 * (next.v_vec - col_mean).array() / (next.s.array() / static_cast<double>(rows)).sqrt();
    Matrix inner = 0.5 * (phi_col.matrix() * Eigen::RowVectorXd::Ones(cols) +
                          Vector::Ones(rows) * psi_row.matrix().transpose());
    inner += clip_by_rms((gt.array() / v_hat.array().sqrt()).matrix(), h.clip_threshold);

    const Matrix update = project_back(inner, proj, mode);
    next.proj = std::move(proj);
    Matrix w_next = w - h.lr.at(t) * (update + h.weight_decay * w);
    if (!all_finite(w_next) || !all_finite(next.u) || !all_finite(next.v_vec) ||
        !all_finite(next.r) || !all_finite(next.s))
        throw NumericError("non-finite optimizer update", t);
    return {std::move(w_next), std::move(next)};
}

}  // namespace

FullStepResult step_adamw(const Matrix& w, const Matrix& g, const FullMomentState& state,
                          const Hyperparams& h) {
    return full_moment_step(w, g, state, h, ProjectionMode::Identity);
}

FullStepResult step_adadiag(const Matrix& w, const Matrix& g, const FullMomentState& state,
                            const Hyperparams& h) {
    return full_moment_step(w, g, state, h, resolve_mode(h, ProjectionMode::OneSided, "adadiag"));
}

FullStepResult step_adadiag_two_sided(const Matrix& w, const Matrix& g,
                                      const FullMomentState& state, const Hyperparams& h) {
    return full_moment_step(w, g, state, h,
                            resolve_mode(h, ProjectionMode::TwoSided, "adadiag++"));
}

FactoredStepResult step_adafactor(const Matrix& w, const Matrix& g,
                                  const FactoredMomentState& state, const Hyperparams& h,
                                  bool with_momentum) {
    return factored_step(w, g, state, h, ProjectionMode::Identity, with_momentum);
}

FactoredStepResult step_adafacdiag(const Matrix& w, const Matrix& g,
                                   const FactoredMomentState& state, const Hyperparams& h,
                                   bool with_momentum) {
    return factored_step(w, g, state, h, resolve_mode(h, ProjectionMode::OneSided, "adafacdiag"),
                         with_momentum);
}

HfacStepResult step_hfac(const Matrix& w, const Matrix& g, const HfacState& state,
                         const Hyperparams& h) {
    return hfac_step(w, g, state, h, ProjectionMode::Identity);
}

HfacStepResult step_hfacdiag(const Matrix& w, const Matrix& g, const HfacState& state,
                             const Hyperparams& h) {
    return hfac_step(w, g, state, h, resolve_mode(h, ProjectionMode::OneSided, "hfacdiag"));
}

std::int64_t state_element_count(OptimizerKind kind, std::int64_t m, std::int64_t n,
                                 bool with_momentum) {
    if (m < 1 || n < 1) throw ShapeError("state_element_count requires m, n >= 1");
    const std::int64_t small = std::min(m, n);
    const std::int64_t one_sided = small * small;
    const std::int64_t two_sided = m * m + n * n;
    switch (kind) {
        case OptimizerKind::AdamW: return 2 * m * n;
        case OptimizerKind::AdaDiag: return one_sided + 2 * m * n;
        case OptimizerKind::AdaDiagTwoSided: return two_sided + 2 * m * n;
        case OptimizerKind::Adafactor: return (with_momentum ? m * n : 0) + m + n;
        case OptimizerKind::AdafacDiag: return one_sided + (with_momentum ? m * n : 0) + m + n;
        case OptimizerKind::Hfac: return 2 * (m + n);
        case OptimizerKind::HfacDiag: return one_sided + 2 * (m + n);
    }
    throw ConfigError("unknown optimizer kind");
}

}  // namespace precondiag
