#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "precondiag/matrix.hpp"
#include "precondiag/projection.hpp"

namespace precondiag {

enum class OptimizerKind {
    AdamW,
    AdaDiag,          // one-sided rotation of the Adam rule
    AdaDiagTwoSided,  // "adadiag++", both-sided rotation
    Adafactor,
    AdafacDiag,
    Hfac,
    HfacDiag,
};

// Parses "adamw", "adadiag", "adadiag++", "adafactor", "adafacdiag", "hfac",
// "hfacdiag". Unknown names throw ConfigError.
OptimizerKind optimizer_from_name(std::string_view name);
std::string optimizer_name(OptimizerKind kind);

// Learning-rate schedule: constant, or linear warmup into cosine decay that
// ends at final_frac of the peak.
struct Schedule {
    enum class Kind { Constant, WarmupCosine };

    Kind kind = Kind::Constant;
    double peak = 1e-3;
    double warmup_frac = 0.1;
    double final_frac = 0.1;
    std::int64_t total_steps = 0;  // required for WarmupCosine

    double at(std::int64_t t) const;

    static Schedule constant(double lr) { return {Kind::Constant, lr, 0.0, 1.0, 0}; }
    static Schedule warmup_cosine(double peak, std::int64_t total_steps, double warmup_frac = 0.1,
                                  double final_frac = 0.1) {
        return {Kind::WarmupCosine, peak, warmup_frac, final_frac, total_steps};
    }
};

struct Hyperparams {
    Schedule lr = Schedule::constant(1e-3);
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;       // added to sqrt(V) in the full-moment denominators
    double eps_factored = 1e-30;  // added to squared gradients before factored accumulation
    double weight_decay = 0.0;
    double clip_threshold = 1.0;  // RMS clip bound d
    ProjectionPolicy projection;
};

// Decay-embedded bias correction: beta_hat_t = beta (1 - beta^(t-1)) / (1 - beta^t).
// The resulting EMA equals the classic EMA divided by (1 - beta^t).
double bias_corrected_beta(double beta, std::int64_t t);

// State for AdamW / AdaDiag / AdaDiag++. m and v live in the projected space
// and always have the parameter's shape.
struct FullMomentState {
    Matrix m;
    Matrix v;
    std::int64_t t = 0;
    ProjectionState proj;
};

// State for Adafactor / AdafacDiag. r and s hold the factored second moment;
// m is present only when momentum is enabled.
struct FactoredMomentState {
    std::optional<Matrix> m;
    Vector r;
    Vector s;
    std::int64_t t = 0;
    ProjectionState proj;
};

// State for Hfac / HfacDiag: rank-1 factored first and second moments.
struct HfacState {
    Vector u;
    Vector v_vec;
    Vector r;
    Vector s;
    std::int64_t t = 0;
    ProjectionState proj;
};

FullMomentState make_full_state(Index rows, Index cols);
FactoredMomentState make_factored_state(Index rows, Index cols, bool with_momentum);
HfacState make_hfac_state(Index rows, Index cols);

double rms(const Matrix& u);

// clip(U) = U / max(1, RMS(U) / d): identity when RMS(U) <= d, else rescales
// so the result has RMS exactly d.
Matrix clip_by_rms(const Matrix& u, double d);

struct FullStepResult {
    Matrix w;
    FullMomentState state;
};
struct FactoredStepResult {
    Matrix w;
    FactoredMomentState state;
};
struct HfacStepResult {
    Matrix w;
    HfacState state;
};

// One optimizer step: refresh basis, project gradient, update moments, update
// weights, in that order. Each function validates the projection mode its
// rule supports and throws NumericError (with the step index) if the update
// goes non-finite.
FullStepResult step_adamw(const Matrix& w, const Matrix& g, const FullMomentState& state,
                          const Hyperparams& h);
FullStepResult step_adadiag(const Matrix& w, const Matrix& g, const FullMomentState& state,
                            const Hyperparams& h);
FullStepResult step_adadiag_two_sided(const Matrix& w, const Matrix& g,
                                      const FullMomentState& state, const Hyperparams& h);
FactoredStepResult step_adafactor(const Matrix& w, const Matrix& g,
                                  const FactoredMomentState& state, const Hyperparams& h,
                                  bool with_momentum);
FactoredStepResult step_adafacdiag(const Matrix& w, const Matrix& g,
                                   const FactoredMomentState& state, const Hyperparams& h,
                                   bool with_momentum);
HfacStepResult step_hfac(const Matrix& w, const Matrix& g, const HfacState& state,
                         const Hyperparams& h);
HfacStepResult step_hfacdiag(const Matrix& w, const Matrix& g, const HfacState& state,
                             const Hyperparams& h);

// Number of persistent state scalars for an m x n parameter. One-sided
// variants count the projector on the smaller dimension (min(m,n)^2), so the
// usual m <= n formulas hold verbatim in that orientation. Step counters and
// hyperparameters are excluded.
std::int64_t state_element_count(OptimizerKind kind, std::int64_t m, std::int64_t n,
                                 bool with_momentum);

}  // namespace precondiag
