#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "precondiag/optimizers.hpp"
#include "precondiag/problems.hpp"

namespace precondiag {

// Fully materialized run configuration; parse_config fills every default so
// two runs of the same text are identical.
struct RunConfig {
    // problem
    std::string problem;  // quadratic | matfac | mlp
    Index quad_m = 8, quad_n = 8;
    double quad_cond = 100.0;
    Index mf_m = 32, mf_n = 32, mf_rank = 4;
    double mf_noise = 0.0;
    std::vector<Index> mlp_layers = {16, 32, 3};
    Index data_samples = 512;
    double data_spread = 3.0;
    Index batch_size = 32;
    std::string data_csv;  // empty = seeded synthetic blobs
    bool data_has_header = false;
    bool standardize = false;

    // optimizer
    OptimizerKind optimizer = OptimizerKind::AdamW;
    bool momentum = false;  // adafactor / adafacdiag only
    double lr = 1e-3;
    std::string schedule = "constant";  // constant | warmup_cosine
    double warmup_frac = 0.1, final_frac = 0.1;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double eps_factored = 1e-30;
    double weight_decay = 0.0;
    double clip_threshold = 1.0;
    std::int64_t period = 0;  // T; 0 in the raw text means "use the problem default"
    ProjectionMode projection_mode = ProjectionMode::Identity;

    // run
    std::int64_t steps = 0;
    std::uint64_t seed = 0;
    std::int64_t metrics_every = 1;
    bool hamiltonian = false;
    bool cov_stats = false;
    std::int64_t cov_layer_cap = 1024;
    bool timing = false;  // adds the wall_ms column (breaks byte-identical reruns)
    std::optional<double> threshold;
    std::string out = "out";
};

// Flat key=value text, '#' comments. Throws ConfigError naming the key on
// unknown keys, bad values, or missing required keys (problem, optimizer,
// steps, seed).
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

struct MetricsRow {
    std::int64_t step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;    // Frobenius over all parameters
    double update_norm = 0.0;  // Frobenius norm of the applied weight change
    std::optional<double> hamiltonian_total;
    std::optional<double> diag_ratio_orig;
    std::optional<double> diag_ratio_proj;
    double wall_ms = 0.0;  // elapsed since run start when the row was taken
};

struct TrainResult {
    std::vector<MetricsRow> rows;
    double final_loss = 0.0;
    std::int64_t steps_completed = 0;
    std::int64_t steps_to_threshold = -1;  // -1 = not reached or no threshold
    double total_wall_ms = 0.0;
    double refresh_wall_ms = 0.0;  // time inside basis refresh (SVD)
    bool numeric_failure = false;
    std::int64_t failed_step = -1;
    std::string failure_message;
};

// Training loop only, no files. Honors PRECOND_DIAG_THREADS for stepping
// disjoint parameters concurrently.
TrainResult train(const RunConfig& config);

// train() plus metrics.csv and summary.txt under the output directory
// (config.out unless overridden).
TrainResult run_train(const RunConfig& config, const std::string& out_override = "");

struct CompareRow {
    std::string label;  // optimizer/projection
    double median_final_loss = 0.0;
    std::int64_t median_steps_to_threshold = -1;  // -1 = not reached
};

struct CompareResult {
    std::vector<CompareRow> rows;
    std::string table;  // aligned text rendering
};

// Runs every config over n_seeds seeds (base seed, base+1, ...) and tabulates
// medians. All configs must share the problem, seed, and step budget.
CompareResult run_compare(const std::vector<RunConfig>& configs, double threshold,
                          int n_seeds, const std::string& out_override = "");

// Emits off-diagonal covariance histograms (CSV + SVG) for original and
// projected gradients at every refresh step and period midpoint, for each
// layer within the element cap, plus the Hamiltonian descent report.
TrainResult run_diagnose(const RunConfig& config, const std::string& out_override = "");

// State-size table over a fixed shape grid, with notes on the two
// often-mistabulated factored rows. Writes memcheck.csv when out is nonempty.
std::string run_memcheck(const std::string& out_dir = "");

}  // namespace precondiag
