#include "precondiag/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "precondiag/diagnostics.hpp"
#include "precondiag/errors.hpp"

namespace precondiag {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------- config ---

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

std::int64_t parse_i64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::int64_t v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' needs an integer, got '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' needs a non-negative integer, got '" + value + "'");
    }
}

double parse_f64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' needs a number, got '" + value + "'");
    }
}

bool parse_flag(const std::string& key, const std::string& value) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    throw ConfigError("key '" + key + "' needs on/off, got '" + value + "'");
}

std::vector<Index> parse_index_list(const std::string& key, const std::string& value) {
    std::vector<Index> out;
    std::stringstream ss(value);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(static_cast<Index>(parse_i64(key, trim(cell))));
    if (out.empty()) throw ConfigError("key '" + key + "' needs a comma-separated list");
    return out;
}

ProjectionMode parse_mode(const std::string& value) {
    if (value == "identity") return ProjectionMode::Identity;
    if (value == "one_sided") return ProjectionMode::OneSided;
    if (value == "two_sided") return ProjectionMode::TwoSided;
    throw ConfigError("key 'projection' needs identity/one_sided/two_sided, got '" + value + "'");
}

std::string mode_name(ProjectionMode mode) {
    switch (mode) {
        case ProjectionMode::Identity: return "identity";
        case ProjectionMode::OneSided: return "one_sided";
        case ProjectionMode::TwoSided: return "two_sided";
    }
    return "unknown";
}

ProjectionMode natural_mode(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::AdaDiag:
        case OptimizerKind::AdafacDiag:
        case OptimizerKind::HfacDiag: return ProjectionMode::OneSided;
        case OptimizerKind::AdaDiagTwoSided: return ProjectionMode::TwoSided;
        default: return ProjectionMode::Identity;
    }
}

bool is_factored(OptimizerKind kind) {
    return kind == OptimizerKind::Adafactor || kind == OptimizerKind::AdafacDiag;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + " is not key=value: '" + line +
                              "'");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    RunConfig cfg;
    auto take = [&kv](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };

    auto required = [&take](const std::string& key) {
        auto v = take(key);
        if (!v) throw ConfigError("missing required key '" + key + "'");
        return *v;
    };

    cfg.problem = required("problem");
    if (cfg.problem != "quadratic" && cfg.problem != "matfac" && cfg.problem != "mlp")
        throw ConfigError("unknown problem '" + cfg.problem + "'");
    cfg.optimizer = optimizer_from_name(required("optimizer"));
    cfg.steps = parse_i64("steps", required("steps"));
    if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
    cfg.seed = parse_u64("seed", required("seed"));

    if (auto v = take("quad_m")) cfg.quad_m = parse_i64("quad_m", *v);
    if (auto v = take("quad_n")) cfg.quad_n = parse_i64("quad_n", *v);
    if (auto v = take("quad_cond")) cfg.quad_cond = parse_f64("quad_cond", *v);
    if (auto v = take("mf_m")) cfg.mf_m = parse_i64("mf_m", *v);
    if (auto v = take("mf_n")) cfg.mf_n = parse_i64("mf_n", *v);
    if (auto v = take("mf_rank")) cfg.mf_rank = parse_i64("mf_rank", *v);
    if (auto v = take("mf_noise")) cfg.mf_noise = parse_f64("mf_noise", *v);
    if (auto v = take("mlp_layers")) cfg.mlp_layers = parse_index_list("mlp_layers", *v);
    if (auto v = take("data_samples")) cfg.data_samples = parse_i64("data_samples", *v);
    if (auto v = take("data_spread")) cfg.data_spread = parse_f64("data_spread", *v);
    if (auto v = take("batch_size")) cfg.batch_size = parse_i64("batch_size", *v);
    if (auto v = take("data_csv")) cfg.data_csv = *v;
    if (auto v = take("data_has_header")) cfg.data_has_header = parse_flag("data_has_header", *v);
    if (auto v = take("standardize")) cfg.standardize = parse_flag("standardize", *v);

    if (auto v = take("lr")) cfg.lr = parse_f64("lr", *v);
    if (cfg.lr <= 0.0) throw ConfigError("lr must be positive");
    if (auto v = take("schedule")) cfg.schedule = *v;
    if (cfg.schedule != "constant" && cfg.schedule != "warmup_cosine")
        throw ConfigError("unknown schedule '" + cfg.schedule + "'");
    if (auto v = take("warmup_frac")) cfg.warmup_frac = parse_f64("warmup_frac", *v);
    if (auto v = take("final_frac")) cfg.final_frac = parse_f64("final_frac", *v);
    if (auto v = take("beta1")) cfg.beta1 = parse_f64("beta1", *v);
    if (auto v = take("beta2")) cfg.beta2 = parse_f64("beta2", *v);
    for (double b : {cfg.beta1, cfg.beta2})
        if (b < 0.0 || b >= 1.0) throw ConfigError("beta coefficients must be in [0, 1)");
    if (auto v = take("eps")) cfg.eps = parse_f64("eps", *v);
    if (auto v = take("eps_factored")) cfg.eps_factored = parse_f64("eps_factored", *v);
    if (cfg.eps <= 0.0 || cfg.eps_factored <= 0.0) throw ConfigError("eps values must be positive");
    if (auto v = take("weight_decay")) cfg.weight_decay = parse_f64("weight_decay", *v);
    if (cfg.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (auto v = take("clip_threshold")) cfg.clip_threshold = parse_f64("clip_threshold", *v);
    if (cfg.clip_threshold <= 0.0) throw ConfigError("clip_threshold must be positive");

    if (auto v = take("T")) {
        cfg.period = parse_i64("T", *v);
        if (cfg.period < 1) throw ConfigError("period T must be >= 1");
    } else {
        cfg.period = cfg.problem == "mlp" ? 500 : 200;
    }

    const ProjectionMode natural = natural_mode(cfg.optimizer);
    if (auto v = take("projection")) {
        cfg.projection_mode = parse_mode(*v);
        if (cfg.projection_mode != natural && cfg.projection_mode != ProjectionMode::Identity)
            throw ConfigError("optimizer '" + optimizer_name(cfg.optimizer) +
                              "' cannot use projection '" + mode_name(cfg.projection_mode) + "'");
    } else {
        cfg.projection_mode = natural;
    }

    if (auto v = take("momentum")) {
        cfg.momentum = parse_flag("momentum", *v);
        if (cfg.momentum && !is_factored(cfg.optimizer))
            throw ConfigError("key 'momentum' applies to adafactor/adafacdiag only");
    }

    if (auto v = take("metrics_every")) {
        cfg.metrics_every = parse_i64("metrics_every", *v);
        if (cfg.metrics_every < 1) throw ConfigError("metrics_every must be >= 1");
    }
    if (auto v = take("hamiltonian")) cfg.hamiltonian = parse_flag("hamiltonian", *v);
    if (auto v = take("cov_stats")) cfg.cov_stats = parse_flag("cov_stats", *v);
    if (auto v = take("cov_layer_cap")) cfg.cov_layer_cap = parse_i64("cov_layer_cap", *v);
    if (auto v = take("timing")) cfg.timing = parse_flag("timing", *v);
    if (auto v = take("threshold")) {
        if (*v != "none") cfg.threshold = parse_f64("threshold", *v);
    }
    if (auto v = take("out")) cfg.out = *v;

    if (!kv.empty()) throw ConfigError("unknown key '" + kv.begin()->first + "'");
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ------------------------------------------------------------- train loop ---

namespace {

std::unique_ptr<Objective> build_objective(const RunConfig& cfg) {
    const std::uint64_t seed = seed_fanout(cfg.seed, 0, "problem");
    if (cfg.problem == "quadratic")
        return make_quadratic(seed, cfg.quad_m, cfg.quad_n, cfg.quad_cond);
    if (cfg.problem == "matfac")
        return make_matfac(seed, cfg.mf_m, cfg.mf_n, cfg.mf_rank, cfg.mf_noise);
    Dataset data = cfg.data_csv.empty()
                       ? make_blobs(seed, cfg.data_samples, cfg.mlp_layers.front(),
                                    cfg.mlp_layers.back(), cfg.data_spread)
                       : load_csv_dataset(cfg.data_csv, cfg.data_has_header);
    if (cfg.standardize) data = standardize_features(std::move(data));
    return make_mlp(cfg.seed, cfg.mlp_layers, std::move(data), cfg.batch_size);
}

using AnyState = std::variant<FullMomentState, FactoredMomentState, HfacState>;

struct ParamSlot {
    Matrix w;
    AnyState state;
    Hyperparams hp;  // per-slot: 1-d parameters fall back to identity projection
};

Hyperparams base_hyperparams(const RunConfig& cfg) {
    Hyperparams h;
    h.lr = cfg.schedule == "constant"
               ? Schedule::constant(cfg.lr)
               : Schedule::warmup_cosine(cfg.lr, cfg.steps, cfg.warmup_frac, cfg.final_frac);
    h.beta1 = cfg.beta1;
    h.beta2 = cfg.beta2;
    h.eps_adam = cfg.eps;
    h.eps_factored = cfg.eps_factored;
    h.weight_decay = cfg.weight_decay;
    h.clip_threshold = cfg.clip_threshold;
    h.projection = {cfg.period, cfg.projection_mode};
    return h;
}

AnyState make_state(OptimizerKind kind, Index rows, Index cols, bool momentum) {
    switch (kind) {
        case OptimizerKind::AdamW:
        case OptimizerKind::AdaDiag:
        case OptimizerKind::AdaDiagTwoSided: return make_full_state(rows, cols);
        case OptimizerKind::Adafactor:
        case OptimizerKind::AdafacDiag: return make_factored_state(rows, cols, momentum);
        case OptimizerKind::Hfac:
        case OptimizerKind::HfacDiag: return make_hfac_state(rows, cols);
    }
    throw ConfigError("unknown optimizer kind");
}

void step_slot(OptimizerKind kind, ParamSlot& slot, const Matrix& g, bool momentum) {
    switch (kind) {
        case OptimizerKind::AdamW: {
            auto r = step_adamw(slot.w, g, std::get<FullMomentState>(slot.state), slot.hp);
            slot.w = std::move(r.w);
            slot.state = std::move(r.state);
            return;
        }
        case OptimizerKind::AdaDiag: {
            auto r = step_adadiag(slot.w, g, std::get<FullMomentState>(slot.state), slot.hp);
            slot.w = std::move(r.w);
            slot.state = std::move(r.state);
            return;
        }
        case OptimizerKind::AdaDiagTwoSided: {
            auto r = step_adadiag_two_sided(slot.w, g, std::get<FullMomentState>(slot.state),
                                            slot.hp);
            slot.w = std::move(r.w);
            slot.state = std::move(r.state);
            return;
        }
        case OptimizerKind::Adafactor: {
            auto r = step_adafactor(slot.w, g, std::get<FactoredMomentState>(slot.state), slot.hp,
                                    momentum);
            slot.w = std::move(r.w);
            slot.state = std::move(r.state);
            return;
        }
        case OptimizerKind::AdafacDiag: {
            auto r = step_adafacdiag(slot.w, g, std::get<FactoredMomentState>(slot.state), slot.hp,
                                     momentum);
            slot.w = std::move(r.w);
            slot.state = std::move(r.state);
            return;
        }
        case OptimizerKind::Hfac: {
            auto r = step_hfac(slot.w, g, std::get<HfacState>(slot.state), slot.hp);
            slot.w = std::move(r.w);
            slot.state = std::move(r.state);
            return;
        }
        case OptimizerKind::HfacDiag: {
            auto r = step_hfacdiag(slot.w, g, std::get<HfacState>(slot.state), slot.hp);
            slot.w = std::move(r.w);
            slot.state = std::move(r.state);
            return;
        }
    }
}

ProjectionState& slot_projection(ParamSlot& slot) {
    return std::visit([](auto& s) -> ProjectionState& { return s.proj; }, slot.state);
}

double slot_kinetic(const RunConfig& cfg, const ParamSlot& slot) {
    if (const auto* full = std::get_if<FullMomentState>(&slot.state))
        return hamiltonian_value(0.0, *full, cfg.eps).kinetic;
    if (const auto* fac = std::get_if<FactoredMomentState>(&slot.state))
        return adafactor_hamiltonian_value(0.0, *fac).kinetic;
    return hfac_hamiltonian_value(0.0, std::get<HfacState>(slot.state)).kinetic;
}

int configured_threads() {
    const char* raw = std::getenv("PRECOND_DIAG_THREADS");
    if (!raw) return 1;
    const int n = std::atoi(raw);
    return n > 1 ? n : 1;
}

// Steps disjoint parameters concurrently; each slot's math is independent, so
// results match the single-threaded run bit for bit.
void step_all(const RunConfig& cfg, std::vector<ParamSlot>& slots,
              const std::vector<Matrix>& grads, int threads) {
    const auto n = slots.size();
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) step_slot(cfg.optimizer, slots[i], grads[i], cfg.momentum);
        return;
    }
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    const auto width = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    for (std::size_t tid = 0; tid < width; ++tid) {
        pool.emplace_back([&, tid]() {
            try {
                for (std::size_t i = tid; i < n; i += width)
                    step_slot(cfg.optimizer, slots[i], grads[i], cfg.momentum);
            } catch (...) {
                failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

struct StepView {
    std::int64_t t = 0;
    double loss = 0.0;
    const std::vector<Matrix>* grads = nullptr;
    std::vector<ParamSlot>* slots = nullptr;
};

TrainResult train_impl(const RunConfig& cfg,
                       const std::function<void(const StepView&)>& hook) {
    const auto start = Clock::now();
    auto objective = build_objective(cfg);
    std::vector<Matrix> params = objective->initial_params(seed_fanout(cfg.seed, 0, "init"));

    const Hyperparams base = base_hyperparams(cfg);
    std::vector<ParamSlot> slots;
    slots.reserve(params.size());
    for (auto& w : params) {
        ParamSlot slot;
        slot.hp = base;
        if (std::min(w.rows(), w.cols()) <= 1) slot.hp.projection.mode = ProjectionMode::Identity;
        slot.state = make_state(cfg.optimizer, w.rows(), w.cols(), cfg.momentum);
        slot.w = std::move(w);
        slots.push_back(std::move(slot));
    }

    // First parameter small enough for covariance statistics, matrices first.
    std::ptrdiff_t cov_slot = -1;
    if (cfg.cov_stats) {
        for (std::size_t i = 0; i < slots.size() && cov_slot < 0; ++i)
            if (slots[i].w.size() <= cfg.cov_layer_cap && std::min(slots[i].w.rows(), slots[i].w.cols()) > 1)
                cov_slot = static_cast<std::ptrdiff_t>(i);
        for (std::size_t i = 0; i < slots.size() && cov_slot < 0; ++i)
            if (slots[i].w.size() <= cfg.cov_layer_cap) cov_slot = static_cast<std::ptrdiff_t>(i);
    }

    const int threads = configured_threads();
    TrainResult result;
    std::vector<Matrix> current(slots.size());

    for (std::int64_t t = 1; t <= cfg.steps; ++t) {
        try {
            for (std::size_t i = 0; i < slots.size(); ++i) current[i] = slots[i].w;
            LossGrads lg = objective->loss_and_grads(current, t);
            if (!std::isfinite(lg.loss)) throw NumericError("non-finite loss", t);
            for (const auto& g : lg.grads)
                if (!all_finite(g)) throw NumericError("non-finite gradient", t);

            // Hoisted basis refresh so SVD time can be reported separately;
            // the step itself sees the already-refreshed state.
            if (cfg.projection_mode != ProjectionMode::Identity &&
                (t - 1) % cfg.period == 0) {
                const auto refresh_start = Clock::now();
                for (std::size_t i = 0; i < slots.size(); ++i) {
                    auto& proj = slot_projection(slots[i]);
                    proj = maybe_refresh(proj, slots[i].hp.projection, t, lg.grads[i]);
                }
                result.refresh_wall_ms += ms_since(refresh_start);
            }

            step_all(cfg, slots, lg.grads, threads);

            result.final_loss = lg.loss;
            result.steps_completed = t;
            if (cfg.threshold && result.steps_to_threshold < 0 && lg.loss <= *cfg.threshold)
                result.steps_to_threshold = t;

            if (t % cfg.metrics_every == 0 || t == cfg.steps) {
                MetricsRow row;
                row.step = t;
                row.loss = lg.loss;
                double grad_sq = 0.0, update_sq = 0.0;
                for (std::size_t i = 0; i < slots.size(); ++i) {
                    grad_sq += lg.grads[i].squaredNorm();
                    update_sq += (slots[i].w - current[i]).squaredNorm();
                }
                row.grad_norm = std::sqrt(grad_sq);
                row.update_norm = std::sqrt(update_sq);
                if (cfg.hamiltonian) {
                    double kinetic = 0.0;
                    for (const auto& slot : slots) kinetic += slot_kinetic(cfg, slot);
                    row.hamiltonian_total = lg.loss + kinetic;
                }
                if (cov_slot >= 0) {
                    const auto i = static_cast<std::size_t>(cov_slot);
                    row.diag_ratio_orig = cov_offdiag_ratio(lg.grads[i]);
                    row.diag_ratio_proj = cov_offdiag_ratio(project(
                        lg.grads[i], slot_projection(slots[i]), slots[i].hp.projection.mode));
                }
                row.wall_ms = ms_since(start);
                result.rows.push_back(std::move(row));
            }

            if (hook) {
                StepView view;
                view.t = t;
                view.loss = lg.loss;
                view.grads = &lg.grads;
                view.slots = &slots;
                hook(view);
            }
        } catch (const NumericError& e) {
            result.numeric_failure = true;
            result.failed_step = e.step() >= 0 ? e.step() : t;
            result.failure_message = e.what();
            break;
        }
    }
    result.total_wall_ms = ms_since(start);
    return result;
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricsRow>& rows, bool timing) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << "step,loss,grad_norm,update_norm,hamiltonian_total,diag_ratio_orig,diag_ratio_proj";
    if (timing) out << ",wall_ms";
    out << "\n";
    for (const auto& r : rows) {
        out << r.step << ',' << fmt(r.loss) << ',' << fmt(r.grad_norm) << ','
            << fmt(r.update_norm) << ',';
        if (r.hamiltonian_total) out << fmt(*r.hamiltonian_total);
        out << ',';
        if (r.diag_ratio_orig) out << fmt(*r.diag_ratio_orig);
        out << ',';
        if (r.diag_ratio_proj) out << fmt(*r.diag_ratio_proj);
        if (timing) out << ',' << fmt(r.wall_ms);
        out << "\n";
    }
}

void write_summary(const fs::path& path, const RunConfig& cfg, const TrainResult& r) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << "status: " << (r.numeric_failure ? "numeric_failure" : "ok") << "\n";
    if (r.numeric_failure) {
        out << "failed_step: " << r.failed_step << "\n";
        out << "failure: " << r.failure_message << "\n";
    }
    out << "optimizer: " << optimizer_name(cfg.optimizer) << "\n";
    out << "projection: " << mode_name(cfg.projection_mode) << "\n";
    out << "steps_completed: " << r.steps_completed << "\n";
    out << "final_loss: " << fmt(r.final_loss) << "\n";
    if (cfg.threshold) {
        out << "threshold: " << fmt(*cfg.threshold) << "\n";
        out << "steps_to_threshold: ";
        if (r.steps_to_threshold >= 0)
            out << r.steps_to_threshold << "\n";
        else
            out << "not_reached\n";
    }
    out << "total_wall_ms: " << fmt(r.total_wall_ms) << "\n";
    out << "refresh_wall_ms: " << fmt(r.refresh_wall_ms) << "\n";
    out << "step_wall_ms: " << fmt(r.total_wall_ms - r.refresh_wall_ms) << "\n";
    const double pct = r.total_wall_ms > 0.0 ? 100.0 * r.refresh_wall_ms / r.total_wall_ms : 0.0;
    out << "refresh_overhead_pct: " << fmt(pct) << "\n";
}

fs::path prepare_out_dir(const RunConfig& cfg, const std::string& out_override) {
    fs::path dir = out_override.empty() ? cfg.out : out_override;
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TrainResult train(const RunConfig& cfg) { return train_impl(cfg, nullptr); }

TrainResult run_train(const RunConfig& cfg, const std::string& out_override) {
    const fs::path dir = prepare_out_dir(cfg, out_override);
    TrainResult result = train(cfg);
    write_metrics_csv(dir / "metrics.csv", result.rows, cfg.timing);
    write_summary(dir / "summary.txt", cfg, result);
    return result;
}

// ---------------------------------------------------------------- compare ---

namespace {

std::string problem_signature(const RunConfig& c) {
    std::ostringstream sig;
    sig << c.problem << '|' << c.seed << '|' << c.steps << '|';
    if (c.problem == "quadratic") sig << c.quad_m << 'x' << c.quad_n << '@' << c.quad_cond;
    if (c.problem == "matfac")
        sig << c.mf_m << 'x' << c.mf_n << 'r' << c.mf_rank << 'n' << c.mf_noise;
    if (c.problem == "mlp") {
        for (auto l : c.mlp_layers) sig << l << '-';
        sig << '|' << c.data_samples << '|' << c.data_spread << '|' << c.batch_size << '|'
            << c.data_csv << '|' << c.standardize;
    }
    return sig.str();
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

CompareResult run_compare(const std::vector<RunConfig>& configs, double threshold, int n_seeds,
                          const std::string& out_override) {
    if (configs.size() < 2) throw ConfigError("compare needs at least two configs");
    if (n_seeds < 1) throw ConfigError("compare needs at least one seed");
    const std::string signature = problem_signature(configs.front());
    for (const auto& c : configs)
        if (problem_signature(c) != signature)
            throw ConfigError("compare configs must share the same problem, seed and steps");

    CompareResult result;
    for (const auto& base : configs) {
        std::vector<double> finals;
        std::vector<double> to_threshold;
        for (int i = 0; i < n_seeds; ++i) {
            RunConfig cfg = base;
            cfg.seed = base.seed + static_cast<std::uint64_t>(i);
            cfg.threshold = threshold;
            const TrainResult r = train(cfg);
            finals.push_back(r.final_loss);
            to_threshold.push_back(r.steps_to_threshold >= 0
                                       ? static_cast<double>(r.steps_to_threshold)
                                       : std::numeric_limits<double>::infinity());
        }
        CompareRow row;
        row.label = optimizer_name(base.optimizer) + "/" + mode_name(base.projection_mode);
        row.median_final_loss = median_of(finals);
        const double med_steps = median_of(to_threshold);
        row.median_steps_to_threshold =
            std::isfinite(med_steps) ? static_cast<std::int64_t>(std::llround(med_steps)) : -1;
        result.rows.push_back(std::move(row));
    }

    std::ostringstream table;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %-22s %s\n", "config", "median_final_loss",
                  "median_steps_to_threshold");
    table << buf;
    for (const auto& row : result.rows) {
        const std::string steps_text =
            row.median_steps_to_threshold >= 0 ? std::to_string(row.median_steps_to_threshold)
                                               : "not_reached";
        std::snprintf(buf, sizeof buf, "%-24s %-22.10g %s\n", row.label.c_str(),
                      row.median_final_loss, steps_text.c_str());
        table << buf;
    }
    result.table = table.str();

    const fs::path dir = prepare_out_dir(configs.front(), out_override);
    std::ofstream csv(dir / "compare.csv");
    csv << "config,median_final_loss,median_steps_to_threshold\n";
    for (const auto& row : result.rows) {
        csv << row.label << ',' << fmt(row.median_final_loss) << ',';
        if (row.median_steps_to_threshold >= 0)
            csv << row.median_steps_to_threshold << "\n";
        else
            csv << "not_reached\n";
    }
    return result;
}

// --------------------------------------------------------------- diagnose ---

namespace {

std::string histogram_svg(const Histogram& h, const std::string& title) {
    const int width = 800, height = 400, margin = 48;
    std::int64_t max_count = 1;
    for (auto c : h.counts) max_count = std::max(max_count, c);
    const auto n = static_cast<int>(h.counts.size());
    const double plot_w = width - 2.0 * margin;
    const double plot_h = height - 2.0 * margin;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
        << title << "</text>\n";
    for (int b = 0; b < n; ++b) {
        const double frac = static_cast<double>(h.counts[b]) / static_cast<double>(max_count);
        const double bar_h = frac * plot_h;
        const double x = margin + plot_w * b / n;
        const double y = height - margin - bar_h;
        svg << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\""
            << fmt(plot_w / n - 1.0) << "\" height=\"" << fmt(bar_h)
            << "\" fill=\"steelblue\"/>\n";
    }
    svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
        << width - margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << margin << "\" y=\"" << height - margin + 18
        << "\" font-size=\"11\">" << fmt(h.edges.front()) << "</text>\n";
    svg << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 18
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(h.edges.back()) << "</text>\n";
    svg << "<text x=\"" << margin << "\" y=\"" << margin - 8 << "\" font-size=\"11\">max count "
        << max_count << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

void write_histogram_files(const fs::path& dir, const std::string& stem, const CovStats& stats) {
    std::ofstream csv(dir / (stem + ".csv"));
    csv << "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < stats.histogram.counts.size(); ++b)
        csv << fmt(stats.histogram.edges[b]) << ',' << fmt(stats.histogram.edges[b + 1]) << ','
            << stats.histogram.counts[b] << "\n";
    std::ofstream svg(dir / (stem + ".svg"));
    svg << histogram_svg(stats.histogram,
                         stem + "  (offdiag_ratio " + fmt(stats.offdiag_ratio) + ")");
}

}  // namespace

TrainResult run_diagnose(const RunConfig& config, const std::string& out_override) {
    RunConfig cfg = config;
    cfg.hamiltonian = true;

    // Every emitted histogram enumerates (mn)^2 pairs, so eligibility is
    // bounded by both the layer cap and the covariance element cap.
    auto objective = build_objective(cfg);
    std::vector<std::size_t> eligible;
    const auto shapes = objective->param_shapes();
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const std::int64_t mn = shapes[i].first * shapes[i].second;
        if (mn <= cfg.cov_layer_cap && std::min(shapes[i].first, shapes[i].second) > 1)
            eligible.push_back(i);
    }
    if (eligible.empty())
        throw ConfigError("no eligible layer: every parameter exceeds cov_layer_cap " +
                          std::to_string(cfg.cov_layer_cap));

    const fs::path dir = prepare_out_dir(cfg, out_override);
    std::vector<HamiltonianSample> hamiltonians;

    auto hook = [&](const StepView& view) {
        double kinetic = 0.0;
        for (const auto& slot : *view.slots) kinetic += slot_kinetic(cfg, slot);
        hamiltonians.push_back({view.t, view.loss, kinetic, view.loss + kinetic});

        const std::int64_t phase = (view.t - 1) % cfg.period;
        const bool at_refresh = phase == 0;
        const bool at_midpoint = cfg.period >= 2 && phase == cfg.period / 2;
        if (!at_refresh && !at_midpoint) return;
        for (std::size_t i : eligible) {
            const Matrix& g = (*view.grads)[i];
            auto& slot = (*view.slots)[i];
            const CovStats orig =
                cov_offdiag_stats(g, std::int64_t{1} << 22,
                                  seed_fanout(cfg.seed, i, "cov_orig"));
            const CovStats proj = cov_offdiag_stats(
                project(g, slot_projection(slot), slot.hp.projection.mode),
                std::int64_t{1} << 22, seed_fanout(cfg.seed, i, "cov_proj"));
            const std::string tag = std::to_string(view.t) + "_" + std::to_string(i);
            write_histogram_files(dir, "hist_" + tag + "_orig", orig);
            write_histogram_files(dir, "hist_" + tag + "_proj", proj);
        }
    };

    TrainResult result = train_impl(cfg, hook);
    write_metrics_csv(dir / "metrics.csv", result.rows, cfg.timing);
    write_summary(dir / "summary.txt", cfg, result);

    std::ofstream report(dir / "descent_report.txt");
    if (hamiltonians.size() >= 2) {
        const DescentReport d = hamiltonian_descent_report(hamiltonians, 1e-12);
        report << "transitions: " << d.n_transitions << "\n";
        report << "fraction_non_increasing: " << fmt(d.fraction_non_increasing) << "\n";
        report << "max_increase: " << fmt(d.max_increase) << "\n";
    } else {
        report << "transitions: 0\n";
    }
    return result;
}

// --------------------------------------------------------------- memcheck ---

std::string run_memcheck(const std::string& out_dir) {
    struct Row {
        OptimizerKind kind;
        bool momentum;
        const char* momentum_label;
    };
    const Row entries[] = {
        {OptimizerKind::AdamW, false, "-"},
        {OptimizerKind::AdaDiag, false, "-"},
        {OptimizerKind::AdaDiagTwoSided, false, "-"},
        {OptimizerKind::Adafactor, true, "with"},
        {OptimizerKind::Adafactor, false, "without"},
        {OptimizerKind::AdafacDiag, true, "with"},
        {OptimizerKind::AdafacDiag, false, "without"},
        {OptimizerKind::Hfac, false, "-"},
        {OptimizerKind::HfacDiag, false, "-"},
    };
    const std::pair<std::int64_t, std::int64_t> shapes[] = {{4, 8}, {64, 64}, {256, 1024}};

    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %-10s %12s %12s %12s\n", "optimizer", "momentum",
                  "4x8", "64x64", "256x1024");
    out << buf;
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%-12s %-10s", optimizer_name(e.kind).c_str(),
                      e.momentum_label);
        out << buf;
        for (const auto& [m, n] : shapes) {
            std::snprintf(buf, sizeof buf, " %12lld",
                          static_cast<long long>(state_element_count(e.kind, m, n, e.momentum)));
            out << buf;
        }
        out << "\n";
    }
    out << "\nnote: adafactor without momentum stores only the factored vectors, m+n scalars"
           " (often tabulated as mn).\n";
    out << "note: adafacdiag with momentum carries a full momentum matrix,"
           " min(m,n)^2+mn+m+n scalars (often tabulated as m^2+m+n).\n";

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream csv(fs::path(out_dir) / "memcheck.csv");
        csv << "optimizer,momentum,m,n,state_elements\n";
        for (const auto& e : entries)
            for (const auto& [m, n] : shapes)
                csv << optimizer_name(e.kind) << ',' << e.momentum_label << ',' << m << ',' << n
                    << ',' << state_element_count(e.kind, m, n, e.momentum) << "\n";
    }
    return out.str();
}

}  // namespace precondiag
