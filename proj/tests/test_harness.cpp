#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "precondiag/errors.hpp"
#include "precondiag/harness.hpp"
#include "test_util.hpp"

using namespace precondiag;
using test_util::TempDir;

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig quick_config(const std::string& extra = "") {
    return parse_config("problem=matfac\noptimizer=adadiag\nsteps=40\nseed=7\n"
                        "mf_m=8\nmf_n=6\nmf_rank=2\nT=10\nlr=0.02\n" +
                        extra);
}

}  // namespace

TEST_CASE("parse_config fills documented defaults") {
    const RunConfig cfg = parse_config("optimizer=adadiag\nproblem=matfac\nsteps=1000\nseed=7");
    CHECK(cfg.beta1 == 0.9);
    CHECK(cfg.beta2 == 0.999);
    CHECK(cfg.eps == 1e-8);
    CHECK(cfg.eps_factored == 1e-30);
    CHECK(cfg.clip_threshold == 1.0);
    CHECK(cfg.period == 200);  // non-vision default
    CHECK(cfg.projection_mode == ProjectionMode::OneSided);
    CHECK(cfg.metrics_every == 1);
    CHECK_FALSE(cfg.threshold.has_value());

    const RunConfig mlp = parse_config("optimizer=adamw\nproblem=mlp\nsteps=10\nseed=1");
    CHECK(mlp.period == 500);  // the image-classifier stand-in uses the larger T
}

TEST_CASE("parse_config rejections") {
    const std::string base = "problem=matfac\noptimizer=adamw\nsteps=10\nseed=1\n";

    try {
        parse_config("problem=matfac\noptimizer=adamx\nsteps=10\nseed=1");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("unknown optimizer 'adamx'") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_config(base + "T=0"), ConfigError);
    CHECK_THROWS_AS(parse_config(base + "frobnicate=1"), ConfigError);
    CHECK_THROWS_AS(parse_config("optimizer=adamw\nsteps=10\nseed=1"), ConfigError);  // no problem
    CHECK_THROWS_AS(parse_config(base + "steps=zero"), ConfigError);
    CHECK_THROWS_AS(parse_config(base + "projection=two_sided"), ConfigError);
    CHECK_THROWS_AS(parse_config(base + "momentum=on"), ConfigError);
    CHECK_THROWS_AS(parse_config(base + "beta1=1.0"), ConfigError);
    CHECK_THROWS_AS(parse_config("problem=warp\noptimizer=adamw\nsteps=1\nseed=1"), ConfigError);
}

TEST_CASE("parse_config accepts comments and overrides") {
    const RunConfig cfg = parse_config(
        "# a comment\n"
        "problem=quadratic   # trailing comment\n"
        "optimizer=adadiag++\n"
        "projection=identity\n"
        "steps=5\nseed=3\nlr=0.01\nschedule=warmup_cosine\nthreshold=1e-3\n");
    CHECK(cfg.optimizer == OptimizerKind::AdaDiagTwoSided);
    CHECK(cfg.projection_mode == ProjectionMode::Identity);
    CHECK(cfg.schedule == "warmup_cosine");
    CHECK(cfg.threshold == doctest::Approx(1e-3));
}

TEST_CASE("train is deterministic") {
    const RunConfig cfg = quick_config();
    const TrainResult a = train(cfg);
    const TrainResult b = train(cfg);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].loss == b.rows[i].loss);
        CHECK(a.rows[i].grad_norm == b.rows[i].grad_norm);
        CHECK(a.rows[i].update_norm == b.rows[i].update_norm);
    }
    CHECK(a.final_loss == b.final_loss);
}

TEST_CASE("run_train writes byte-identical metrics for identical configs") {
    TempDir dir("train");
    const RunConfig cfg = quick_config("metrics_every=3\n");
    run_train(cfg, (dir.path() / "a").string());
    run_train(cfg, (dir.path() / "b").string());
    CHECK(slurp(dir.path() / "a" / "metrics.csv") == slurp(dir.path() / "b" / "metrics.csv"));

    const std::string metrics = slurp(dir.path() / "a" / "metrics.csv");
    CHECK(metrics.substr(0, metrics.find('\n')) ==
          "step,loss,grad_norm,update_norm,hamiltonian_total,diag_ratio_orig,diag_ratio_proj");
    CHECK(slurp(dir.path() / "a" / "summary.txt").find("status: ok") != std::string::npos);
}

TEST_CASE("metrics respect metrics_every and always include the final step") {
    RunConfig cfg = quick_config("metrics_every=15\n");
    const TrainResult r = train(cfg);
    REQUIRE(r.rows.size() == 3);
    CHECK(r.rows[0].step == 15);
    CHECK(r.rows[1].step == 30);
    CHECK(r.rows[2].step == 40);
}

TEST_CASE("timing column is opt-in") {
    TempDir dir("timing");
    run_train(quick_config("timing=on\n"), (dir.path() / "t").string());
    CHECK(slurp(dir.path() / "t" / "metrics.csv").find("wall_ms") != std::string::npos);
    run_train(quick_config(), (dir.path() / "n").string());
    CHECK(slurp(dir.path() / "n" / "metrics.csv").find("wall_ms") == std::string::npos);
}

TEST_CASE("training descends on the convex quadratic") {
    const RunConfig cfg = parse_config(
        "problem=quadratic\noptimizer=adamw\nsteps=500\nseed=11\nlr=0.01\nquad_m=4\nquad_n=4");
    const TrainResult r = train(cfg);
    CHECK(r.rows.back().loss < r.rows.front().loss);
    CHECK(r.steps_completed == 500);
}

TEST_CASE("hamiltonian and covariance columns populate when enabled") {
    RunConfig cfg = quick_config("hamiltonian=on\ncov_stats=on\n");
    const TrainResult r = train(cfg);
    REQUIRE(!r.rows.empty());
    CHECK(r.rows.back().hamiltonian_total.has_value());
    CHECK(r.rows.back().diag_ratio_orig.has_value());
    CHECK(r.rows.back().diag_ratio_proj.has_value());
    CHECK(*r.rows.back().hamiltonian_total >= r.rows.back().loss);
}

TEST_CASE("identity projection reports identical covariance ratios") {
    RunConfig cfg = quick_config("cov_stats=on\nprojection=identity\n");
    const TrainResult r = train(cfg);
    for (const auto& row : r.rows) CHECK(*row.diag_ratio_orig == *row.diag_ratio_proj);
}

TEST_CASE("threshold tracking") {
    RunConfig cfg = quick_config("threshold=1e30\n");
    CHECK(train(cfg).steps_to_threshold == 1);  // any loss clears an absurd threshold
    cfg.threshold = -1.0;
    CHECK(train(cfg).steps_to_threshold == -1);  // unreachable
}

TEST_CASE("numeric blow-up aborts with the failing step recorded") {
    TempDir dir("blowup");
    const RunConfig cfg = parse_config(
        "problem=matfac\noptimizer=adamw\nsteps=2000\nseed=5\nmf_m=4\nmf_n=4\nmf_rank=1\n"
        "lr=1.0\nweight_decay=10\n");
    const TrainResult r = run_train(cfg, dir.path().string());
    CHECK(r.numeric_failure);
    CHECK(r.failed_step > 0);
    CHECK(r.failed_step <= 2000);
    const std::string summary = slurp(dir.path() / "summary.txt");
    CHECK(summary.find("status: numeric_failure") != std::string::npos);
    CHECK(summary.find("failed_step: " + std::to_string(r.failed_step)) != std::string::npos);
}

TEST_CASE("parallel parameter stepping matches the single-threaded run") {
    const RunConfig cfg = quick_config();
    const TrainResult serial = train(cfg);
    ::setenv("PRECOND_DIAG_THREADS", "3", 1);
    const TrainResult parallel = train(cfg);
    ::unsetenv("PRECOND_DIAG_THREADS");
    REQUIRE(serial.rows.size() == parallel.rows.size());
    for (std::size_t i = 0; i < serial.rows.size(); ++i) {
        CHECK(serial.rows[i].loss == parallel.rows[i].loss);
        CHECK(serial.rows[i].update_norm == parallel.rows[i].update_norm);
    }
}

TEST_CASE("compare equivalent configs produce identical rows") {
    TempDir dir("compare");
    RunConfig adamw = parse_config(
        "problem=matfac\noptimizer=adamw\nsteps=60\nseed=9\nmf_m=6\nmf_n=6\nmf_rank=2\nlr=0.05");
    RunConfig identity = parse_config(
        "problem=matfac\noptimizer=adadiag\nprojection=identity\nsteps=60\nseed=9\n"
        "mf_m=6\nmf_n=6\nmf_rank=2\nlr=0.05");
    const CompareResult r = run_compare({adamw, identity}, 1e-2, 3, dir.path().string());
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].median_final_loss == r.rows[1].median_final_loss);
    CHECK(r.rows[0].median_steps_to_threshold == r.rows[1].median_steps_to_threshold);
    CHECK(slurp(dir.path() / "compare.csv").find("adadiag/identity") != std::string::npos);
}

TEST_CASE("compare rejects mismatched problems and single configs") {
    const RunConfig a = quick_config();
    RunConfig b = a;
    b.mf_rank = 3;
    CHECK_THROWS_AS(run_compare({a, b}, 1e-3, 1), ConfigError);
    CHECK_THROWS_AS(run_compare({a}, 1e-3, 1), ConfigError);
}

TEST_CASE("unreachable thresholds tabulate as not reached") {
    TempDir dir("compare2");
    const RunConfig a = quick_config();
    RunConfig b = a;
    b.optimizer = OptimizerKind::AdamW;
    b.projection_mode = ProjectionMode::Identity;
    const CompareResult r = run_compare({a, b}, -1.0, 1, dir.path().string());
    for (const auto& row : r.rows) CHECK(row.median_steps_to_threshold == -1);
    CHECK(r.table.find("not_reached") != std::string::npos);
}

TEST_CASE("diagnose writes histograms at refresh and midpoint steps") {
    TempDir dir("diag");
    const RunConfig cfg = parse_config(
        "problem=mlp\noptimizer=adadiag++\nsteps=12\nseed=13\nmlp_layers=4,6,3\n"
        "data_samples=32\nbatch_size=8\nT=8\nlr=0.01");
    const TrainResult r = run_diagnose(cfg, dir.path().string());
    CHECK(r.steps_completed == 12);
    // refresh steps t=1 and t=9, midpoint t=5; layer 0 is the 4x6 weight
    for (const char* stem : {"hist_1_0_orig", "hist_1_0_proj", "hist_5_0_orig", "hist_9_0_proj"}) {
        CHECK(std::filesystem::exists(dir.path() / (std::string(stem) + ".csv")));
        CHECK(std::filesystem::exists(dir.path() / (std::string(stem) + ".svg")));
    }
    CHECK(std::filesystem::exists(dir.path() / "descent_report.txt"));
    const std::string hist = slurp(dir.path() / "hist_1_0_orig.csv");
    CHECK(hist.substr(0, 20) == "bin_lo,bin_hi,count\n");
}

TEST_CASE("diagnose with identity projection emits matching histograms") {
    TempDir dir("diag_id");
    const RunConfig cfg = parse_config(
        "problem=mlp\noptimizer=adadiag\nprojection=identity\nsteps=4\nseed=14\n"
        "mlp_layers=4,6,3\ndata_samples=24\nbatch_size=8\nT=4\nlr=0.01");
    run_diagnose(cfg, dir.path().string());
    CHECK(slurp(dir.path() / "hist_1_0_orig.csv") == slurp(dir.path() / "hist_1_0_proj.csv"));
}

TEST_CASE("diagnose refuses when every layer exceeds the cap") {
    RunConfig cfg = parse_config(
        "problem=quadratic\noptimizer=adadiag\nsteps=4\nseed=15\nquad_m=8\nquad_n=8\n"
        "cov_layer_cap=3");
    try {
        run_diagnose(cfg, "");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("no eligible layer") != std::string::npos);
    }
}

TEST_CASE("memcheck table") {
    TempDir dir("mem");
    const std::string table = run_memcheck(dir.path().string());
    CHECK(table.find("12288") != std::string::npos);   // adadiag 64x64
    CHECK(table.find("2560") != std::string::npos);    // hfac 256x1024
    CHECK(table.find("note: adafactor without momentum") != std::string::npos);
    CHECK(table.find("note: adafacdiag with momentum") != std::string::npos);
    const std::string csv = slurp(dir.path() / "memcheck.csv");
    CHECK(csv.find("adamw,-,4,8,64") != std::string::npos);
}
