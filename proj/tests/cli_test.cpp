#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "test_util.hpp"

// End-to-end checks of the installed command-line surface. The binary path
// arrives via PRECONDIAG_CLI (set by ctest).

namespace {

std::string cli_path() {
    const char* path = std::getenv("PRECONDIAG_CLI");
    REQUIRE_MESSAGE(path != nullptr, "PRECONDIAG_CLI must point at the binary");
    return path;
}

int run_cli(const std::string& args, const std::filesystem::path& capture) {
    const std::string cmd = cli_path() + " " + args + " >" + capture.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_config(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

}  // namespace

TEST_CASE("cli train writes metrics and reruns byte-identically") {
    test_util::TempDir dir("cli_train");
    const auto cfg = dir.path() / "run.cfg";
    write_config(cfg,
                 "problem=matfac\noptimizer=adadiag\nsteps=30\nseed=3\n"
                 "mf_m=8\nmf_n=6\nmf_rank=2\nT=10\nlr=0.02\n");

    const auto out_a = dir.path() / "a";
    const auto out_b = dir.path() / "b";
    CHECK(run_cli("train " + cfg.string() + " --out " + out_a.string(),
                  dir.path() / "log_a.txt") == 0);
    CHECK(run_cli("train " + cfg.string() + " --out " + out_b.string(),
                  dir.path() / "log_b.txt") == 0);
    CHECK(std::filesystem::exists(out_a / "metrics.csv"));
    CHECK(std::filesystem::exists(out_a / "summary.txt"));
    CHECK(slurp(out_a / "metrics.csv") == slurp(out_b / "metrics.csv"));
    CHECK(slurp(dir.path() / "log_a.txt").find("final_loss") != std::string::npos);
}

TEST_CASE("cli exit codes") {
    test_util::TempDir dir("cli_exit");

    SUBCASE("config errors exit 1") {
        const auto bad = dir.path() / "bad.cfg";
        write_config(bad, "problem=matfac\noptimizer=adamx\nsteps=5\nseed=1\n");
        CHECK(run_cli("train " + bad.string(), dir.path() / "log.txt") == 1);
        CHECK(slurp(dir.path() / "log.txt").find("unknown optimizer") != std::string::npos);
    }

    SUBCASE("missing config file exits 1") {
        CHECK(run_cli("train " + (dir.path() / "nope.cfg").string(),
                      dir.path() / "log.txt") == 1);
    }

    SUBCASE("numeric failure exits 2") {
        const auto cfg = dir.path() / "blowup.cfg";
        write_config(cfg,
                     "problem=matfac\noptimizer=adamw\nsteps=2000\nseed=5\nmf_m=4\nmf_n=4\n"
                     "mf_rank=1\nlr=1.0\nweight_decay=10\n");
        CHECK(run_cli("train " + cfg.string() + " --out " + (dir.path() / "out").string(),
                      dir.path() / "log.txt") == 2);
    }
}

TEST_CASE("cli compare tabulates both configs") {
    test_util::TempDir dir("cli_cmp");
    const auto a = dir.path() / "a.cfg";
    const auto b = dir.path() / "b.cfg";
    write_config(a,
                 "problem=matfac\noptimizer=adamw\nsteps=40\nseed=6\n"
                 "mf_m=6\nmf_n=6\nmf_rank=2\nlr=0.05\n");
    write_config(b,
                 "problem=matfac\noptimizer=adadiag\nprojection=identity\nsteps=40\nseed=6\n"
                 "mf_m=6\nmf_n=6\nmf_rank=2\nlr=0.05\n");
    CHECK(run_cli("compare " + a.string() + " " + b.string() + " --threshold 1e-2 --seeds 2" +
                      " --out " + (dir.path() / "out").string(),
                  dir.path() / "log.txt") == 0);
    const std::string log = slurp(dir.path() / "log.txt");
    CHECK(log.find("adamw/identity") != std::string::npos);
    CHECK(log.find("adadiag/identity") != std::string::npos);
    CHECK(std::filesystem::exists(dir.path() / "out" / "compare.csv"));
}

TEST_CASE("cli diagnose emits histogram files") {
    test_util::TempDir dir("cli_diag");
    const auto cfg = dir.path() / "d.cfg";
    write_config(cfg,
                 "problem=mlp\noptimizer=adadiag\nsteps=6\nseed=8\nmlp_layers=4,6,3\n"
                 "data_samples=24\nbatch_size=8\nT=4\nlr=0.01\n");
    CHECK(run_cli("diagnose " + cfg.string() + " --out " + (dir.path() / "out").string(),
                  dir.path() / "log.txt") == 0);
    CHECK(std::filesystem::exists(dir.path() / "out" / "hist_1_0_orig.svg"));
    CHECK(std::filesystem::exists(dir.path() / "out" / "descent_report.txt"));
}

TEST_CASE("cli memcheck prints the table") {
    test_util::TempDir dir("cli_mem");
    CHECK(run_cli("memcheck", dir.path() / "log.txt") == 0);
    const std::string log = slurp(dir.path() / "log.txt");
    CHECK(log.find("adadiag++") != std::string::npos);
    CHECK(log.find("12288") != std::string::npos);
}

TEST_CASE("cli respects PRECOND_DIAG_THREADS") {
    test_util::TempDir dir("cli_thr");
    const auto cfg = dir.path() / "run.cfg";
    write_config(cfg,
                 "problem=matfac\noptimizer=adadiag\nsteps=20\nseed=4\n"
                 "mf_m=8\nmf_n=6\nmf_rank=2\nT=5\nlr=0.02\n");
    CHECK(run_cli("train " + cfg.string() + " --out " + (dir.path() / "serial").string(),
                  dir.path() / "log1.txt") == 0);
    ::setenv("PRECOND_DIAG_THREADS", "2", 1);
    const int code = run_cli("train " + cfg.string() + " --out " + (dir.path() / "par").string(),
                             dir.path() / "log2.txt");
    ::unsetenv("PRECOND_DIAG_THREADS");
    CHECK(code == 0);
    CHECK(slurp(dir.path() / "serial" / "metrics.csv") ==
          slurp(dir.path() / "par" / "metrics.csv"));
}
