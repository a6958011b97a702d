#include <CLI11.hpp>
#include <iostream>
#include <vector>

#include "precondiag/errors.hpp"
#include "precondiag/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

int dispatch(const std::string& command, const std::vector<std::string>& config_paths,
             double threshold, int seeds, const std::string& out) {
    using namespace precondiag;
    if (command == "memcheck") {
        std::cout << run_memcheck(out);
        return kExitOk;
    }
    if (command == "train") {
        const TrainResult r = run_train(load_config_file(config_paths.at(0)), out);
        if (r.numeric_failure) {
            std::cerr << "numeric failure: " << r.failure_message << "\n";
            return kExitNumeric;
        }
        std::cout << "final_loss " << r.final_loss << " after " << r.steps_completed
                  << " steps\n";
        return kExitOk;
    }
    if (command == "compare") {
        std::vector<RunConfig> configs;
        for (const auto& path : config_paths) configs.push_back(load_config_file(path));
        const CompareResult r = run_compare(configs, threshold, seeds, out);
        std::cout << r.table;
        return kExitOk;
    }
    // diagnose
    const TrainResult r = run_diagnose(load_config_file(config_paths.at(0)), out);
    if (r.numeric_failure) {
        std::cerr << "numeric failure: " << r.failure_message << "\n";
        return kExitNumeric;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"preconditioner-diagonalization optimizer harness"};
    app.require_subcommand(1);

    std::string train_config, diagnose_config, out;
    std::vector<std::string> compare_configs;
    double threshold = 0.0;
    int seeds = 1;

    auto* train = app.add_subcommand("train", "run one training config");
    train->add_option("config", train_config, "key=value config file")->required();
    train->add_option("--out", out, "output directory override");

    auto* compare = app.add_subcommand("compare", "run several configs and tabulate medians");
    compare->add_option("configs", compare_configs, "two or more config files")
        ->required()
        ->expected(-2);
    compare->add_option("--threshold", threshold, "loss threshold for steps-to-threshold")
        ->required();
    compare->add_option("--seeds", seeds, "seeds per config (base seed, base+1, ...)");
    compare->add_option("--out", out, "output directory override");

    auto* diagnose = app.add_subcommand("diagnose", "emit covariance histograms and descent report");
    diagnose->add_option("config", diagnose_config, "key=value config file")->required();
    diagnose->add_option("--out", out, "output directory override");

    auto* memcheck = app.add_subcommand("memcheck", "print the optimizer state-size table");
    memcheck->add_option("--out", out, "also write memcheck.csv here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (train->parsed()) return dispatch("train", {train_config}, 0, 0, out);
        if (compare->parsed()) return dispatch("compare", compare_configs, threshold, seeds, out);
        if (diagnose->parsed()) return dispatch("diagnose", {diagnose_config}, 0, 0, out);
        return dispatch("memcheck", {}, 0, 0, out);
    } catch (const precondiag::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
