#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace precondiag {

// Malformed run configs, CLI arguments, unknown names. CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Matrix / state dimension mismatches.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// API misuse: missing projection factors, t = 0 step index, short trajectories.
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Positivity-domain violations (I-divergence inputs, negative second moments).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Dataset parsing and label validation failures.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values or failed decompositions. Carries the training step when
// one is known (-1 otherwise). CLI exit code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what, std::int64_t step = -1)
        : std::runtime_error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
          step_(step) {}

    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

}  // namespace precondiag
