#pragma once

#include <stdexcept>
#include <string>

namespace evscale {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
    ok = 0,
    runtime = 1,
    config = 2,
    infeasible = 3,
    non_convergence = 4,
};

/// Base error carrying the module that raised it and the exit code it maps to.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& message, ExitCode code = ExitCode::runtime)
        : std::runtime_error(message), module_(std::move(module)), code_(code) {}

    [[nodiscard]] const std::string& module() const noexcept { return module_; }
    [[nodiscard]] ExitCode code() const noexcept { return code_; }

private:
    std::string module_;
    ExitCode code_;
};

class ConfigError : public Error {
public:
    ConfigError(std::string module, const std::string& message)
        : Error(std::move(module), message, ExitCode::config) {}
};

/// A calibration level outside the achievable interval (0, L^a).
class InfeasibleTarget : public Error {
public:
    InfeasibleTarget(const std::string& message, double level, double max_fraction)
        : Error("calibration", message, ExitCode::infeasible),
          level_(level),
          max_fraction_(max_fraction) {}

    [[nodiscard]] double level() const noexcept { return level_; }
    [[nodiscard]] double max_fraction() const noexcept { return max_fraction_; }

private:
    double level_;
    double max_fraction_;
};

class NonConvergence : public Error {
public:
    NonConvergence(std::string module, const std::string& message)
        : Error(std::move(module), message, ExitCode::non_convergence) {}
};

/// pi_hat(A|L) = 0 for a subject in the intervened arm.
class PositivityError : public Error {
public:
    explicit PositivityError(const std::string& message) : Error("weights", message) {}
};

}  // namespace evscale
