#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tripod {

/// Malformed user input: bad parameters, too few samples, unreadable CSV.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Configuration file or command-line override problem.
class ConfigError : public InputError {
public:
    using InputError::InputError;
};

/// The adaptive integrator could not meet its tolerance.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, int site)
        : std::runtime_error(what), site_(site) {}

    int site() const noexcept { return site_; }

private:
    int site_;
};

/// The self-consistent field iteration hit its iteration cap.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : std::runtime_error(what), history_(std::move(history)) {}

    const std::vector<double>& residual_history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// A least-squares fit that did not converge; carries the last iterate.
class FitFailure : public std::runtime_error {
public:
    FitFailure(const std::string& what, std::vector<double> last)
        : std::runtime_error(what), last_(std::move(last)) {}

    const std::vector<double>& last_iterate() const noexcept { return last_; }

private:
    std::vector<double> last_;
};

} // namespace tripod
