#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace jmsim {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (dimension mismatch, bad bandwidth, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// A model or run configuration is incomplete or inconsistent.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
    explicit ConfigError(const std::string& what) : ConfigError("", what) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A trajectory produced a non-finite state.
class SimulationError : public Error {
public:
    SimulationError(std::size_t trajectory, const std::string& what)
        : Error("trajectory " + std::to_string(trajectory) + ": " + what), trajectory_(trajectory) {}

    std::size_t trajectory() const noexcept { return trajectory_; }

private:
    std::size_t trajectory_;
};

/// A conditional pdf window contains no simulated mass.
class DegenerateWindow : public Error {
public:
    DegenerateWindow(double lo, double hi, const std::string& what)
        : Error(what + " on window [" + std::to_string(lo) + ", " + std::to_string(hi) + ")"),
          lo_(lo), hi_(hi) {}

    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }

    // Set by the mean-likelihood driver when it knows which cell failed.
    std::size_t cell = static_cast<std::size_t>(-1);

private:
    double lo_;
    double hi_;
};

/// Input data failed validation; carries one diagnostic per offending row.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> diagnostics)
        : Error(join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

    const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

private:
    static std::string join(const std::vector<std::string>& lines) {
        std::string out;
        for (const auto& l : lines) {
            if (!out.empty()) out += '\n';
            out += l;
        }
        return out.empty() ? std::string("validation failed") : out;
    }

    std::vector<std::string> diagnostics_;
};

/// The optimizer never reached a finite objective value.
class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, std::vector<double> trace)
        : Error(what), trace_(std::move(trace)) {}

    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace jmsim
