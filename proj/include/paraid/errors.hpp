#pragma once

#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace paraid {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed expression text. `offset` is the byte offset of the failure.
class ParseError : public Error {
public:
    ParseError(std::string message, std::size_t offset)
        : Error(message + " at offset " + std::to_string(offset))
        , offset_(offset)
        , reason_(std::move(message)) {}

    std::size_t offset() const noexcept { return offset_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t offset_;
    std::string reason_;
};

/// Division by zero, domain error, non-finite intermediate, or a variable
/// that the problem dimension does not provide.
class EvalError : public Error {
public:
    using Error::Error;
};

/// A tabulated field evaluated outside the range it covers.
class CoverageError : public Error {
public:
    using Error::Error;
};

/// One failed admissibility check on a problem.
struct Violation {
    std::string condition;  // "ellipticity", "non_tangency", "compatibility_psi", ...
    std::string location;   // e.g. "j=1", "boundary node 3, t=0"
    double magnitude = 0.0;
    std::string message;
};

/// Bad configuration: schema problems, failed ellipticity/non-tangency/compatibility.
/// Carries every violation found, not only the first.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<Violation> violations)
        : Error(summarize(violations))
        , violations_(std::move(violations)) {}

    explicit ValidationError(const std::string& message)
        : ValidationError(std::vector<Violation>{{"config", "", 0.0, message}}) {}

    const std::vector<Violation>& violations() const noexcept { return violations_; }

private:
    static std::string summarize(const std::vector<Violation>& v) {
        std::string out = std::to_string(v.size()) + " validation failure(s)";
        for (const auto& x : v) {
            out += "\n  - " + x.condition;
            if (!x.location.empty()) out += " [" + x.location + "]";
            out += ": " + x.message;
        }
        return out;
    }

    std::vector<Violation> violations_;
};

/// Linear solve failure in the time stepper.
class SolverError : public Error {
public:
    SolverError(const std::string& message, std::size_t level)
        : Error(message + " (time level " + std::to_string(level) + ")")
        , level_(level) {}

    std::size_t level() const noexcept { return level_; }

private:
    std::size_t level_;
};

/// The solvability matrix is (numerically) singular at some time level.
class DegenerateMatrixError : public Error {
public:
    DegenerateMatrixError(std::size_t level, double det, double floor)
        : Error("solvability matrix degenerate at time level " + std::to_string(level) + ": |det| = " + sci(det) +
                " below floor " + sci(floor))
        , level_(level)
        , det_(det) {}

    std::size_t level() const noexcept { return level_; }
    double det() const noexcept { return det_; }

private:
    static std::string sci(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", v);
        return buf;
    }

public:

private:
    std::size_t level_;
    double det_;
};

/// Fixed-point iteration failed. `diverged()` distinguishes growth from a
/// plain iteration-budget exhaustion; the increment history is kept either way.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& message, std::vector<double> increments, bool diverged)
        : Error(message)
        , increments_(std::move(increments))
        , diverged_(diverged) {}

    const std::vector<double>& increments() const noexcept { return increments_; }
    bool diverged() const noexcept { return diverged_; }

private:
    std::vector<double> increments_;
    bool diverged_;
};

/// File system problems (unreadable input, unwritable output directory).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace paraid
