#pragma once

#include <stdexcept>
#include <string>

namespace squidmech {

/// Failure categories. Each one maps onto a distinct process exit code in the CLI.
enum class ErrorKind {
    usage = 2,
    config = 3,
    invalid_parameter = 4,
    solver = 5,
    postselection = 6,
    planner = 7,
    io = 8,
    comparison = 9,
    schema = 10,
};

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::config: return "config";
    case ErrorKind::invalid_parameter: return "invalid_parameter";
    case ErrorKind::solver: return "solver";
    case ErrorKind::postselection: return "postselection";
    case ErrorKind::planner: return "planner";
    case ErrorKind::io: return "io";
    case ErrorKind::comparison: return "comparison";
    case ErrorKind::schema: return "schema";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& message)
        : Error(ErrorKind::invalid_parameter, message) {}
};

class SolverError : public Error {
public:
    SolverError(const std::string& message, double time)
        : Error(ErrorKind::solver, message + " (t = " + std::to_string(time) + " s)"), time_(time) {}

    double time() const noexcept { return time_; }

private:
    double time_;
};

class PostselectionError : public Error {
public:
    explicit PostselectionError(const std::string& message)
        : Error(ErrorKind::postselection, message) {}
};

class PlannerError : public Error {
public:
    PlannerError(const std::string& message, double best_residual)
        : Error(ErrorKind::planner, message + " (best residual " + std::to_string(best_residual) + ")"),
          best_residual_(best_residual) {}

    double best_residual() const noexcept { return best_residual_; }

private:
    double best_residual_;
};

} // namespace squidmech
