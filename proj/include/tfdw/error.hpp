#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

namespace tfdw {

enum class ErrorKind {
    structural,
    solvability,
    degenerate_state,
    non_convergence,
    descent_failure,
    positivity_loss,
    range,
    stability,
    continuation_stop,
    infeasible,
    linear_solver,
    divergence,
    config,
    io,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::structural: return "structural";
        case ErrorKind::solvability: return "solvability";
        case ErrorKind::degenerate_state: return "degenerate_state";
        case ErrorKind::non_convergence: return "non_convergence";
        case ErrorKind::descent_failure: return "descent_failure";
        case ErrorKind::positivity_loss: return "positivity_loss";
        case ErrorKind::range: return "range";
        case ErrorKind::stability: return "stability";
        case ErrorKind::continuation_stop: return "continuation_stop";
        case ErrorKind::infeasible: return "infeasible";
        case ErrorKind::linear_solver: return "linear_solver";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::config: return "config";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

/// Library-wide exception. `payload` carries machine-readable diagnostics
/// (residual histories, offending values) that the CLI forwards verbatim.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, nlohmann::json payload = nlohmann::json::object())
        : std::runtime_error(message), kind_(kind), payload_(std::move(payload)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const nlohmann::json& payload() const noexcept { return payload_; }

    nlohmann::json to_json() const {
        return {{"error", std::string(to_string(kind_))}, {"message", what()}, {"details", payload_}};
    }

private:
    ErrorKind kind_;
    nlohmann::json payload_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message,
                              nlohmann::json payload = nlohmann::json::object()) {
    throw Error(kind, message, std::move(payload));
}

}  // namespace tfdw
