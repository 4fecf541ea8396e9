#pragma once

#include "dalp/mdp.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace dalp {

struct TraceRow {
    std::size_t t = 0;
    /// l^T (mu0 + Phi theta_hat_t) for the running average theta_hat_t.
    double objective = 0.0;
    /// Violation of theta_hat_t (V1 + V2, or V3 + V4).
    double v_hat = 0.0;
    std::optional<double> eval_cost;
};

struct RunTrace {
    std::vector<TraceRow> rows;
    /// Running average theta_hat_T.
    std::vector<double> theta;
    Policy policy;
    /// Step size actually used at t = 1.
    double step_size = 0.0;
    std::size_t iterations = 0;
    /// theta_1 .. theta_T, only filled when requested.
    std::vector<std::vector<double>> iterates;
};

/// Called at recorded iterations with the policy of the running average.
using EvalHook = std::function<std::optional<double>(const Policy&, std::span<const double> theta)>;

/// Shared knobs of the stochastic subgradient loop.
struct SgdOptions {
    double penalty = 1.0;        // H
    double radius = 1.0;         // S
    std::size_t iterations = 1;  // T
    /// Fixed step size; unset selects the automatic rate S / (G sqrt(T)).
    std::optional<double> step_size;
    /// Halve the step every this many iterations (0 = constant).
    std::size_t halve_every = 0;
    std::size_t minibatch = 1;
    std::uint64_t seed = 0;
    /// Record every this many iterations; 0 selects max(1, T / 1000).
    std::size_t trace_stride = 0;
    /// Samples for the traced violation estimate; 0 evaluates it exactly.
    std::size_t trace_violation_samples = 0;
    bool keep_iterates = false;
};

}  // namespace dalp
