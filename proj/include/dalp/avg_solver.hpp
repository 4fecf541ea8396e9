#pragma once

#include "dalp/features.hpp"
#include "dalp/grid.hpp"
#include "dalp/mdp.hpp"
#include "dalp/random.hpp"
#include "dalp/trace.hpp"

#include <optional>
#include <span>
#include <vector>

namespace dalp {

/// Configuration of one stochastic subgradient run on the average-cost surrogate.
struct AvgSolverConfig : SgdOptions {
    double epsilon = 0.1;
    double delta = 0.1;

    /// Throws ParameterError on H <= 0, S < 1/sqrt(d), T = 0 or an empty minibatch.
    void validate(std::size_t dim) const;
};

struct AvgViolations {
    double negativity = 0.0;  // V1 = ||[mu0 + Phi theta]_-||_1
    double stationarity = 0.0;  // V2 = ||(P - B)^T Phi theta||_1
    double total() const noexcept { return negativity + stationarity; }
};

/// Exact V1, V2 by enumeration (X*A within the exact capacity).
AvgViolations violations_exact(const MdpModel& model, const FeatureSpace& fs, std::span<const double> theta);

/// c(theta) = l^T (mu0 + Phi theta) + H (V1 + V2), by enumeration.
double surrogate_cost_exact(const MdpModel& model, const FeatureSpace& fs, double penalty,
                            std::span<const double> theta);

/// Subgradient estimate for fixed draws (x,a) ~ q_sa and x' ~ q_s:
///   l^T Phi - H Phi_(x,a),: / q_sa 1{mu0 + Phi theta < 0 at (x,a)}
///           + H (P - B)^T_{:,x'} Phi / q_s sgn((P - B)^T_{:,x'} Phi theta).
std::vector<double> subgradient_sample(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                                       double penalty, std::span<const double> theta, std::size_t pair,
                                       std::size_t state);

/// One random draw of the estimator above.
std::vector<double> subgradient_estimate(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                                         double penalty, std::span<const double> theta, Rng& rng);

/// Euclidean projection onto {theta : sum(theta) = sum_target, ||theta||_2 <= S}.
std::vector<double> project_theta_avg(std::span<const double> theta, double radius, double sum_target = 1.0);

/// Projected stochastic subgradient descent from theta_1 = 0; returns the running average.
RunTrace sgd_solve_avg(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                       const AvgSolverConfig& cfg, const EvalHook& eval_hook = {});

/// Importance-weighted estimate of V1 + V2 from n paired draws.
double estimate_violations(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                           std::span<const double> theta, std::size_t n, Rng& rng);

/// Single summand of the estimator for fixed draws.
double violation_summand(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                         std::span<const double> theta, std::size_t pair, std::size_t state);

/// S (C1 + 1) + S C2.
double violation_summand_bound(const SamplingPair& sp, double radius);

/// Hoeffding sample size (S(C1+1) + S C2)^2 / (2 eps^2) log(2 / delta).
std::size_t violation_sample_size(const SamplingPair& sp, double radius, double epsilon, double delta);

/// Automatic step size S / ((sqrt(d) + H (C1 + C2)) sqrt(T)).
double auto_step_size(std::size_t dim, const SamplingPair& sp, double penalty, double radius, std::size_t iterations);

struct MetaAvgConfig {
    double radius = 1.0;
    double epsilon = 0.1;
    double delta = 0.1;
    /// Defaults: 3 + S (d + 2) and 2 (1 + S).
    std::optional<double> v_max;
    std::optional<double> beta;
    /// Replaces the constructed grid when set.
    std::optional<std::vector<double>> grid_points;
    std::size_t minibatch = 1;
    std::uint64_t seed = 0;
    std::size_t trace_stride = 0;
    std::size_t trace_violation_samples = 0;
};

struct GridPointResult {
    double penalty = 0.0;
    std::size_t iterations = 0;
    std::size_t violation_samples = 0;
    /// l^T Phi theta_hat_k.
    double linear_objective = 0.0;
    double v_hat = 0.0;
    double selection_value = 0.0;
    RunTrace trace;
};

struct MetaResult {
    HGrid grid;
    std::size_t chosen = 0;
    std::vector<GridPointResult> points;

    const GridPointResult& selected() const { return points.at(chosen); }
};

/// Runs the solver at every grid point with T = max(H^2/eps^2, 40 S^2 log(K/delta)),
/// estimates V_hat with n = 8 (S(C1+1) + S C2)^2 / eps^2 log(4K/delta) and picks
/// argmin l^T Phi theta_k + H_k V_hat_k + beta / H_k (lowest index on ties).
MetaResult meta_solve_avg(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                          const MetaAvgConfig& cfg, const EvalHook& eval_hook = {});

double default_avg_v_max(std::size_t dim, double radius);
double default_avg_beta(double radius);

}  // namespace dalp
