#pragma once

#include "dalp/avg_solver.hpp"
#include "dalp/features.hpp"
#include "dalp/grid.hpp"
#include "dalp/mdp.hpp"
#include "dalp/trace.hpp"

#include <optional>
#include <span>
#include <vector>

namespace dalp {

struct DiscSolverConfig : SgdOptions {
    double gamma = 0.9;
    /// Initial-state distribution; empty means uniform over states.
    std::vector<double> alpha;
    double epsilon = 0.1;
    double delta = 0.1;
    /// Also enforce sum(theta) = 1 / (1 - gamma) (off by default).
    bool sum_constraint = false;

    void validate(std::size_t dim, std::size_t num_states) const;
};

std::vector<double> uniform_alpha(std::size_t num_states);

struct DiscViolations {
    double negativity = 0.0;   // V3 = ||[Phi theta]_-||_1
    double feasibility = 0.0;  // V4 = ||(B - gamma P)^T Phi theta - alpha||_1
    double total() const noexcept { return negativity + feasibility; }
};

DiscViolations violations_exact_disc(const MdpModel& model, const FeatureSpace& fs, double gamma,
                                     std::span<const double> alpha, std::span<const double> theta);

/// l^T Phi theta + H (V3 + V4), by enumeration.
double surrogate_cost_exact_disc(const MdpModel& model, const FeatureSpace& fs, double penalty, double gamma,
                                 std::span<const double> alpha, std::span<const double> theta);

/// l^T Phi - H Phi_(x,a),: / q_sa 1{Phi theta < 0 at (x,a)}
///          + H (B - gamma P)^T_{:,x'} Phi / q_s sgn((B - gamma P)^T_{:,x'} Phi theta - alpha(x')).
std::vector<double> subgradient_sample_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                                            double penalty, double gamma, std::span<const double> alpha,
                                            std::span<const double> theta, std::size_t pair, std::size_t state);

std::vector<double> subgradient_estimate_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                                              double penalty, double gamma, std::span<const double> alpha,
                                              std::span<const double> theta, Rng& rng);

/// Radial shrink onto {||theta||_2 <= S}.
std::vector<double> project_theta_disc(std::span<const double> theta, double radius);

RunTrace sgd_solve_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                        const DiscSolverConfig& cfg, const EvalHook& eval_hook = {});

double violation_summand_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp, double gamma,
                              std::span<const double> alpha, std::span<const double> theta, std::size_t pair,
                              std::size_t state);

double estimate_violations_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp, double gamma,
                                std::span<const double> alpha, std::span<const double> theta, std::size_t n,
                                Rng& rng);

/// (S (C3 + 2 C4))^2 / (2 eps^2) log(2 / delta).
std::size_t violation_sample_size_disc(const SamplingPair& sp, double radius, double epsilon, double delta);

/// T = (S^2/eps^2) (H (C3 + C4) + sqrt(d) + 2 sqrt(10 log(1/delta)) + 2 sqrt(5 d log(1 + S^2 T0 / d)))^2
/// with T0 = S^2 H^2 / eps^2.
std::size_t discounted_iterations(std::size_t dim, const SamplingPair& sp, double penalty, double radius,
                                  double epsilon, double delta);

struct DiscountedEvaluation {
    double value = 0.0;        // alpha^T J_pi
    double visit_cost = 0.0;   // l^T nu_pi
};

DiscountedEvaluation evaluate_discounted(const MdpModel& model, const Policy& pi, double gamma,
                                         std::span<const double> alpha);

/// Hook reporting alpha^T J of the traced policy.
EvalHook discounted_value_hook(const MdpModel& model, double gamma, std::vector<double> alpha);

struct MetaDiscConfig {
    double gamma = 0.9;
    std::vector<double> alpha;
    double radius = 1.0;
    double epsilon = 0.1;
    double delta = 0.1;
    /// Defaults: 4 sqrt(d) C S and 6 sqrt(d) C S / (1 - gamma).
    std::optional<double> v_max;
    std::optional<double> beta;
    std::optional<std::vector<double>> grid_points;
    std::size_t minibatch = 1;
    std::uint64_t seed = 0;
    std::size_t trace_stride = 0;
    std::size_t trace_violation_samples = 0;
    bool sum_constraint = false;
};

/// Selection by argmin l^T Phi theta_k + (H_k + 1/(1-gamma)) V_hat_k + beta / (H_k (1 - gamma)).
MetaResult meta_solve_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                           const MetaDiscConfig& cfg, const EvalHook& eval_hook = {});

double default_disc_v_max(const FeatureSpace& fs, double radius);
double default_disc_beta(const FeatureSpace& fs, double radius, double gamma);

}  // namespace dalp
