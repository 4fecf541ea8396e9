#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dalp {

using StateVector = std::vector<double>;
/// Vector indexed by state-action pair, pair index = x * A + a.
using OccupancyVector = std::vector<double>;

struct Transition {
    std::uint32_t next;
    double prob;
};

/// Entry of the transposed kernel: the pair (x, a) leading into a state.
struct Predecessor {
    std::uint32_t pair;
    double prob;
};

/**
 * Finite MDP with a sparse transition kernel stored in both directions.
 *
 * Forward rows are indexed by state-action pair; the reverse table is
 * indexed by next state and is the exact transpose of the forward one.
 * Losses lie in [0, 1].
 */
class MdpModel {
public:
    struct Entry {
        std::size_t state;
        std::size_t action;
        std::size_t next;
        double prob;
    };

    /// Duplicate (x, a, next) entries are merged. Throws ShapeError or
    /// ParameterError when a row does not sum to one or a loss is outside [0, 1].
    MdpModel(std::size_t num_states, std::size_t num_actions, std::vector<double> loss,
             std::span<const Entry> entries);

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }
    std::size_t num_pairs() const noexcept { return num_states_ * num_actions_; }
    std::size_t pair_index(std::size_t x, std::size_t a) const noexcept { return x * num_actions_ + a; }

    std::span<const Transition> transitions(std::size_t x, std::size_t a) const;
    std::span<const Transition> transitions(std::size_t pair) const;
    std::span<const Predecessor> predecessors(std::size_t next) const;

    std::span<const double> loss() const noexcept { return loss_; }
    double loss(std::size_t x, std::size_t a) const { return loss_[pair_index(x, a)]; }

    std::size_t num_nonzeros() const noexcept { return forward_.size(); }

private:
    std::size_t num_states_;
    std::size_t num_actions_;
    std::vector<double> loss_;
    std::vector<std::size_t> forward_ptr_;
    std::vector<Transition> forward_;
    std::vector<std::size_t> reverse_ptr_;
    std::vector<Predecessor> reverse_;
};

/// Stochastic policy; row x holds pi(. | x).
class Policy {
public:
    Policy() = default;
    Policy(std::size_t num_states, std::size_t num_actions, std::vector<double> probs);

    static Policy uniform(std::size_t num_states, std::size_t num_actions);
    static Policy deterministic(std::size_t num_actions, std::span<const std::size_t> actions);

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }
    double prob(std::size_t x, std::size_t a) const { return probs_[x * num_actions_ + a]; }
    std::span<const double> row(std::size_t x) const {
        return {probs_.data() + x * num_actions_, num_actions_};
    }
    std::span<const double> probs() const noexcept { return probs_; }

    friend bool operator==(const Policy&, const Policy&) = default;

private:
    std::size_t num_states_ = 0;
    std::size_t num_actions_ = 0;
    std::vector<double> probs_;
};

/// Row-compressed state-to-state kernel.
struct SparseKernel {
    std::size_t num_states = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;

    /// Returns v^T K.
    StateVector left_multiply(std::span<const double> v) const;
    /// Returns K h.
    StateVector right_multiply(std::span<const double> h) const;
};

/// pi(a|x) = [u(x,a)]_+ / sum_a' [u(x,a')]_+, uniform where a row has no positive mass.
Policy policy_from_occupancy(std::size_t num_states, std::size_t num_actions,
                             std::span<const double> u);

SparseKernel induced_chain(const MdpModel& model, const Policy& pi);

/// Stationary distribution of P^pi by power iteration on the lazy kernel (P^pi + I)/2.
/// The returned vector has ||mu^T P^pi - mu^T||_1 <= tol; throws ConvergenceError otherwise.
StateVector stationary_distribution(const MdpModel& model, const Policy& pi,
                                    double tol = 1e-10, std::size_t max_iters = 1'000'000);
StateVector stationary_distribution(const SparseKernel& chain, double tol = 1e-10,
                                    std::size_t max_iters = 1'000'000);

/// mu(x) pi(a|x) for the stationary mu of pi.
OccupancyVector stationary_pair_distribution(const MdpModel& model, const Policy& pi,
                                             double tol = 1e-10);

double average_cost(const MdpModel& model, const Policy& pi, double tol = 1e-10);

/// Discounted cost-to-go J = l_pi + gamma P^pi J.
StateVector value_function(const MdpModel& model, const Policy& pi, double gamma,
                           double tol = 1e-10);

/// nu(x,a) = sum_{t>=1} gamma^{t-1} Pr(x_t = x, a_t = a), x_1 ~ alpha.
OccupancyVector discounted_visits(const MdpModel& model, const Policy& pi, double gamma,
                                  std::span<const double> alpha, double tol = 1e-10);

StateVector bellman_average(const MdpModel& model, std::span<const double> h);
StateVector bellman_discounted(const MdpModel& model, std::span<const double> values, double gamma);

struct OptimalSolution {
    Policy policy;
    /// h for the average criterion (h(0) = 0), J for the discounted one.
    StateVector values;
    /// Optimal gain; only set for the average criterion.
    std::optional<double> gain;
    double residual = 0.0;
    std::size_t iterations = 0;
};

/// Relative value iteration on the lazy kernel, anchored at state 0.
OptimalSolution solve_optimal_average(const MdpModel& model, double tol = 1e-10,
                                      std::size_t max_iters = 1'000'000);
OptimalSolution solve_optimal_discounted(const MdpModel& model, double gamma, double tol = 1e-10,
                                         std::size_t max_iters = 1'000'000);

/// Dobrushin coefficient of P^pi: max over state pairs of half the L1 distance of their rows.
double contraction_diagnostic(const MdpModel& model, const Policy& pi);

}  // namespace dalp
