#pragma once

// Four-queue, two-server network (Rybko-Stolyar layout):
//   arrivals -> q1 -> q2 -> out      server 1 serves q1 or q4
//   arrivals -> q3 -> q4 -> out      server 2 serves q2 or q3

#include "dalp/features.hpp"
#include "dalp/mdp.hpp"
#include "dalp/random.hpp"

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace dalp::queue {

struct QueueNetSpec {
    std::array<int, 4> buffers{38, 25, 25, 38};
    double arrival1 = 0.08;
    double arrival3 = 0.08;
    std::array<double, 4> service{0.12, 0.12, 0.28, 0.28};

    static QueueNetSpec paper();
    /// Same rates, buffers 9/6/6/9 (4900 states).
    static QueueNetSpec desk();

    void validate() const;
    std::size_t num_states() const;
    int total_capacity() const { return buffers[0] + buffers[1] + buffers[2] + buffers[3]; }
};

struct QueueState {
    std::array<int, 4> lengths{};
    int total() const { return lengths[0] + lengths[1] + lengths[2] + lengths[3]; }
    friend bool operator==(const QueueState&, const QueueState&) = default;
};

/// server1: 0 serves queue 1, 1 serves queue 4; server2: 0 serves queue 2, 1 serves queue 3.
struct JointAction {
    int server1 = 0;
    int server2 = 0;

    std::size_t index() const { return static_cast<std::size_t>(server1 + 2 * server2); }
    static JointAction from_index(std::size_t a) {
        return {static_cast<int>(a % 2), static_cast<int>(a / 2)};
    }
    /// Service indicators s_1..s_4.
    std::array<int, 4> service_mask() const {
        return {server1 == 0, server2 == 0, server2 == 1, server1 == 1};
    }
};

inline constexpr std::size_t kNumActions = 4;

/// Mixed-radix index, queue 1 least significant.
std::size_t encode(const QueueNetSpec& spec, const QueueState& s);
QueueState decode(const QueueNetSpec& spec, std::size_t index);

/// Exact MDP with loss ||x||_1 / sum(B), so losses stay in [0, 1]. Throws
/// CapacityError when the state-action count exceeds the exact capacity.
MdpModel build_mdp(const QueueNetSpec& spec);

/// One stochastic transition.
QueueState step(const QueueNetSpec& spec, const QueueState& s, JointAction action, Rng& rng);

enum class Heuristic { longer, lbfs };

std::string to_string(Heuristic h);
Heuristic heuristic_from_string(const std::string& name);

/// pi(. | s) for a heuristic, over the four joint actions.
std::array<double, kNumActions> heuristic_action_probs(Heuristic kind, const QueueState& s);

Policy heuristic_policy(const QueueNetSpec& spec, Heuristic kind);

/// Inclusive integer range.
using Interval = std::pair<int, int>;

struct FeatureOptions {
    std::vector<Heuristic> heuristics{Heuristic::longer, Heuristic::lbfs};
    /// Buckets for the total queue length.
    std::vector<Interval> loss_intervals;
    /// Buckets for each queue length; every 4-tuple of them gets a feature per action.
    std::vector<Interval> component_intervals;
    /// Estimate heuristic stationary distributions from a trajectory instead of exactly.
    bool simulate_stationary = false;
    std::size_t simulation_length = 1'000'000;
    std::size_t simulation_burn_in = 10'000;
    std::uint64_t seed = 0;

    /// Totals {1..5}, ..., {46..50}; components [0,10], [11,20], [21,25].
    static FeatureOptions paper();
    /// Totals {1..3}, ..., {28..30}; components [0,2], [3,5], [6,9].
    static FeatureOptions desk();
};

/// Heuristic stationary columns first, then loss-interval x action columns,
/// then component-tuple x action columns; all normalized to sum to one.
FeatureSpace build_features(const QueueNetSpec& spec, const MdpModel& model, const FeatureOptions& options);

struct SimulationResult {
    double mean = 0.0;
    /// Standard deviation of the per-replication averages.
    double std_dev = 0.0;
    double std_error = 0.0;
};

/// Average raw total queue length over [burn_in, horizon), averaged over
/// `reps` trajectories started from the empty network.
SimulationResult evaluate_policy_simulated(const QueueNetSpec& spec, const Policy& policy, std::size_t horizon,
                                           std::size_t burn_in, std::size_t reps, std::uint64_t seed);

}  // namespace dalp::queue
