#pragma once

#include "dalp/mdp.hpp"
#include "dalp/random.hpp"

#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dalp {

struct SparseEntry {
    std::uint32_t index;
    double value;
};

/// Sparse d-vector (indices into the feature dimension, sorted).
using SparseRow = std::vector<SparseEntry>;

double dot(const SparseRow& row, std::span<const double> theta);
double norm2(const SparseRow& row);

/// Constraint matrix whose columns the solvers sample: (P - B) for the
/// average-cost LP, (B - gamma P) for the discounted one.
struct ConstraintOperator {
    enum class Kind { stationary, discounted };
    Kind kind = Kind::stationary;
    double gamma = 1.0;

    static ConstraintOperator stationary() { return {Kind::stationary, 1.0}; }
    static ConstraintOperator discounted(double gamma);
};

/**
 * Feature matrix Phi over state-action pairs, kept both column-major (as
 * built) and row-major (for sampled access), plus the baseline mu0 and the
 * precomputed product l^T Phi.
 *
 * Constraint columns are computed on demand from the model's reverse
 * transitions and memoized; the cache is safe for concurrent use.
 */
class FeatureSpace {
public:
    struct Column {
        std::string name;
        /// (pair index, value); pair index = x * A + a.
        std::vector<SparseEntry> entries;
    };

    /// Empty columns are dropped and their names recorded in dropped().
    /// With `normalize`, each column is divided by its absolute sum.
    FeatureSpace(const MdpModel& model, std::vector<Column> columns, std::optional<OccupancyVector> mu0,
                 bool normalize);

    FeatureSpace(const FeatureSpace&) = delete;
    FeatureSpace& operator=(const FeatureSpace&) = delete;
    FeatureSpace(FeatureSpace&&) noexcept;
    FeatureSpace& operator=(FeatureSpace&&) noexcept;
    ~FeatureSpace();

    std::size_t dim() const noexcept { return columns_.size(); }
    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }
    std::size_t num_pairs() const noexcept { return num_states_ * num_actions_; }

    const SparseRow& row(std::size_t pair) const;
    const SparseRow& row(std::size_t x, std::size_t a) const;
    const Column& column(std::size_t j) const { return columns_.at(j); }
    const std::vector<std::string>& dropped() const noexcept { return dropped_; }

    bool has_mu0() const noexcept { return has_mu0_; }
    std::span<const double> mu0() const noexcept { return mu0_; }
    std::span<const double> loss_phi() const noexcept { return loss_phi_; }
    /// C >= max_j sum_(x,a) |Phi_(x,a),j|.
    double column_norm_bound() const noexcept { return column_norm_bound_; }
    bool normalized() const noexcept { return normalized_; }

    /// mu0(x,a) + Phi_(x,a),: theta.
    double occupancy_value(std::span<const double> theta, std::size_t x, std::size_t a) const;
    /// Full vector mu0 + Phi theta.
    OccupancyVector occupancy(std::span<const double> theta) const;

    /// (P - kappa B)^T_{:,x'} Phi.
    const SparseRow& drift_column(const MdpModel& model, std::size_t next, double kappa) const;
    /// (B - gamma P)^T_{:,x'} Phi.
    const SparseRow& feasibility_column(const MdpModel& model, std::size_t next, double gamma) const;
    const SparseRow& constraint_column(const MdpModel& model, const ConstraintOperator& op,
                                       std::size_t next) const;

    /// B^T_{:,x} Phi = sum_a Phi_(x,a),:.
    SparseRow marginal_row(std::size_t x) const;

private:
    struct Cache;

    const SparseRow& cached(const MdpModel& model, std::size_t next, double p_coef, double b_coef) const;

    std::size_t num_states_;
    std::size_t num_actions_;
    std::vector<Column> columns_;
    std::vector<std::string> dropped_;
    std::vector<SparseRow> rows_;
    bool has_mu0_ = false;
    bool normalized_ = false;
    OccupancyVector mu0_;
    std::vector<double> loss_phi_;
    double column_norm_bound_ = 0.0;
    std::unique_ptr<Cache> cache_;
};

/**
 * Pair of sampling distributions over state-action pairs (q_sa) and states
 * (q_s), with coverage constants
 *   c_sa >= max ||Phi_(x,a),:|| / q_sa(x,a),
 *   c_s  >= max ||M^T_{:,x} Phi|| / q_s(x)
 * for the constraint operator M the pair was built for.
 */
class SamplingPair {
public:
    SamplingPair(std::vector<double> q_sa, std::vector<double> q_s, double c_sa, double c_s);

    double q_sa(std::size_t pair) const { return q_sa_[pair]; }
    double q_s(std::size_t x) const { return q_s_[x]; }
    std::span<const double> q_sa() const noexcept { return q_sa_; }
    std::span<const double> q_s() const noexcept { return q_s_; }
    double c_sa() const noexcept { return c_sa_; }
    double c_s() const noexcept { return c_s_; }

    std::size_t sample_pair(Rng& rng) const;
    std::size_t sample_state(Rng& rng) const;

private:
    static std::vector<double> cumulative(const std::vector<double>& q);
    static bool is_uniform(const std::vector<double>& q);
    static std::size_t draw(const std::vector<double>& cdf, bool uniform, Rng& rng);

    std::vector<double> q_sa_;
    std::vector<double> q_s_;
    std::vector<double> cdf_sa_;
    std::vector<double> cdf_s_;
    bool uniform_sa_;
    bool uniform_s_;
    double c_sa_;
    double c_s_;
};

struct CoverageBounds {
    double c_sa;
    double c_s;
};

/// Exact coverage constants for given distributions, by full enumeration.
CoverageBounds coverage_constants(const MdpModel& model, const FeatureSpace& fs, const ConstraintOperator& op,
                                  std::span<const double> q_sa, std::span<const double> q_s);

/// Uniform q over pairs and states. Constants are enumerated when the model
/// is within the exact capacity; otherwise `bounds` must be supplied.
SamplingPair make_uniform_sampling(const MdpModel& model, const FeatureSpace& fs, const ConstraintOperator& op,
                                   std::optional<CoverageBounds> bounds = std::nullopt);

/// q_sa proportional to ||Phi_(x,a),:||, q_s proportional to ||B^T_{:,x} Phi||.
SamplingPair make_norm_proportional_sampling(const MdpModel& model, const FeatureSpace& fs,
                                             const ConstraintOperator& op);

}  // namespace dalp
