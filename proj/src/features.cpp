#include "dalp/features.hpp"

#include "dalp/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>

namespace dalp {

double dot(const SparseRow& row, std::span<const double> theta) {
    double s = 0.0;
    for (const auto& e : row) s += e.value * theta[e.index];
    return s;
}

double norm2(const SparseRow& row) {
    double s = 0.0;
    for (const auto& e : row) s += e.value * e.value;
    return std::sqrt(s);
}

ConstraintOperator ConstraintOperator::discounted(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("discount factor must lie in (0, 1)");
    return {Kind::discounted, gamma};
}

// ---------------------------------------------------------------------------
// FeatureSpace

struct FeatureSpace::Cache {
    struct Key {
        std::size_t next;
        std::uint64_t p_bits;
        std::uint64_t b_bits;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = k.next * 0x9E3779B97F4A7C15ULL;
            h ^= k.p_bits + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2);
            h ^= k.b_bits + 0x85157AF5ULL + (h << 6) + (h >> 2);
            return static_cast<std::size_t>(h);
        }
    };
    std::shared_mutex mutex;
    std::unordered_map<Key, SparseRow, KeyHash> rows;
};

FeatureSpace::FeatureSpace(FeatureSpace&&) noexcept = default;
FeatureSpace& FeatureSpace::operator=(FeatureSpace&&) noexcept = default;
FeatureSpace::~FeatureSpace() = default;

FeatureSpace::FeatureSpace(const MdpModel& model, std::vector<Column> columns, std::optional<OccupancyVector> mu0,
                           bool normalize)
    : num_states_(model.num_states()),
      num_actions_(model.num_actions()),
      normalized_(normalize),
      cache_(std::make_unique<Cache>()) {
    const std::size_t n = num_pairs();
    for (auto& col : columns) {
        // Merge duplicate pair indices and drop exact zeros.
        std::sort(col.entries.begin(), col.entries.end(),
                  [](const SparseEntry& l, const SparseEntry& r) { return l.index < r.index; });
        std::vector<SparseEntry> merged;
        for (const auto& e : col.entries) {
            if (e.index >= n) throw ShapeError("feature '" + col.name + "' has an out-of-range pair index");
            if (!std::isfinite(e.value)) throw ParameterError("feature '" + col.name + "' has a non-finite value");
            if (!merged.empty() && merged.back().index == e.index) {
                merged.back().value += e.value;
            } else {
                merged.push_back(e);
            }
        }
        std::erase_if(merged, [](const SparseEntry& e) { return e.value == 0.0; });
        if (merged.empty()) {
            dropped_.push_back(col.name);
            continue;
        }
        if (normalize) {
            double total = 0.0;
            for (const auto& e : merged) total += std::abs(e.value);
            for (auto& e : merged) e.value /= total;
        }
        columns_.push_back({std::move(col.name), std::move(merged)});
    }
    if (columns_.empty()) throw ParameterError("feature space has no nonempty columns");

    rows_.assign(n, {});
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        for (const auto& e : columns_[j].entries) rows_[e.index].push_back({static_cast<std::uint32_t>(j), e.value});
    }

    if (mu0) {
        if (mu0->size() != n) throw ShapeError("mu0 has wrong length");
        mu0_ = std::move(*mu0);
        has_mu0_ = true;
    } else {
        mu0_.assign(n, 0.0);
    }

    loss_phi_.assign(columns_.size(), 0.0);
    const auto loss = model.loss();
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        double abs_sum = 0.0;
        for (const auto& e : columns_[j].entries) {
            loss_phi_[j] += loss[e.index] * e.value;
            abs_sum += std::abs(e.value);
        }
        column_norm_bound_ = std::max(column_norm_bound_, abs_sum);
    }
}

const SparseRow& FeatureSpace::row(std::size_t pair) const {
    if (pair >= rows_.size()) throw ShapeError("pair index out of range");
    return rows_[pair];
}

const SparseRow& FeatureSpace::row(std::size_t x, std::size_t a) const {
    if (x >= num_states_ || a >= num_actions_) throw ShapeError("state or action out of range");
    return rows_[x * num_actions_ + a];
}

double FeatureSpace::occupancy_value(std::span<const double> theta, std::size_t x, std::size_t a) const {
    if (theta.size() != dim()) throw ShapeError("theta has wrong dimension");
    const std::size_t p = x * num_actions_ + a;
    return mu0_[p] + dot(row(x, a), theta);
}

OccupancyVector FeatureSpace::occupancy(std::span<const double> theta) const {
    if (theta.size() != dim()) throw ShapeError("theta has wrong dimension");
    OccupancyVector u(mu0_);
    for (std::size_t p = 0; p < rows_.size(); ++p) u[p] += dot(rows_[p], theta);
    return u;
}

SparseRow FeatureSpace::marginal_row(std::size_t x) const {
    std::vector<double> acc(dim(), 0.0);
    for (std::size_t a = 0; a < num_actions_; ++a) {
        for (const auto& e : row(x, a)) acc[e.index] += e.value;
    }
    SparseRow out;
    for (std::size_t j = 0; j < acc.size(); ++j) {
        if (acc[j] != 0.0) out.push_back({static_cast<std::uint32_t>(j), acc[j]});
    }
    return out;
}

const SparseRow& FeatureSpace::cached(const MdpModel& model, std::size_t next, double p_coef,
                                      double b_coef) const {
    if (next >= num_states_) throw ShapeError("state index out of range");
    if (model.num_states() != num_states_ || model.num_actions() != num_actions_) {
        throw ShapeError("model does not match the feature space");
    }
    const Cache::Key key{next, std::bit_cast<std::uint64_t>(p_coef), std::bit_cast<std::uint64_t>(b_coef)};
    {
        std::shared_lock lock(cache_->mutex);
        auto it = cache_->rows.find(key);
        if (it != cache_->rows.end()) return it->second;
    }
    // p_coef * sum_{(x,a) -> next} P(next|x,a) Phi_(x,a),:  +  b_coef * sum_a Phi_(next,a),:
    std::vector<double> acc(dim(), 0.0);
    std::vector<char> hit(dim(), 0);
    for (const auto& pred : model.predecessors(next)) {
        for (const auto& e : rows_[pred.pair]) {
            acc[e.index] += p_coef * pred.prob * e.value;
            hit[e.index] = 1;
        }
    }
    for (std::size_t a = 0; a < num_actions_; ++a) {
        for (const auto& e : rows_[next * num_actions_ + a]) {
            acc[e.index] += b_coef * e.value;
            hit[e.index] = 1;
        }
    }
    SparseRow out;
    for (std::size_t j = 0; j < acc.size(); ++j) {
        if (hit[j] && acc[j] != 0.0) out.push_back({static_cast<std::uint32_t>(j), acc[j]});
    }
    std::unique_lock lock(cache_->mutex);
    auto [it, inserted] = cache_->rows.try_emplace(key, std::move(out));
    return it->second;
}

const SparseRow& FeatureSpace::drift_column(const MdpModel& model, std::size_t next, double kappa) const {
    return cached(model, next, 1.0, -kappa);
}

const SparseRow& FeatureSpace::feasibility_column(const MdpModel& model, std::size_t next, double gamma) const {
    return cached(model, next, -gamma, 1.0);
}

const SparseRow& FeatureSpace::constraint_column(const MdpModel& model, const ConstraintOperator& op,
                                                 std::size_t next) const {
    return op.kind == ConstraintOperator::Kind::stationary ? drift_column(model, next, 1.0)
                                                           : feasibility_column(model, next, op.gamma);
}

// ---------------------------------------------------------------------------
// SamplingPair

SamplingPair::SamplingPair(std::vector<double> q_sa, std::vector<double> q_s, double c_sa, double c_s)
    : q_sa_(std::move(q_sa)), q_s_(std::move(q_s)), c_sa_(c_sa), c_s_(c_s) {
    for (const auto* q : {&q_sa_, &q_s_}) {
        if (q->empty()) throw ShapeError("sampling distribution is empty");
        double total = 0.0;
        for (double v : *q) {
            if (!(v >= 0.0)) throw ParameterError("sampling probabilities must be nonnegative");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ParameterError("sampling distribution does not sum to one");
    }
    if (!(c_sa_ >= 0.0) || !(c_s_ >= 0.0) || !std::isfinite(c_sa_) || !std::isfinite(c_s_)) {
        throw ParameterError("coverage constants must be finite and nonnegative");
    }
    cdf_sa_ = cumulative(q_sa_);
    cdf_s_ = cumulative(q_s_);
    uniform_sa_ = is_uniform(q_sa_);
    uniform_s_ = is_uniform(q_s_);
}

std::vector<double> SamplingPair::cumulative(const std::vector<double>& q) {
    std::vector<double> cdf(q.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        acc += q[i];
        cdf[i] = acc;
    }
    for (double& v : cdf) v /= acc;
    cdf.back() = 1.0;
    return cdf;
}

bool SamplingPair::is_uniform(const std::vector<double>& q) {
    return std::all_of(q.begin(), q.end(), [&](double v) { return v == q.front(); });
}

std::size_t SamplingPair::draw(const std::vector<double>& cdf, bool uniform, Rng& rng) {
    if (uniform) return std::uniform_int_distribution<std::size_t>(0, cdf.size() - 1)(rng);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    return static_cast<std::size_t>(it - cdf.begin());
}

std::size_t SamplingPair::sample_pair(Rng& rng) const { return draw(cdf_sa_, uniform_sa_, rng); }

std::size_t SamplingPair::sample_state(Rng& rng) const { return draw(cdf_s_, uniform_s_, rng); }

// ---------------------------------------------------------------------------
// Builders

CoverageBounds coverage_constants(const MdpModel& model, const FeatureSpace& fs, const ConstraintOperator& op,
                                  std::span<const double> q_sa, std::span<const double> q_s) {
    if (q_sa.size() != fs.num_pairs() || q_s.size() != fs.num_states()) {
        throw ShapeError("sampling distributions do not match the feature space");
    }
    CoverageBounds c{0.0, 0.0};
    for (std::size_t p = 0; p < fs.num_pairs(); ++p) {
        const double n = norm2(fs.row(p));
        if (n == 0.0) continue;
        if (q_sa[p] <= 0.0) throw ParameterError("q_sa vanishes on a pair with a nonzero feature row");
        c.c_sa = std::max(c.c_sa, n / q_sa[p]);
    }
    for (std::size_t x = 0; x < fs.num_states(); ++x) {
        const double n = norm2(fs.constraint_column(model, op, x));
        if (n == 0.0) continue;
        if (q_s[x] <= 0.0) throw ParameterError("q_s vanishes on a state with a nonzero constraint column");
        c.c_s = std::max(c.c_s, n / q_s[x]);
    }
    return c;
}

SamplingPair make_uniform_sampling(const MdpModel& model, const FeatureSpace& fs, const ConstraintOperator& op,
                                   std::optional<CoverageBounds> bounds) {
    std::vector<double> q_sa(fs.num_pairs(), 1.0 / static_cast<double>(fs.num_pairs()));
    std::vector<double> q_s(fs.num_states(), 1.0 / static_cast<double>(fs.num_states()));
    CoverageBounds c{};
    if (bounds) {
        c = *bounds;
    } else if (fs.num_pairs() <= kExactCapacity) {
        c = coverage_constants(model, fs, op, q_sa, q_s);
    } else {
        throw CapacityError("coverage constants need enumeration; supply bounds for models this large");
    }
    return SamplingPair(std::move(q_sa), std::move(q_s), c.c_sa, c.c_s);
}

SamplingPair make_norm_proportional_sampling(const MdpModel& model, const FeatureSpace& fs,
                                             const ConstraintOperator& op) {
    std::vector<double> q_sa(fs.num_pairs());
    std::vector<double> q_s(fs.num_states());
    double z_sa = 0.0;
    double z_s = 0.0;
    for (std::size_t p = 0; p < q_sa.size(); ++p) z_sa += (q_sa[p] = norm2(fs.row(p)));
    for (std::size_t x = 0; x < q_s.size(); ++x) z_s += (q_s[x] = norm2(fs.marginal_row(x)));
    if (!(z_sa > 0.0) || !(z_s > 0.0)) throw ParameterError("norm-proportional sampling has a zero normalizer");
    for (double& v : q_sa) v /= z_sa;
    for (double& v : q_s) v /= z_s;
    const CoverageBounds c = coverage_constants(model, fs, op, q_sa, q_s);
    return SamplingPair(std::move(q_sa), std::move(q_s), c.c_sa, c.c_s);
}

}  // namespace dalp
