#include "dalp/mdp.hpp"

#include "dalp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dalp {

namespace {

constexpr double kRowSumTol = 1e-12;

void check_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ParameterError("discount factor must lie in (0, 1), got " + std::to_string(gamma));
    }
}

void check_exact_capacity(const MdpModel& model) {
    if (model.num_pairs() > kExactCapacity) {
        throw CapacityError("model has " + std::to_string(model.num_pairs()) +
                            " state-action pairs; exact solver limit is " +
                            std::to_string(kExactCapacity));
    }
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

/// min_a [ l(x,a) + scale * sum_x' P(x'|x,a) h(x') ] together with the argmin.
std::pair<double, std::size_t> greedy_backup(const MdpModel& model, std::size_t x,
                                             std::span<const double> h, double scale) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_a = 0;
    for (std::size_t a = 0; a < model.num_actions(); ++a) {
        double q = model.loss(x, a);
        double ev = 0.0;
        for (const auto& t : model.transitions(x, a)) ev += t.prob * h[t.next];
        q += scale * ev;
        if (q < best) {
            best = q;
            best_a = a;
        }
    }
    return {best, best_a};
}

}  // namespace

// ---------------------------------------------------------------------------
// MdpModel

MdpModel::MdpModel(std::size_t num_states, std::size_t num_actions, std::vector<double> loss,
                   std::span<const Entry> entries)
    : num_states_(num_states), num_actions_(num_actions), loss_(std::move(loss)) {
    if (num_states == 0 || num_actions == 0) throw ShapeError("MDP needs at least one state and action");
    if (num_states > std::numeric_limits<std::uint32_t>::max() ||
        num_pairs() > std::numeric_limits<std::uint32_t>::max()) {
        throw CapacityError("MDP too large for 32-bit indices");
    }
    if (loss_.size() != num_pairs()) {
        throw ShapeError("loss has " + std::to_string(loss_.size()) + " entries, expected " +
                         std::to_string(num_pairs()));
    }
    for (double l : loss_) {
        if (!(l >= 0.0 && l <= 1.0)) throw ParameterError("loss entries must lie in [0, 1]");
    }

    std::vector<Entry> sorted(entries.begin(), entries.end());
    for (const auto& e : sorted) {
        if (e.state >= num_states || e.action >= num_actions || e.next >= num_states) {
            throw ShapeError("transition index out of range");
        }
        if (!(e.prob >= 0.0) || !std::isfinite(e.prob)) throw ParameterError("negative transition probability");
    }
    std::sort(sorted.begin(), sorted.end(), [](const Entry& l, const Entry& r) {
        return std::tie(l.state, l.action, l.next) < std::tie(r.state, r.action, r.next);
    });

    // Merge duplicates; exact zeros are dropped.
    std::vector<Entry> merged;
    merged.reserve(sorted.size());
    for (const auto& e : sorted) {
        if (!merged.empty() && merged.back().state == e.state && merged.back().action == e.action &&
            merged.back().next == e.next) {
            merged.back().prob += e.prob;
        } else {
            merged.push_back(e);
        }
    }
    forward_ptr_.assign(num_pairs() + 1, 0);
    forward_.reserve(merged.size());
    std::vector<std::size_t> counts(num_pairs(), 0);
    for (const auto& e : merged) {
        if (e.prob == 0.0) continue;
        forward_.push_back({static_cast<std::uint32_t>(e.next), e.prob});
        ++counts[pair_index(e.state, e.action)];
    }
    for (std::size_t p = 0; p < num_pairs(); ++p) forward_ptr_[p + 1] = forward_ptr_[p] + counts[p];

    for (std::size_t p = 0; p < num_pairs(); ++p) {
        double s = 0.0;
        for (const auto& t : transitions(p)) s += t.prob;
        if (std::abs(s - 1.0) > kRowSumTol) {
            throw ParameterError("transition row for pair " + std::to_string(p) + " sums to " +
                                 std::to_string(s));
        }
    }

    reverse_ptr_.assign(num_states + 1, 0);
    for (const auto& t : forward_) ++reverse_ptr_[t.next + 1];
    std::partial_sum(reverse_ptr_.begin(), reverse_ptr_.end(), reverse_ptr_.begin());
    reverse_.resize(forward_.size());
    std::vector<std::size_t> fill(reverse_ptr_.begin(), reverse_ptr_.end() - 1);
    for (std::size_t p = 0; p < num_pairs(); ++p) {
        for (const auto& t : transitions(p)) {
            reverse_[fill[t.next]++] = {static_cast<std::uint32_t>(p), t.prob};
        }
    }
}

std::span<const Transition> MdpModel::transitions(std::size_t x, std::size_t a) const {
    return transitions(pair_index(x, a));
}

std::span<const Transition> MdpModel::transitions(std::size_t pair) const {
    return {forward_.data() + forward_ptr_[pair], forward_ptr_[pair + 1] - forward_ptr_[pair]};
}

std::span<const Predecessor> MdpModel::predecessors(std::size_t next) const {
    return {reverse_.data() + reverse_ptr_[next], reverse_ptr_[next + 1] - reverse_ptr_[next]};
}

// ---------------------------------------------------------------------------
// Policy

Policy::Policy(std::size_t num_states, std::size_t num_actions, std::vector<double> probs)
    : num_states_(num_states), num_actions_(num_actions), probs_(std::move(probs)) {
    if (probs_.size() != num_states * num_actions) throw ShapeError("policy table has wrong size");
    for (std::size_t x = 0; x < num_states; ++x) {
        double s = 0.0;
        for (double p : row(x)) {
            if (!(p >= 0.0)) throw ParameterError("policy probabilities must be nonnegative");
            s += p;
        }
        if (std::abs(s - 1.0) > kRowSumTol) {
            throw ParameterError("policy row " + std::to_string(x) + " sums to " + std::to_string(s));
        }
    }
}

Policy Policy::uniform(std::size_t num_states, std::size_t num_actions) {
    return Policy(num_states, num_actions,
                  std::vector<double>(num_states * num_actions, 1.0 / static_cast<double>(num_actions)));
}

Policy Policy::deterministic(std::size_t num_actions, std::span<const std::size_t> actions) {
    std::vector<double> probs(actions.size() * num_actions, 0.0);
    for (std::size_t x = 0; x < actions.size(); ++x) {
        if (actions[x] >= num_actions) throw ShapeError("action index out of range");
        probs[x * num_actions + actions[x]] = 1.0;
    }
    return Policy(actions.size(), num_actions, std::move(probs));
}

// ---------------------------------------------------------------------------
// SparseKernel

StateVector SparseKernel::left_multiply(std::span<const double> v) const {
    StateVector out(num_states, 0.0);
    for (std::size_t x = 0; x < num_states; ++x) {
        const double w = v[x];
        if (w == 0.0) continue;
        for (std::size_t k = row_ptr[x]; k < row_ptr[x + 1]; ++k) out[cols[k]] += w * vals[k];
    }
    return out;
}

StateVector SparseKernel::right_multiply(std::span<const double> h) const {
    StateVector out(num_states, 0.0);
    for (std::size_t x = 0; x < num_states; ++x) {
        double s = 0.0;
        for (std::size_t k = row_ptr[x]; k < row_ptr[x + 1]; ++k) s += vals[k] * h[cols[k]];
        out[x] = s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation oracles

Policy policy_from_occupancy(std::size_t num_states, std::size_t num_actions,
                             std::span<const double> u) {
    if (u.size() != num_states * num_actions) {
        throw ShapeError("occupancy vector has " + std::to_string(u.size()) + " entries, expected " +
                         std::to_string(num_states * num_actions));
    }
    std::vector<double> probs(u.size());
    for (std::size_t x = 0; x < num_states; ++x) {
        double total = 0.0;
        for (std::size_t a = 0; a < num_actions; ++a) total += std::max(u[x * num_actions + a], 0.0);
        for (std::size_t a = 0; a < num_actions; ++a) {
            probs[x * num_actions + a] = total > 0.0
                                             ? std::max(u[x * num_actions + a], 0.0) / total
                                             : 1.0 / static_cast<double>(num_actions);
        }
    }
    return Policy(num_states, num_actions, std::move(probs));
}

SparseKernel induced_chain(const MdpModel& model, const Policy& pi) {
    if (pi.num_states() != model.num_states() || pi.num_actions() != model.num_actions()) {
        throw ShapeError("policy dimensions do not match the model");
    }
    SparseKernel k;
    k.num_states = model.num_states();
    k.row_ptr.assign(k.num_states + 1, 0);
    std::vector<double> dense_row(k.num_states, 0.0);
    std::vector<std::uint32_t> touched;
    for (std::size_t x = 0; x < k.num_states; ++x) {
        touched.clear();
        for (std::size_t a = 0; a < model.num_actions(); ++a) {
            const double w = pi.prob(x, a);
            if (w == 0.0) continue;
            for (const auto& t : model.transitions(x, a)) {
                if (dense_row[t.next] == 0.0) touched.push_back(t.next);
                dense_row[t.next] += w * t.prob;
            }
        }
        std::sort(touched.begin(), touched.end());
        for (auto c : touched) {
            k.cols.push_back(c);
            k.vals.push_back(dense_row[c]);
            dense_row[c] = 0.0;
        }
        k.row_ptr[x + 1] = k.cols.size();
    }
    return k;
}

StateVector stationary_distribution(const SparseKernel& chain, double tol, std::size_t max_iters) {
    const std::size_t n = chain.num_states;
    StateVector mu(n, 1.0 / static_cast<double>(n));
    double residual = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < max_iters; ++it) {
        StateVector next = chain.left_multiply(mu);
        residual = l1_distance(next, mu);
        if (residual <= tol) return mu;
        double total = 0.0;
        for (std::size_t x = 0; x < n; ++x) {
            mu[x] = 0.5 * (mu[x] + next[x]);
            total += mu[x];
        }
        for (double& v : mu) v /= total;
    }
    throw ConvergenceError("stationary distribution did not converge", residual);
}

StateVector stationary_distribution(const MdpModel& model, const Policy& pi, double tol,
                                    std::size_t max_iters) {
    return stationary_distribution(induced_chain(model, pi), tol, max_iters);
}

OccupancyVector stationary_pair_distribution(const MdpModel& model, const Policy& pi, double tol) {
    const StateVector mu = stationary_distribution(model, pi, tol);
    OccupancyVector out(model.num_pairs());
    for (std::size_t x = 0; x < model.num_states(); ++x) {
        for (std::size_t a = 0; a < model.num_actions(); ++a) {
            out[model.pair_index(x, a)] = mu[x] * pi.prob(x, a);
        }
    }
    return out;
}

double average_cost(const MdpModel& model, const Policy& pi, double tol) {
    const StateVector mu = stationary_distribution(model, pi, tol);
    double cost = 0.0;
    for (std::size_t x = 0; x < model.num_states(); ++x) {
        for (std::size_t a = 0; a < model.num_actions(); ++a) cost += mu[x] * pi.prob(x, a) * model.loss(x, a);
    }
    return cost;
}

StateVector value_function(const MdpModel& model, const Policy& pi, double gamma, double tol) {
    check_gamma(gamma);
    const SparseKernel chain = induced_chain(model, pi);
    StateVector policy_loss(model.num_states(), 0.0);
    double max_loss = 0.0;
    for (std::size_t x = 0; x < model.num_states(); ++x) {
        for (std::size_t a = 0; a < model.num_actions(); ++a) policy_loss[x] += pi.prob(x, a) * model.loss(x, a);
        max_loss = std::max(max_loss, policy_loss[x]);
    }
    // After k sweeps from J = 0 the error is at most gamma^k max_loss / (1 - gamma).
    StateVector values(model.num_states(), 0.0);
    double tail = max_loss / (1.0 - gamma);
    while (tail > tol) {
        StateVector next = chain.right_multiply(values);
        for (std::size_t x = 0; x < next.size(); ++x) next[x] = policy_loss[x] + gamma * next[x];
        values = std::move(next);
        tail *= gamma;
    }
    return values;
}

OccupancyVector discounted_visits(const MdpModel& model, const Policy& pi, double gamma,
                                  std::span<const double> alpha, double tol) {
    check_gamma(gamma);
    if (alpha.size() != model.num_states()) throw ShapeError("alpha has wrong length");
    double mass = 0.0;
    for (double v : alpha) {
        if (v < 0.0) throw ParameterError("alpha must be nonnegative");
        mass += v;
    }
    if (std::abs(mass - 1.0) > 1e-12) throw ParameterError("alpha must sum to one");

    const SparseKernel chain = induced_chain(model, pi);
    StateVector state_visits(model.num_states(), 0.0);
    StateVector dist(alpha.begin(), alpha.end());
    double weight = 1.0;  // gamma^{t-1}
    for (;;) {
        for (std::size_t x = 0; x < dist.size(); ++x) state_visits[x] += weight * dist[x];
        weight *= gamma;
        if (weight / (1.0 - gamma) <= 0.5 * tol) break;
        dist = chain.left_multiply(dist);
    }
    OccupancyVector nu(model.num_pairs());
    for (std::size_t x = 0; x < model.num_states(); ++x) {
        for (std::size_t a = 0; a < model.num_actions(); ++a) {
            nu[model.pair_index(x, a)] = state_visits[x] * pi.prob(x, a);
        }
    }
    return nu;
}

StateVector bellman_average(const MdpModel& model, std::span<const double> h) {
    if (h.size() != model.num_states()) throw ShapeError("h has wrong length");
    StateVector out(model.num_states());
    for (std::size_t x = 0; x < out.size(); ++x) out[x] = greedy_backup(model, x, h, 1.0).first;
    return out;
}

StateVector bellman_discounted(const MdpModel& model, std::span<const double> values, double gamma) {
    if (values.size() != model.num_states()) throw ShapeError("value vector has wrong length");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("discount factor must lie in [0, 1)");
    StateVector out(model.num_states());
    for (std::size_t x = 0; x < out.size(); ++x) out[x] = greedy_backup(model, x, values, gamma).first;
    return out;
}

OptimalSolution solve_optimal_average(const MdpModel& model, double tol, std::size_t max_iters) {
    check_exact_capacity(model);
    const std::size_t n = model.num_states();
    // Iterate on the lazy kernel (P + I)/2 with h_lazy = 2 h; the span of
    // (T_lazy h_lazy - h_lazy) equals the span of (L h - h).
    StateVector h_lazy(n, 0.0);
    StateVector next(n);
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    for (; it < max_iters; ++it) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t x = 0; x < n; ++x) {
            next[x] = greedy_backup(model, x, h_lazy, 0.5).first + 0.5 * h_lazy[x];
            const double diff = next[x] - h_lazy[x];
            lo = std::min(lo, diff);
            hi = std::max(hi, diff);
        }
        residual = hi - lo;
        const double anchor = next[0];
        for (std::size_t x = 0; x < n; ++x) h_lazy[x] = next[x] - anchor;
        if (residual <= tol) break;
    }
    if (residual > tol) throw ConvergenceError("relative value iteration did not converge", residual);

    StateVector h(n);
    for (std::size_t x = 0; x < n; ++x) h[x] = 0.5 * h_lazy[x];
    std::vector<std::size_t> actions(n);
    StateVector lh(n);
    for (std::size_t x = 0; x < n; ++x) std::tie(lh[x], actions[x]) = greedy_backup(model, x, h, 1.0);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t x = 0; x < n; ++x) {
        lo = std::min(lo, lh[x] - h[x]);
        hi = std::max(hi, lh[x] - h[x]);
    }
    OptimalSolution sol{Policy::deterministic(model.num_actions(), actions), std::move(h), 0.5 * (lo + hi),
                        hi - lo, it + 1};
    return sol;
}

OptimalSolution solve_optimal_discounted(const MdpModel& model, double gamma, double tol,
                                         std::size_t max_iters) {
    check_exact_capacity(model);
    check_gamma(gamma);
    const std::size_t n = model.num_states();
    StateVector values(n, 0.0);
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    for (; it < max_iters; ++it) {
        StateVector next = bellman_discounted(model, values, gamma);
        residual = 0.0;
        for (std::size_t x = 0; x < n; ++x) residual = std::max(residual, std::abs(next[x] - values[x]));
        values = std::move(next);
        // ||J_k - J*|| <= gamma/(1-gamma) ||J_k - J_{k-1}||; stop once the greedy residual is small.
        if (residual * gamma / (1.0 - gamma) <= 0.5 * tol) break;
    }
    std::vector<std::size_t> actions(n);
    double bellman_res = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
        auto [v, a] = greedy_backup(model, x, values, gamma);
        actions[x] = a;
        bellman_res = std::max(bellman_res, std::abs(v - values[x]));
    }
    if (bellman_res > tol) throw ConvergenceError("value iteration did not converge", bellman_res);
    return OptimalSolution{Policy::deterministic(model.num_actions(), actions), std::move(values),
                           std::nullopt, bellman_res, it + 1};
}

double contraction_diagnostic(const MdpModel& model, const Policy& pi) {
    const SparseKernel k = induced_chain(model, pi);
    const std::size_t n = k.num_states;
    double worst = 0.0;
    // Both rows are sorted by column, so a merge walk gives the L1 distance.
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t y = x + 1; y < n; ++y) {
            std::size_t i = k.row_ptr[x], j = k.row_ptr[y];
            const std::size_t ie = k.row_ptr[x + 1], je = k.row_ptr[y + 1];
            double dist = 0.0;
            while (i < ie || j < je) {
                if (j == je || (i < ie && k.cols[i] < k.cols[j])) {
                    dist += std::abs(k.vals[i++]);
                } else if (i == ie || k.cols[j] < k.cols[i]) {
                    dist += std::abs(k.vals[j++]);
                } else {
                    dist += std::abs(k.vals[i++] - k.vals[j++]);
                }
            }
            worst = std::max(worst, 0.5 * dist);
        }
    }
    return std::min(worst, 1.0);
}

}  // namespace dalp
