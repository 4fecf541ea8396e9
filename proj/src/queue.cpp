#include "dalp/queue.hpp"

#include "dalp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dalp::queue {

namespace {

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

// Per-queue departure probability under an action; departures from empty queues are dropped.
std::array<double, 4> departure_probs(const QueueNetSpec& spec, const QueueState& s, JointAction action) {
    const auto mask = action.service_mask();
    std::array<double, 4> d{};
    for (int i = 0; i < 4; ++i) d[i] = (mask[i] && s.lengths[i] > 0) ? spec.service[i] : 0.0;
    return d;
}

// Bits: 0 = A1, 1 = A3, 2..5 = D1..D4.
QueueState apply(const QueueNetSpec& spec, const QueueState& s, unsigned outcome) {
    auto bit = [&](int k) { return static_cast<int>((outcome >> k) & 1u); };
    const int a1 = bit(0), a3 = bit(1), d1 = bit(2), d2 = bit(3), d3 = bit(4), d4 = bit(5);
    std::array<int, 4> x = s.lengths;
    x[0] += a1 - d1;
    x[1] += d1 - d2;
    x[2] += a3 - d3;
    x[3] += d3 - d4;
    QueueState out;
    for (int i = 0; i < 4; ++i) out.lengths[i] = std::clamp(x[i], 0, spec.buffers[i]);
    return out;
}

std::array<double, 6> outcome_probs(const QueueNetSpec& spec, const QueueState& s, JointAction action) {
    const auto d = departure_probs(spec, s, action);
    return {spec.arrival1, spec.arrival3, d[0], d[1], d[2], d[3]};
}

bool in(const Interval& iv, int v) { return v >= iv.first && v <= iv.second; }

}  // namespace

QueueNetSpec QueueNetSpec::paper() { return {}; }

QueueNetSpec QueueNetSpec::desk() {
    QueueNetSpec s;
    s.buffers = {9, 6, 6, 9};
    return s;
}

void QueueNetSpec::validate() const {
    for (int b : buffers)
        if (b < 1) throw ParameterError("queue buffers must be at least 1");
    if (!is_probability(arrival1) || !is_probability(arrival3))
        throw ParameterError("arrival probabilities must lie in [0, 1]");
    for (double d : service)
        if (!is_probability(d)) throw ParameterError("service probabilities must lie in [0, 1]");
}

std::size_t QueueNetSpec::num_states() const {
    std::size_t n = 1;
    for (int b : buffers) n *= static_cast<std::size_t>(b) + 1;
    return n;
}

std::size_t encode(const QueueNetSpec& spec, const QueueState& s) {
    std::size_t index = 0;
    for (int i = 3; i >= 0; --i) {
        if (s.lengths[i] < 0 || s.lengths[i] > spec.buffers[i]) throw ShapeError("queue length out of range");
        index = index * (static_cast<std::size_t>(spec.buffers[i]) + 1) + static_cast<std::size_t>(s.lengths[i]);
    }
    return index;
}

QueueState decode(const QueueNetSpec& spec, std::size_t index) {
    if (index >= spec.num_states()) throw ShapeError("queue state index out of range");
    QueueState s;
    for (int i = 0; i < 4; ++i) {
        const std::size_t radix = static_cast<std::size_t>(spec.buffers[i]) + 1;
        s.lengths[i] = static_cast<int>(index % radix);
        index /= radix;
    }
    return s;
}

MdpModel build_mdp(const QueueNetSpec& spec) {
    spec.validate();
    const std::size_t n = spec.num_states();
    if (n * kNumActions > kExactCapacity)
        throw CapacityError("queue network has " + std::to_string(n * kNumActions) +
                            " state-action pairs, above the exact capacity");

    const double scale = 1.0 / spec.total_capacity();
    std::vector<double> loss(n * kNumActions);
    std::vector<MdpModel::Entry> entries;
    entries.reserve(n * kNumActions * 8);

    for (std::size_t x = 0; x < n; ++x) {
        const QueueState s = decode(spec, x);
        for (std::size_t a = 0; a < kNumActions; ++a) {
            loss[x * kNumActions + a] = scale * s.total();
            const auto p = outcome_probs(spec, s, JointAction::from_index(a));
            for (unsigned outcome = 0; outcome < 64; ++outcome) {
                double prob = 1.0;
                for (int k = 0; k < 6 && prob > 0.0; ++k) prob *= ((outcome >> k) & 1u) ? p[k] : 1.0 - p[k];
                if (prob == 0.0) continue;
                entries.push_back({x, a, encode(spec, apply(spec, s, outcome)), prob});
            }
        }
    }
    return MdpModel(n, kNumActions, std::move(loss), entries);
}

QueueState step(const QueueNetSpec& spec, const QueueState& s, JointAction action, Rng& rng) {
    const auto p = outcome_probs(spec, s, action);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    unsigned outcome = 0;
    for (int k = 0; k < 6; ++k)
        if (unit(rng) < p[k]) outcome |= 1u << k;
    return apply(spec, s, outcome);
}

std::string to_string(Heuristic h) { return h == Heuristic::longer ? "LONGER" : "LBFS"; }

Heuristic heuristic_from_string(const std::string& name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "longer") return Heuristic::longer;
    if (lower == "lbfs") return Heuristic::lbfs;
    throw ConfigError("unknown heuristic '" + name + "'");
}

std::array<double, kNumActions> heuristic_action_probs(Heuristic kind, const QueueState& s) {
    // Probability that server 1 serves queue 4, and that server 2 serves queue 3.
    double p1 = 0.0, p2 = 0.0;
    const auto& x = s.lengths;
    if (kind == Heuristic::longer) {
        p1 = x[3] > x[0] ? 1.0 : (x[3] == x[0] ? 0.5 : 0.0);
        p2 = x[2] > x[1] ? 1.0 : (x[2] == x[1] ? 0.5 : 0.0);
    } else {
        p1 = x[3] > 0 ? 1.0 : 0.0;
        p2 = x[1] > 0 ? 0.0 : 1.0;
    }
    std::array<double, kNumActions> probs{};
    for (std::size_t a = 0; a < kNumActions; ++a) {
        const JointAction ja = JointAction::from_index(a);
        probs[a] = (ja.server1 == 1 ? p1 : 1.0 - p1) * (ja.server2 == 1 ? p2 : 1.0 - p2);
    }
    return probs;
}

Policy heuristic_policy(const QueueNetSpec& spec, Heuristic kind) {
    const std::size_t n = spec.num_states();
    std::vector<double> probs(n * kNumActions);
    for (std::size_t x = 0; x < n; ++x) {
        const auto row = heuristic_action_probs(kind, decode(spec, x));
        std::copy(row.begin(), row.end(), probs.begin() + static_cast<std::ptrdiff_t>(x * kNumActions));
    }
    return Policy(n, kNumActions, std::move(probs));
}

FeatureOptions FeatureOptions::paper() {
    FeatureOptions o;
    for (int k = 0; k < 10; ++k) o.loss_intervals.push_back({5 * k + 1, 5 * k + 5});
    o.component_intervals = {{0, 10}, {11, 20}, {21, 25}};
    o.simulate_stationary = true;
    return o;
}

FeatureOptions FeatureOptions::desk() {
    FeatureOptions o;
    for (int k = 0; k < 10; ++k) o.loss_intervals.push_back({3 * k + 1, 3 * k + 3});
    o.component_intervals = {{0, 2}, {3, 5}, {6, 9}};
    return o;
}

namespace {

std::vector<SparseEntry> simulated_occupancy(const QueueNetSpec& spec, Heuristic kind, const FeatureOptions& o) {
    Rng rng = make_rng(o.seed, 300, static_cast<std::uint64_t>(kind));
    std::vector<double> counts(spec.num_states() * kNumActions, 0.0);
    QueueState s;
    for (std::size_t t = 0; t < o.simulation_length; ++t) {
        const auto probs = heuristic_action_probs(kind, s);
        std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
        const std::size_t a = pick(rng);
        if (t >= o.simulation_burn_in) counts[encode(spec, s) * kNumActions + a] += 1.0;
        s = step(spec, s, JointAction::from_index(a), rng);
    }
    std::vector<SparseEntry> out;
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i] > 0.0) out.push_back({static_cast<std::uint32_t>(i), counts[i]});
    return out;
}

std::vector<SparseEntry> exact_occupancy(const MdpModel& model, const Policy& pi) {
    const OccupancyVector mu = stationary_pair_distribution(model, pi);
    std::vector<SparseEntry> out;
    for (std::size_t i = 0; i < mu.size(); ++i)
        if (mu[i] > 0.0) out.push_back({static_cast<std::uint32_t>(i), mu[i]});
    return out;
}

}  // namespace

FeatureSpace build_features(const QueueNetSpec& spec, const MdpModel& model, const FeatureOptions& options) {
    const std::size_t n = spec.num_states();
    if (model.num_states() != n || model.num_actions() != kNumActions)
        throw ShapeError("model does not match the queue network");

    std::vector<FeatureSpace::Column> columns;
    for (Heuristic h : options.heuristics) {
        FeatureSpace::Column c{"stationary_" + to_string(h), {}};
        c.entries = options.simulate_stationary ? simulated_occupancy(spec, h, options)
                                                : exact_occupancy(model, heuristic_policy(spec, h));
        columns.push_back(std::move(c));
    }

    const std::size_t first_loss = columns.size();
    for (const auto& iv : options.loss_intervals)
        for (std::size_t a = 0; a < kNumActions; ++a)
            columns.push_back({"total_" + std::to_string(iv.first) + "_" + std::to_string(iv.second) + "_a" +
                                   std::to_string(a),
                               {}});

    const std::size_t m = options.component_intervals.size();
    const std::size_t first_tuple = columns.size();
    std::size_t tuples = 1;
    for (int i = 0; i < 4; ++i) tuples *= m;
    for (std::size_t t = 0; t < tuples; ++t) {
        std::string name = "tuple";
        for (std::size_t i = 0, r = t; i < 4; ++i, r /= m) name += "_" + std::to_string(r % m);
        for (std::size_t a = 0; a < kNumActions; ++a) columns.push_back({name + "_a" + std::to_string(a), {}});
    }

    for (std::size_t x = 0; x < n; ++x) {
        const QueueState s = decode(spec, x);
        const int total = s.total();
        for (std::size_t k = 0; k < options.loss_intervals.size(); ++k) {
            if (!in(options.loss_intervals[k], total)) continue;
            for (std::size_t a = 0; a < kNumActions; ++a)
                columns[first_loss + k * kNumActions + a].entries.push_back(
                    {static_cast<std::uint32_t>(x * kNumActions + a), 1.0});
        }
        if (m == 0) continue;
        std::size_t tuple = 0;
        bool covered = true;
        for (int i = 3; i >= 0 && covered; --i) {
            std::size_t j = 0;
            while (j < m && !in(options.component_intervals[j], s.lengths[i])) ++j;
            covered = j < m;
            tuple = tuple * m + j;
        }
        if (!covered) continue;
        for (std::size_t a = 0; a < kNumActions; ++a)
            columns[first_tuple + tuple * kNumActions + a].entries.push_back(
                {static_cast<std::uint32_t>(x * kNumActions + a), 1.0});
    }
    return FeatureSpace(model, std::move(columns), std::nullopt, true);
}

SimulationResult evaluate_policy_simulated(const QueueNetSpec& spec, const Policy& policy, std::size_t horizon,
                                           std::size_t burn_in, std::size_t reps, std::uint64_t seed) {
    spec.validate();
    if (horizon <= burn_in) throw ParameterError("horizon must exceed burn-in");
    if (reps == 0) throw ParameterError("at least one replication is required");
    if (policy.num_states() != spec.num_states() || policy.num_actions() != kNumActions)
        throw ShapeError("policy does not match the queue network");

    std::vector<double> means(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        Rng rng = make_rng(seed, 400, r);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        QueueState s;
        double total = 0.0;
        for (std::size_t t = 0; t < horizon; ++t) {
            if (t >= burn_in) total += s.total();
            const auto row = policy.row(encode(spec, s));
            double u = unit(rng);
            std::size_t a = 0;
            while (a + 1 < kNumActions && u >= row[a]) u -= row[a++];
            s = step(spec, s, JointAction::from_index(a), rng);
        }
        means[r] = total / static_cast<double>(horizon - burn_in);
    }

    SimulationResult res;
    res.mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(reps);
    if (reps > 1) {
        double ss = 0.0;
        for (double v : means) ss += (v - res.mean) * (v - res.mean);
        res.std_dev = std::sqrt(ss / static_cast<double>(reps - 1));
        res.std_error = res.std_dev / std::sqrt(static_cast<double>(reps));
    }
    return res;
}

}  // namespace dalp::queue
