#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dalp/error.hpp"
#include "dalp/queue.hpp"

#include <cmath>
#include <map>

using namespace dalp;
using namespace dalp::queue;

namespace {

QueueNetSpec tiny() {
    QueueNetSpec s;
    s.buffers = {2, 2, 2, 2};
    s.arrival1 = 0.3;
    s.arrival3 = 0.4;
    s.service = {0.5, 0.6, 0.7, 0.8};
    return s;
}

// Independent reference for one row: enumerate the 64 Bernoulli outcomes directly.
// A departure from an empty queue moves nothing downstream.
std::map<std::size_t, double> reference_row(const QueueNetSpec& spec, const QueueState& s, JointAction act) {
    std::map<std::size_t, double> row;
    const auto mask = act.service_mask();
    const double pa[2] = {spec.arrival1, spec.arrival3};
    for (int bits = 0; bits < 64; ++bits) {
        double p = 1.0;
        const int a1 = bits & 1, a3 = (bits >> 1) & 1;
        p *= a1 ? pa[0] : 1 - pa[0];
        p *= a3 ? pa[1] : 1 - pa[1];
        int d[4];
        for (int i = 0; i < 4; ++i) {
            d[i] = (bits >> (2 + i)) & 1;
            const double q = spec.service[i] * mask[i];
            p *= d[i] ? q : 1 - q;
            d[i] &= s.lengths[i] > 0;
        }
        if (p == 0.0) continue;
        const int raw[4] = {s.lengths[0] + a1 - d[0], s.lengths[1] + d[0] - d[1], s.lengths[2] + a3 - d[2],
                            s.lengths[3] + d[2] - d[3]};
        QueueState n;
        for (int i = 0; i < 4; ++i) n.lengths[i] = std::clamp(raw[i], 0, spec.buffers[i]);
        row[encode(spec, n)] += p;
    }
    return row;
}

}  // namespace

TEST_CASE("state encoding") {
    const auto spec = QueueNetSpec::desk();
    CHECK(spec.num_states() == 4900);
    for (std::size_t i = 0; i < spec.num_states(); ++i) CHECK(encode(spec, decode(spec, i)) == i);
    CHECK(encode(spec, QueueState{{1, 0, 0, 0}}) == 1);
    CHECK(encode(spec, QueueState{{0, 1, 0, 0}}) == 10);
    CHECK(QueueNetSpec::paper().num_states() == 39u * 26 * 26 * 39);

    for (std::size_t a = 0; a < kNumActions; ++a) CHECK(JointAction::from_index(a).index() == a);
    auto bad = spec;
    bad.buffers[2] = 0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = spec;
    bad.service[0] = 1.5;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("exact transitions") {
    const auto spec = tiny();
    const auto m = build_mdp(spec);
    CHECK(m.num_states() == 81);
    CHECK(m.num_actions() == 4);
    for (std::size_t x = 0; x < m.num_states(); ++x) {
        const auto s = decode(spec, x);
        for (std::size_t a = 0; a < 4; ++a) {
            CHECK(m.loss()[m.pair_index(x, a)] == doctest::Approx(s.total() / 8.0).epsilon(1e-15));
            double total = 0.0;
            const auto ref = reference_row(spec, s, JointAction::from_index(a));
            std::size_t n = 0;
            for (const auto& t : m.transitions(m.pair_index(x, a))) {
                total += t.prob;
                REQUIRE(ref.count(t.next) == 1);
                CHECK(std::abs(ref.at(t.next) - t.prob) <= 1e-15);
                ++n;
            }
            CHECK(n == ref.size());
            CHECK(std::abs(total - 1.0) <= 1e-12);
        }
    }

    // Empty network with no arrivals stays empty.
    const std::size_t empty = encode(spec, QueueState{});
    double stay = 0.0;
    for (const auto& t : m.transitions(m.pair_index(empty, 0)))
        if (t.next == empty) stay = t.prob;
    CHECK(std::abs(stay - (1 - 0.3) * (1 - 0.4)) <= 1e-15);

    // Full queue 1 with an arrival and no departure stays full.
    const std::size_t full = encode(spec, QueueState{{2, 0, 0, 0}});
    double kept = 0.0;
    for (const auto& t : m.transitions(m.pair_index(full, JointAction{1, 0}.index()))) {
        const auto n = decode(spec, t.next);
        CHECK(n.lengths[0] <= 2);
        if (n.lengths[0] == 2 && n.lengths[2] == 0) kept += t.prob;
    }
    CHECK(std::abs(kept - (1 - 0.4)) <= 1e-15);

    CHECK_THROWS_AS(build_mdp(QueueNetSpec::paper()), CapacityError);
}

TEST_CASE("simulated step") {
    const auto spec = tiny();
    const auto m = build_mdp(spec);
    const QueueState s{{1, 2, 0, 1}};
    for (std::size_t a = 0; a < 4; ++a) {
        const auto act = JointAction::from_index(a);
        Rng rng = make_rng(21, a);
        std::map<std::size_t, double> counts;
        const int n = 100000;
        for (int i = 0; i < n; ++i) counts[encode(spec, step(spec, s, act, rng))] += 1.0;
        for (const auto& t : m.transitions(m.pair_index(encode(spec, s), a))) {
            const double expect = n * t.prob;
            CHECK(std::abs(counts[t.next] - expect) <= 3.0 * std::sqrt(expect * (1 - t.prob)) + 1e-9);
            counts.erase(t.next);
        }
        CHECK(counts.empty());
    }

    Rng r1 = make_rng(3, 0), r2 = make_rng(3, 0);
    QueueState a = s, b = s;
    for (int i = 0; i < 1000; ++i) {
        a = step(spec, a, JointAction{i % 2, 0}, r1);
        b = step(spec, b, JointAction{i % 2, 0}, r2);
        CHECK(a == b);
    }

    auto still = spec;
    still.arrival1 = still.arrival3 = 0.0;
    still.service = {0, 0, 0, 0};
    Rng r = make_rng(4, 0);
    CHECK(step(still, s, JointAction{0, 1}, r) == s);
}

TEST_CASE("heuristic policies") {
    using H = Heuristic;
    auto p = heuristic_action_probs(H::longer, QueueState{{3, 1, 2, 1}});
    CHECK(p[JointAction{0, 1}.index()] == 1.0);
    p = heuristic_action_probs(H::lbfs, QueueState{{4, 0, 5, 2}});
    CHECK(p[JointAction{1, 1}.index()] == 1.0);
    p = heuristic_action_probs(H::longer, QueueState{{2, 3, 1, 2}});
    CHECK(p[JointAction{0, 0}.index()] == 0.5);
    CHECK(p[JointAction{1, 0}.index()] == 0.5);
    p = heuristic_action_probs(H::lbfs, QueueState{{1, 1, 1, 1}});
    CHECK(p[JointAction{1, 0}.index()] == 1.0);

    const auto spec = QueueNetSpec::desk();
    for (auto kind : {H::longer, H::lbfs}) {
        const auto pi = heuristic_policy(spec, kind);
        for (std::size_t x = 0; x < spec.num_states(); ++x) {
            double total = 0.0;
            int support = 0;
            for (std::size_t a = 0; a < 4; ++a) {
                total += pi.prob(x, a);
                support += pi.prob(x, a) > 0.0;
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
            if (kind == H::lbfs) CHECK(support == 1);
        }
    }
    CHECK(to_string(H::lbfs) == "LBFS");
    CHECK(heuristic_from_string("LONGER") == H::longer);
    CHECK_THROWS_AS(heuristic_from_string("fifo"), ConfigError);
}

TEST_CASE("benchmark features") {
    const auto spec = QueueNetSpec::desk();
    const auto m = build_mdp(spec);
    const auto opts = FeatureOptions::desk();
    const auto fs = build_features(spec, m, opts);
    CHECK(fs.dim() == 10 * 4 + 81 * 4 + 2);
    CHECK(fs.dropped().empty());
    for (std::size_t j = 0; j < fs.dim(); ++j) {
        double total = 0.0;
        for (const auto& e : fs.column(j).entries) {
            CHECK(e.value >= 0.0);
            total += e.value;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }

    // Total length 7 (bucket {7..9}) with action 0 hits exactly one loss-interval column.
    const std::size_t x = encode(spec, QueueState{{3, 2, 1, 1}});
    int hits = 0;
    for (std::size_t j = 2; j < 2 + 40; ++j)
        for (const auto& e : fs.column(j).entries)
            if (e.index == m.pair_index(x, 0)) {
                ++hits;
                CHECK(j == 2 + 2 * 4 + 0);
            }
    CHECK(hits == 1);

    // Exact heuristic stationary columns are drift-free.
    for (std::size_t j = 0; j < 2; ++j) {
        std::vector<double> e(fs.dim(), 0.0);
        e[j] = 1.0;
        double drift = 0.0;
        for (std::size_t y = 0; y < m.num_states(); ++y) drift += std::abs(dot(fs.drift_column(m, y, 1.0), e));
        CHECK(drift <= 1e-7);
    }
}

TEST_CASE("simulated policy evaluation") {
    auto quiet = QueueNetSpec::desk();
    quiet.arrival1 = quiet.arrival3 = 0.0;
    const auto pi0 = heuristic_policy(quiet, Heuristic::longer);
    CHECK(evaluate_policy_simulated(quiet, pi0, 5000, 100, 2, 1).mean == 0.0);

    const auto spec = QueueNetSpec::desk();
    const auto m = build_mdp(spec);
    for (auto kind : {Heuristic::longer, Heuristic::lbfs}) {
        const auto pi = heuristic_policy(spec, kind);
        const double exact = average_cost(m, pi) * spec.total_capacity();
        const auto sim = evaluate_policy_simulated(spec, pi, 200000, 10000, 8, 5);
        CHECK(std::abs(sim.mean - exact) <= 3.0 * sim.std_error);
        const auto again = evaluate_policy_simulated(spec, pi, 200000, 10000, 8, 5);
        CHECK(again.mean == sim.mean);
    }
}
