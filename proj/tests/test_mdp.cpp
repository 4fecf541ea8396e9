#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "dalp/error.hpp"
#include "dalp/mdp.hpp"

#include <cmath>

using namespace dalp;

namespace {

using E = MdpModel::Entry;

MdpModel two_state_chain(double loss0, double loss1) {
    std::vector<E> e = {{0, 0, 0, 0.9}, {0, 0, 1, 0.1}, {1, 0, 0, 0.2}, {1, 0, 1, 0.8}};
    return MdpModel(2, 1, {loss0, loss1}, e);
}

}  // namespace

TEST_CASE("model validation and reverse transitions") {
    std::vector<E> bad = {{0, 0, 0, 0.5}, {0, 0, 1, 0.4}, {1, 0, 1, 1.0}};
    CHECK_THROWS_AS(MdpModel(2, 1, {0.1, 0.1}, bad), ParameterError);
    std::vector<E> ok = {{0, 0, 0, 1.0}, {1, 0, 1, 1.0}};
    CHECK_THROWS_AS(MdpModel(2, 1, {0.1, 1.5}, ok), ParameterError);
    CHECK_THROWS_AS(MdpModel(2, 1, {0.1}, ok), ShapeError);

    // Duplicates merge, zeros vanish.
    std::vector<E> dup = {{0, 0, 1, 0.25}, {0, 0, 0, 0.0}, {0, 0, 1, 0.75}, {1, 0, 0, 1.0}};
    MdpModel m(2, 1, {0.0, 0.0}, dup);
    REQUIRE(m.transitions(0, 0).size() == 1);
    CHECK(m.transitions(0, 0)[0].prob == doctest::Approx(1.0));

    std::mt19937_64 rng(3);
    const auto r = oracle::random_mdp(7, 3, rng, 4);
    std::size_t forward = 0, backward = 0;
    for (std::size_t i = 0; i < r.num_pairs(); ++i) {
        double total = 0.0;
        for (const auto& t : r.transitions(i)) {
            total += t.prob;
            bool found = false;
            for (const auto& p : r.predecessors(t.next))
                if (p.pair == i && p.prob == t.prob) found = true;
            CHECK(found);
            ++forward;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    for (std::size_t x = 0; x < r.num_states(); ++x) backward += r.predecessors(x).size();
    CHECK(forward == backward);
}

TEST_CASE("policy_from_occupancy") {
    const auto p = policy_from_occupancy(1, 3, std::vector<double>{0.2, 0.6, 0.2});
    CHECK(p.prob(0, 0) == doctest::Approx(0.2));
    CHECK(p.prob(0, 1) == doctest::Approx(0.6));
    const auto q = policy_from_occupancy(1, 2, std::vector<double>{-1.0, -2.0});
    CHECK(q.prob(0, 0) == 0.5);
    CHECK(q.prob(0, 1) == 0.5);
    const auto r = policy_from_occupancy(1, 3, std::vector<double>{-0.1, 0.3, 0.1});
    CHECK(r.prob(0, 0) == 0.0);
    CHECK(r.prob(0, 1) == doctest::Approx(0.75));
    CHECK(r.prob(0, 2) == doctest::Approx(0.25));
    CHECK_THROWS_AS(policy_from_occupancy(2, 2, std::vector<double>{1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("induced_chain") {
    SUBCASE("uniform over two deterministic actions averages the targets") {
        std::vector<E> e = {{0, 0, 1, 1.0}, {0, 1, 2, 1.0}, {1, 0, 1, 1.0}, {1, 1, 1, 1.0},
                            {2, 0, 2, 1.0}, {2, 1, 2, 1.0}};
        MdpModel m(3, 2, std::vector<double>(6, 0.0), e);
        const auto k = induced_chain(m, Policy::uniform(3, 2));
        const std::vector<double> h = {0.0, 1.0, 2.0};
        CHECK(k.right_multiply(h)[0] == doctest::Approx(1.5));  // 0.5 * 1 + 0.5 * 2

        const std::vector<std::size_t> acts = {1, 0, 0};
        const auto d = induced_chain(m, Policy::deterministic(2, acts));
        for (std::size_t x = 0; x < 3; ++x) CHECK(d.row_ptr[x + 1] - d.row_ptr[x] == 1);
    }
    SUBCASE("matches the dense product") {
        std::mt19937_64 rng(11);
        const auto m = oracle::random_mdp(4, 3, rng);
        const auto pi = oracle::random_policy(4, 3, rng);
        const auto dense = oracle::chain(m, pi);
        const auto k = induced_chain(m, pi);
        for (std::size_t x = 0; x < 4; ++x) {
            std::vector<double> ex(4, 0.0);
            ex[x] = 1.0;
            const auto row = k.left_multiply(ex);
            for (std::size_t y = 0; y < 4; ++y)
                CHECK(std::abs(row[y] - dense(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y))) <= 1e-14);
        }
    }
}

TEST_CASE("stationary_distribution") {
    std::vector<E> sym = {{0, 0, 0, 0.5}, {0, 0, 1, 0.5}, {1, 0, 0, 0.5}, {1, 0, 1, 0.5}};
    const auto mu = stationary_distribution(MdpModel(2, 1, {0.0, 0.0}, sym), Policy::uniform(2, 1));
    CHECK(mu[0] == doctest::Approx(0.5).epsilon(1e-10));

    const auto m = two_state_chain(0.9, 0.0);
    const auto nu = stationary_distribution(m, Policy::uniform(2, 1));
    CHECK(std::abs(nu[0] - 2.0 / 3.0) <= 1e-9);
    CHECK(std::abs(nu[1] - 1.0 / 3.0) <= 1e-9);

    // Periodic chain: the lazy iteration still converges.
    std::vector<E> flip = {{0, 0, 1, 1.0}, {1, 0, 0, 1.0}};
    const auto f = stationary_distribution(MdpModel(2, 1, {0.0, 0.0}, flip), Policy::uniform(2, 1));
    CHECK(f[0] == doctest::Approx(0.5));

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const auto r = oracle::random_mdp(8, 2, rng, 3);
        const auto pi = oracle::random_policy(8, 2, rng);
        const auto s = stationary_distribution(r, pi, 1e-10);
        const auto p = oracle::chain(r, pi);
        const oracle::VectorXd v = oracle::to_eigen(s);
        CHECK((p.transpose() * v - v).cwiseAbs().sum() <= 1e-10);
        CHECK(std::abs(v.sum() - 1.0) <= 1e-12);
        CHECK((oracle::stationary(p) - v).cwiseAbs().sum() <= 1e-8);
    }

    // Slow mixing with an iteration budget far too small.
    std::vector<E> slow = {{0, 0, 0, 0.999}, {0, 0, 1, 0.001}, {1, 0, 1, 0.998}, {1, 0, 0, 0.002}};
    MdpModel sm(2, 1, {0.0, 0.0}, slow);
    CHECK_THROWS_AS(stationary_distribution(sm, Policy::uniform(2, 1), 1e-14, 3), ConvergenceError);
}

TEST_CASE("average_cost") {
    std::mt19937_64 rng(2);
    auto r = oracle::random_mdp(5, 2, rng);
    std::vector<E> entries;
    for (std::size_t i = 0; i < r.num_pairs(); ++i)
        for (const auto& t : r.transitions(i)) entries.push_back({i / 2, i % 2, t.next, t.prob});
    MdpModel flat(5, 2, std::vector<double>(10, 0.3), entries);
    CHECK(average_cost(flat, oracle::random_policy(5, 2, rng)) == doctest::Approx(0.3).epsilon(1e-10));

    CHECK(std::abs(average_cost(two_state_chain(0.9, 0.0), Policy::uniform(2, 1)) - 0.6) <= 1e-9);

    std::vector<E> one = {{0, 0, 0, 1.0}, {0, 1, 0, 1.0}};
    const std::vector<std::size_t> a0 = {0};
    CHECK(average_cost(MdpModel(1, 2, {0.2, 0.7}, one), Policy::deterministic(2, a0)) == doctest::Approx(0.2));
}

TEST_CASE("value_function and discounted_visits") {
    std::vector<E> one = {{0, 0, 0, 1.0}};
    MdpModel single(1, 1, {0.5}, one);
    CHECK(value_function(single, Policy::uniform(1, 1), 0.9)[0] == doctest::Approx(5.0).epsilon(1e-10));
    const std::vector<double> alpha1 = {1.0};
    CHECK(discounted_visits(single, Policy::uniform(1, 1), 0.9, alpha1)[0] == doctest::Approx(10.0).epsilon(1e-10));
    CHECK_THROWS_AS(value_function(single, Policy::uniform(1, 1), 1.0), ParameterError);
    CHECK_THROWS_AS(value_function(single, Policy::uniform(1, 1), 0.0), ParameterError);

    std::mt19937_64 rng(8);
    const auto zero_loss = [&] {
        const auto r = oracle::random_mdp(4, 2, rng);
        std::vector<E> entries;
        for (std::size_t i = 0; i < r.num_pairs(); ++i)
            for (const auto& t : r.transitions(i)) entries.push_back({i / 2, i % 2, t.next, t.prob});
        return MdpModel(4, 2, std::vector<double>(8, 0.0), entries);
    }();
    for (double v : value_function(zero_loss, Policy::uniform(4, 2), 0.9)) CHECK(v == 0.0);

    const auto m5 = oracle::random_mdp(5, 3, rng);
    const auto pi5 = oracle::random_policy(5, 3, rng);
    const auto j = value_function(m5, pi5, 0.95);
    const auto ref = oracle::values(m5, pi5, 0.95);
    for (std::size_t x = 0; x < 5; ++x) CHECK(std::abs(j[x] - ref(static_cast<Eigen::Index>(x))) <= 1e-8);

    const auto m4 = oracle::random_mdp(4, 2, rng);
    const auto pi4 = oracle::random_policy(4, 2, rng);
    const std::vector<double> alpha = {0.1, 0.2, 0.3, 0.4};
    const auto nu = discounted_visits(m4, pi4, 0.8, alpha);
    const auto nu_ref = oracle::visits(m4, pi4, 0.8, oracle::to_eigen(alpha));
    for (std::size_t i = 0; i < nu.size(); ++i) CHECK(std::abs(nu[i] - nu_ref(static_cast<Eigen::Index>(i))) <= 1e-8);

    double lnu = 0.0, total = 0.0;
    for (std::size_t i = 0; i < nu.size(); ++i) {
        lnu += m4.loss()[i] * nu[i];
        total += nu[i];
    }
    const auto j4 = value_function(m4, pi4, 0.8);
    double aj = 0.0;
    for (std::size_t x = 0; x < 4; ++x) aj += alpha[x] * j4[x];
    CHECK(std::abs(lnu - aj) <= 1e-8);
    CHECK(std::abs(total - 5.0) <= 1e-8);
}

TEST_CASE("bellman operators") {
    std::mt19937_64 rng(21);
    const auto m = oracle::random_mdp(6, 3, rng);
    const std::vector<double> zero(6, 0.0);
    const auto l0 = bellman_average(m, zero);
    const auto d0 = bellman_discounted(m, zero, 0.9);
    for (std::size_t x = 0; x < 6; ++x) {
        const double best = std::min({m.loss(x, 0), m.loss(x, 1), m.loss(x, 2)});
        CHECK(l0[x] == best);
        CHECK(d0[x] == best);
    }

    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> h(6);
    for (double& v : h) v = unit(rng);

    auto brute = [&](double gamma) {
        std::vector<double> out(6);
        for (std::size_t x = 0; x < 6; ++x) {
            double best = 1e300;
            for (std::size_t a = 0; a < 3; ++a) {
                double q = m.loss(x, a);
                for (std::size_t y = 0; y < 6; ++y)
                    q += gamma * oracle::pair_kernel(m)(static_cast<Eigen::Index>(x * 3 + a), static_cast<Eigen::Index>(y)) * h[y];
                best = std::min(best, q);
            }
            out[x] = best;
        }
        return out;
    };
    const auto ba = bellman_average(m, h);
    const auto bd = bellman_discounted(m, h, 0.7);
    const auto ra = brute(1.0), rd = brute(0.7);
    for (std::size_t x = 0; x < 6; ++x) {
        CHECK(std::abs(ba[x] - ra[x]) <= 1e-13);
        CHECK(std::abs(bd[x] - rd[x]) <= 1e-13);
    }

    // gamma = 0 ignores J.
    const auto g0 = bellman_discounted(m, h, 0.0);
    for (std::size_t x = 0; x < 6; ++x) CHECK(g0[x] == l0[x]);

    // Monotonicity and constant shifts.
    std::vector<double> h2 = h, shifted = h;
    for (std::size_t x = 0; x < 6; ++x) {
        h2[x] += std::abs(unit(rng));
        shifted[x] += 0.3;
    }
    const auto ba2 = bellman_average(m, h2);
    const auto bd2 = bellman_discounted(m, h2, 0.7);
    const auto bas = bellman_average(m, shifted);
    const auto bds = bellman_discounted(m, shifted, 0.7);
    for (std::size_t x = 0; x < 6; ++x) {
        CHECK(ba2[x] >= ba[x]);
        CHECK(bd2[x] >= bd[x]);
        CHECK(std::abs(bas[x] - ba[x] - 0.3) <= 1e-12);
        CHECK(std::abs(bds[x] - bd[x] - 0.7 * 0.3) <= 1e-12);
    }
}

TEST_CASE("solve_optimal") {
    SUBCASE("single action") {
        const auto m = two_state_chain(0.9, 0.0);
        const auto sol = solve_optimal_average(m);
        REQUIRE(sol.gain.has_value());
        CHECK(std::abs(*sol.gain - 0.6) <= 1e-8);
    }
    SUBCASE("dominating action") {
        std::vector<E> e = {{0, 0, 0, 0.3}, {0, 0, 1, 0.7}, {0, 1, 0, 0.3}, {0, 1, 1, 0.7},
                            {1, 0, 0, 0.6}, {1, 0, 1, 0.4}, {1, 1, 0, 0.6}, {1, 1, 1, 0.4}};
        MdpModel m(2, 2, {0.5, 0.1, 0.8, 0.2}, e);
        for (const auto& sol : {solve_optimal_average(m), solve_optimal_discounted(m, 0.9)})
            for (std::size_t x = 0; x < 2; ++x) CHECK(sol.policy.prob(x, 1) == 1.0);
    }
    SUBCASE("exhaustive enumeration") {
        std::mt19937_64 rng(13);
        const auto m = oracle::random_mdp(6, 2, rng);
        const double gamma = 0.9;
        const auto sol = solve_optimal_discounted(m, gamma, 1e-11);
        std::vector<double> best(6, 1e300);
        for (std::size_t code = 0; code < 64; ++code) {
            std::vector<std::size_t> acts(6);
            for (std::size_t x = 0; x < 6; ++x) acts[x] = (code >> x) & 1u;
            const auto v = oracle::values(m, Policy::deterministic(2, acts), gamma);
            for (std::size_t x = 0; x < 6; ++x) best[x] = std::min(best[x], v(static_cast<Eigen::Index>(x)));
        }
        const auto mine = oracle::values(m, sol.policy, gamma);
        for (std::size_t x = 0; x < 6; ++x) {
            CHECK(std::abs(sol.values[x] - best[x]) <= 1e-8);
            CHECK(std::abs(mine(static_cast<Eigen::Index>(x)) - best[x]) <= 1e-8);
        }

        // Average criterion: best deterministic gain by enumeration.
        const auto avg = solve_optimal_average(m, 1e-11);
        double best_gain = 1e300;
        for (std::size_t code = 0; code < 64; ++code) {
            std::vector<std::size_t> acts(6);
            for (std::size_t x = 0; x < 6; ++x) acts[x] = (code >> x) & 1u;
            const auto pi = Policy::deterministic(2, acts);
            const oracle::VectorXd mu = oracle::stationary(oracle::chain(m, pi));
            best_gain = std::min(best_gain, mu.dot(oracle::policy_matrix(pi) * oracle::loss_vector(m)));
        }
        CHECK(std::abs(*avg.gain - best_gain) <= 1e-8);
        // Greedy with respect to its own h, residual within tolerance.
        const auto th = bellman_average(m, avg.values);
        for (std::size_t x = 0; x < 6; ++x) CHECK(std::abs(th[x] - avg.values[x] - *avg.gain) <= 1e-8);
    }
}

TEST_CASE("contraction_diagnostic") {
    std::vector<E> same = {{0, 0, 0, 0.3}, {0, 0, 1, 0.7}, {1, 0, 0, 0.3}, {1, 0, 1, 0.7}};
    CHECK(contraction_diagnostic(MdpModel(2, 1, {0.0, 0.0}, same), Policy::uniform(2, 1)) == doctest::Approx(0.0));
    std::vector<E> id = {{0, 0, 0, 1.0}, {1, 0, 1, 1.0}, {2, 0, 2, 1.0}};
    CHECK(contraction_diagnostic(MdpModel(3, 1, {0.0, 0.0, 0.0}, id), Policy::uniform(3, 1)) == doctest::Approx(1.0));

    std::mt19937_64 rng(17);
    const auto m = oracle::random_mdp(4, 2, rng, 3);
    const auto pi = oracle::random_policy(4, 2, rng);
    const auto p = oracle::chain(m, pi);
    double ref = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) ref = std::max(ref, 0.5 * (p.row(i) - p.row(j)).cwiseAbs().sum());
    CHECK(std::abs(contraction_diagnostic(m, pi) - ref) <= 1e-14);
}
