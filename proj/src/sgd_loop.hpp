#pragma once

#include "dalp/random.hpp"
#include "dalp/trace.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace dalp::detail {

/// Iteration t (1-based) at which the schedule has been halved floor((t-1)/every) times.
inline double scheduled_step(double base, std::size_t halve_every, std::size_t t) {
    if (halve_every == 0) return base;
    return std::ldexp(base, -static_cast<int>(std::min<std::size_t>((t - 1) / halve_every, 1000)));
}

inline std::size_t resolved_stride(const SgdOptions& opt) {
    return opt.trace_stride > 0 ? opt.trace_stride : std::max<std::size_t>(1, opt.iterations / 1000);
}

/**
 * Generic projected stochastic subgradient loop.
 *
 * Problem must provide
 *   dim(), loss_gradient() -> span of l^T Phi,
 *   add_penalty_draw(theta, rng, acc)   adds the sampled penalty part of one draw,
 *   project(theta)                      in place,
 *   objective(theta), violation(theta, rng), policy(theta).
 */
template <class Problem>
RunTrace run_sgd(const Problem& problem, const SgdOptions& opt, double step, const EvalHook& eval_hook) {
    const std::size_t d = problem.dim();
    Rng rng = make_rng(opt.seed, 0);
    Rng trace_rng = make_rng(opt.seed, 1);
    const std::size_t stride = resolved_stride(opt);
    const auto loss_grad = problem.loss_gradient();

    RunTrace trace;
    trace.step_size = step;
    trace.iterations = opt.iterations;

    std::vector<double> theta(d, 0.0);
    std::vector<double> sum(d, 0.0);
    std::vector<double> penalty(d, 0.0);
    std::vector<double> average(d, 0.0);
    const double inv_batch = 1.0 / static_cast<double>(opt.minibatch);

    for (std::size_t t = 1; t <= opt.iterations; ++t) {
        for (std::size_t j = 0; j < d; ++j) sum[j] += theta[j];
        if (opt.keep_iterates) trace.iterates.push_back(theta);

        if (t % stride == 0 || t == opt.iterations) {
            const double inv_t = 1.0 / static_cast<double>(t);
            for (std::size_t j = 0; j < d; ++j) average[j] = sum[j] * inv_t;
            TraceRow row;
            row.t = t;
            row.objective = problem.objective(average);
            row.v_hat = problem.violation(average, trace_rng);
            if (eval_hook) row.eval_cost = eval_hook(problem.policy(average), average);
            trace.rows.push_back(row);
        }
        if (t == opt.iterations) break;

        std::fill(penalty.begin(), penalty.end(), 0.0);
        for (std::size_t b = 0; b < opt.minibatch; ++b) problem.add_penalty_draw(theta, rng, penalty);
        const double eta = scheduled_step(step, opt.halve_every, t);
        for (std::size_t j = 0; j < d; ++j) theta[j] -= eta * (loss_grad[j] + inv_batch * penalty[j]);
        problem.project(theta);
    }

    const double inv_t = 1.0 / static_cast<double>(opt.iterations);
    for (std::size_t j = 0; j < d; ++j) average[j] = sum[j] * inv_t;
    trace.theta = average;
    trace.policy = problem.policy(average);
    return trace;
}

}  // namespace dalp::detail
