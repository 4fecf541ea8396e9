#include "dalp/avg_solver.hpp"

#include "dalp/error.hpp"
#include "sgd_loop.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dalp {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_theta(const FeatureSpace& fs, std::span<const double> theta) {
    if (theta.size() != fs.dim()) {
        throw ShapeError("theta has " + std::to_string(theta.size()) + " entries, expected " +
                         std::to_string(fs.dim()));
    }
}

void check_capacity(const FeatureSpace& fs) {
    if (fs.num_pairs() > kExactCapacity) throw CapacityError("exact surrogate evaluation exceeds capacity");
}

/// Penalty part of one draw, scaled by H, added into acc.
void add_avg_penalty(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp, double penalty,
                     std::span<const double> theta, std::size_t pair, std::size_t state, std::span<double> acc) {
    const double q_pair = sp.q_sa(pair);
    const double q_state = sp.q_s(state);
    if (!(q_pair > 0.0)) throw InvariantError("sampled a pair with zero probability");
    if (!(q_state > 0.0)) throw InvariantError("sampled a state with zero probability");
    const SparseRow& row = fs.row(pair);
    const double u = fs.mu0()[pair] + dot(row, theta);
    if (u < 0.0) {
        const double w = penalty / q_pair;
        for (const auto& e : row) acc[e.index] -= w * e.value;
    }
    const SparseRow& col = fs.drift_column(model, state, 1.0);
    const double s = sgn(dot(col, theta));
    if (s != 0.0) {
        const double w = penalty * s / q_state;
        for (const auto& e : col) acc[e.index] += w * e.value;
    }
}

class AvgProblem {
public:
    AvgProblem(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp, const AvgSolverConfig& cfg)
        : model_(model), fs_(fs), sp_(sp), cfg_(cfg) {}

    std::size_t dim() const { return fs_.dim(); }
    std::span<const double> loss_gradient() const { return fs_.loss_phi(); }

    void add_penalty_draw(std::span<const double> theta, Rng& rng, std::span<double> acc) const {
        const std::size_t pair = sp_.sample_pair(rng);
        const std::size_t state = sp_.sample_state(rng);
        add_avg_penalty(model_, fs_, sp_, cfg_.penalty, theta, pair, state, acc);
    }

    void project(std::vector<double>& theta) const { theta = project_theta_avg(theta, cfg_.radius, 1.0); }

    double objective(std::span<const double> theta) const {
        double v = std::inner_product(fs_.loss_phi().begin(), fs_.loss_phi().end(), theta.begin(), 0.0);
        const auto loss = model_.loss();
        const auto mu0 = fs_.mu0();
        if (fs_.has_mu0()) v += std::inner_product(loss.begin(), loss.end(), mu0.begin(), 0.0);
        return v;
    }

    double violation(std::span<const double> theta, Rng& rng) const {
        if (cfg_.trace_violation_samples == 0 && fs_.num_pairs() <= kExactCapacity) {
            return violations_exact(model_, fs_, theta).total();
        }
        const std::size_t n = cfg_.trace_violation_samples > 0 ? cfg_.trace_violation_samples : 1000;
        return estimate_violations(model_, fs_, sp_, theta, n, rng);
    }

    Policy policy(std::span<const double> theta) const {
        return policy_from_occupancy(fs_.num_states(), fs_.num_actions(), fs_.occupancy(theta));
    }

private:
    const MdpModel& model_;
    const FeatureSpace& fs_;
    const SamplingPair& sp_;
    const AvgSolverConfig& cfg_;
};

}  // namespace

void AvgSolverConfig::validate(std::size_t dim) const {
    if (!(penalty > 0.0)) throw ParameterError("penalty H must be positive");
    if (!(radius * radius * static_cast<double>(dim) >= 1.0 - 1e-12)) {
        throw ParameterError("radius S must be at least 1/sqrt(d) so that the hyperplane meets the ball");
    }
    if (iterations == 0) throw ParameterError("iteration count T must be at least 1");
    if (minibatch == 0) throw ParameterError("minibatch must be at least 1");
    if (step_size && !(*step_size >= 0.0)) throw ParameterError("step size must be nonnegative");
    if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
}

AvgViolations violations_exact(const MdpModel& model, const FeatureSpace& fs, std::span<const double> theta) {
    check_theta(fs, theta);
    check_capacity(fs);
    AvgViolations v;
    for (std::size_t p = 0; p < fs.num_pairs(); ++p) {
        const double u = fs.mu0()[p] + dot(fs.row(p), theta);
        if (u < 0.0) v.negativity -= u;
    }
    for (std::size_t x = 0; x < fs.num_states(); ++x) v.stationarity += std::abs(dot(fs.drift_column(model, x, 1.0), theta));
    return v;
}

double surrogate_cost_exact(const MdpModel& model, const FeatureSpace& fs, double penalty,
                            std::span<const double> theta) {
    check_theta(fs, theta);
    check_capacity(fs);
    const OccupancyVector u = fs.occupancy(theta);
    const auto loss = model.loss();
    const double linear = std::inner_product(loss.begin(), loss.end(), u.begin(), 0.0);
    return linear + penalty * violations_exact(model, fs, theta).total();
}

std::vector<double> subgradient_sample(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                                       double penalty, std::span<const double> theta, std::size_t pair,
                                       std::size_t state) {
    check_theta(fs, theta);
    std::vector<double> g(fs.loss_phi().begin(), fs.loss_phi().end());
    add_avg_penalty(model, fs, sp, penalty, theta, pair, state, g);
    return g;
}

std::vector<double> subgradient_estimate(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                                         double penalty, std::span<const double> theta, Rng& rng) {
    const std::size_t pair = sp.sample_pair(rng);
    const std::size_t state = sp.sample_state(rng);
    return subgradient_sample(model, fs, sp, penalty, theta, pair, state);
}

std::vector<double> project_theta_avg(std::span<const double> theta, double radius, double sum_target) {
    const std::size_t d = theta.size();
    if (d == 0) throw ShapeError("theta is empty");
    const double dd = static_cast<double>(d);
    const double center = sum_target / dd;
    const double disc2 = radius * radius - sum_target * sum_target / dd;
    if (disc2 < -1e-12 * std::max(1.0, radius * radius)) {
        throw ParameterError("radius is too small for the hyperplane sum(theta) = " + std::to_string(sum_target));
    }
    const double disc = std::sqrt(std::max(disc2, 0.0));
    const double shift = (std::accumulate(theta.begin(), theta.end(), 0.0) - sum_target) / dd;
    std::vector<double> out(d);
    double dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        out[j] = theta[j] - shift - center;  // offset from the disc center
        dist2 += out[j] * out[j];
    }
    const double dist = std::sqrt(dist2);
    const double scale = dist > disc ? disc / dist : 1.0;
    for (double& v : out) v = center + scale * v;
    return out;
}

double auto_step_size(std::size_t dim, const SamplingPair& sp, double penalty, double radius,
                      std::size_t iterations) {
    const double g = std::sqrt(static_cast<double>(dim)) + penalty * (sp.c_sa() + sp.c_s());
    return radius / (g * std::sqrt(static_cast<double>(iterations)));
}

RunTrace sgd_solve_avg(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                       const AvgSolverConfig& cfg, const EvalHook& eval_hook) {
    cfg.validate(fs.dim());
    const double step = cfg.step_size ? *cfg.step_size
                                      : auto_step_size(fs.dim(), sp, cfg.penalty, cfg.radius, cfg.iterations);
    AvgProblem problem(model, fs, sp, cfg);
    return detail::run_sgd(problem, cfg, step, eval_hook);
}

double violation_summand(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                         std::span<const double> theta, std::size_t pair, std::size_t state) {
    double s = 0.0;
    const double u = fs.mu0()[pair] + dot(fs.row(pair), theta);
    if (u < 0.0) {
        if (!(sp.q_sa(pair) > 0.0)) throw InvariantError("sampled a pair with zero probability");
        s += -u / sp.q_sa(pair);
    }
    const double r = std::abs(dot(fs.drift_column(model, state, 1.0), theta));
    if (r > 0.0) {
        if (!(sp.q_s(state) > 0.0)) throw InvariantError("sampled a state with zero probability");
        s += r / sp.q_s(state);
    }
    return s;
}

double estimate_violations(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                           std::span<const double> theta, std::size_t n, Rng& rng) {
    check_theta(fs, theta);
    if (n == 0) throw ParameterError("violation estimate needs at least one sample");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pair = sp.sample_pair(rng);
        const std::size_t state = sp.sample_state(rng);
        total += violation_summand(model, fs, sp, theta, pair, state);
    }
    return total / static_cast<double>(n);
}

double violation_summand_bound(const SamplingPair& sp, double radius) {
    return radius * (sp.c_sa() + 1.0) + radius * sp.c_s();
}

std::size_t violation_sample_size(const SamplingPair& sp, double radius, double epsilon, double delta) {
    const double b = violation_summand_bound(sp, radius);
    return static_cast<std::size_t>(std::ceil(b * b / (2.0 * epsilon * epsilon) * std::log(2.0 / delta)));
}

double default_avg_v_max(std::size_t dim, double radius) {
    return 3.0 + radius * (static_cast<double>(dim) + 2.0);
}

double default_avg_beta(double radius) { return 2.0 * (1.0 + radius); }

MetaResult meta_solve_avg(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                          const MetaAvgConfig& cfg, const EvalHook& eval_hook) {
    if (!(cfg.epsilon > 0.0)) throw ParameterError("epsilon must be positive");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
    const double v_max = cfg.v_max.value_or(default_avg_v_max(fs.dim(), cfg.radius));
    const double beta = cfg.beta.value_or(default_avg_beta(cfg.radius));

    MetaResult result;
    if (cfg.grid_points) {
        if (cfg.grid_points->empty()) throw ParameterError("explicit grid is empty");
        result.grid = HGrid{beta, v_max, cfg.epsilon, *cfg.grid_points};
    } else {
        result.grid = build_h_grid(v_max, beta, cfg.epsilon);
    }

    const double k = static_cast<double>(result.grid.points.size());
    const double eps2 = cfg.epsilon * cfg.epsilon;
    const double s = cfg.radius;
    const double b = s * (sp.c_sa() + 1.0) + s * sp.c_s();
    const auto n = static_cast<std::size_t>(std::ceil(8.0 * b * b / eps2 * std::log(4.0 * k / cfg.delta)));
    const double t_floor = 40.0 * s * s * std::log(k / cfg.delta);

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < result.grid.points.size(); ++i) {
        const double h = result.grid.points[i];
        AvgSolverConfig run;
        run.penalty = h;
        run.radius = s;
        run.iterations = static_cast<std::size_t>(std::ceil(std::max(h * h / eps2, t_floor)));
        run.iterations = std::max<std::size_t>(run.iterations, 1);
        run.minibatch = cfg.minibatch;
        run.seed = derive_seed(cfg.seed, 100, i);
        run.trace_stride = cfg.trace_stride;
        run.trace_violation_samples = cfg.trace_violation_samples;
        run.epsilon = cfg.epsilon;
        run.delta = cfg.delta;

        GridPointResult point;
        point.penalty = h;
        point.iterations = run.iterations;
        point.violation_samples = n;
        point.trace = sgd_solve_avg(model, fs, sp, run, eval_hook);
        const auto& theta = point.trace.theta;
        point.linear_objective =
            std::inner_product(fs.loss_phi().begin(), fs.loss_phi().end(), theta.begin(), 0.0);
        Rng rng = make_rng(cfg.seed, 200, i);
        point.v_hat = estimate_violations(model, fs, sp, theta, n, rng);
        point.selection_value = point.linear_objective + h * point.v_hat + beta / h;
        if (point.selection_value < best) {
            best = point.selection_value;
            result.chosen = i;
        }
        result.points.push_back(std::move(point));
    }
    return result;
}

}  // namespace dalp
