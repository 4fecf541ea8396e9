#include "dalp/disc_solver.hpp"

#include "dalp/error.hpp"
#include "sgd_loop.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dalp {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_alpha(std::span<const double> alpha, std::size_t num_states) {
    if (alpha.size() != num_states) throw ShapeError("alpha has wrong length");
    double total = 0.0;
    for (double a : alpha) {
        if (!(a >= 0.0)) throw ParameterError("alpha must be nonnegative");
        total += a;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ParameterError("alpha must sum to one");
}

void add_disc_penalty(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp, double penalty,
                      double gamma, std::span<const double> alpha, std::span<const double> theta, std::size_t pair,
                      std::size_t state, std::span<double> acc) {
    const double q_pair = sp.q_sa(pair);
    const double q_state = sp.q_s(state);
    if (!(q_pair > 0.0)) throw InvariantError("sampled a pair with zero probability");
    if (!(q_state > 0.0)) throw InvariantError("sampled a state with zero probability");
    const SparseRow& row = fs.row(pair);
    if (dot(row, theta) < 0.0) {
        const double w = penalty / q_pair;
        for (const auto& e : row) acc[e.index] -= w * e.value;
    }
    const SparseRow& col = fs.feasibility_column(model, state, gamma);
    const double s = sgn(dot(col, theta) - alpha[state]);
    if (s != 0.0 && !col.empty()) {
        const double w = penalty * s / q_state;
        for (const auto& e : col) acc[e.index] += w * e.value;
    }
}

class DiscProblem {
public:
    DiscProblem(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp, const DiscSolverConfig& cfg,
                std::span<const double> alpha)
        : model_(model), fs_(fs), sp_(sp), cfg_(cfg), alpha_(alpha) {}

    std::size_t dim() const { return fs_.dim(); }
    std::span<const double> loss_gradient() const { return fs_.loss_phi(); }

    void add_penalty_draw(std::span<const double> theta, Rng& rng, std::span<double> acc) const {
        const std::size_t pair = sp_.sample_pair(rng);
        const std::size_t state = sp_.sample_state(rng);
        add_disc_penalty(model_, fs_, sp_, cfg_.penalty, cfg_.gamma, alpha_, theta, pair, state, acc);
    }

    void project(std::vector<double>& theta) const {
        theta = cfg_.sum_constraint ? project_theta_avg(theta, cfg_.radius, 1.0 / (1.0 - cfg_.gamma))
                                    : project_theta_disc(theta, cfg_.radius);
    }

    double objective(std::span<const double> theta) const {
        return std::inner_product(fs_.loss_phi().begin(), fs_.loss_phi().end(), theta.begin(), 0.0);
    }

    double violation(std::span<const double> theta, Rng& rng) const {
        if (cfg_.trace_violation_samples == 0 && fs_.num_pairs() <= kExactCapacity) {
            return violations_exact_disc(model_, fs_, cfg_.gamma, alpha_, theta).total();
        }
        const std::size_t n = cfg_.trace_violation_samples > 0 ? cfg_.trace_violation_samples : 1000;
        return estimate_violations_disc(model_, fs_, sp_, cfg_.gamma, alpha_, theta, n, rng);
    }

    Policy policy(std::span<const double> theta) const {
        // The discounted policy map uses Phi theta without mu0.
        OccupancyVector u(fs_.num_pairs());
        for (std::size_t p = 0; p < u.size(); ++p) u[p] = dot(fs_.row(p), theta);
        return policy_from_occupancy(fs_.num_states(), fs_.num_actions(), u);
    }

private:
    const MdpModel& model_;
    const FeatureSpace& fs_;
    const SamplingPair& sp_;
    const DiscSolverConfig& cfg_;
    std::span<const double> alpha_;
};

}  // namespace

std::vector<double> uniform_alpha(std::size_t num_states) {
    return std::vector<double>(num_states, 1.0 / static_cast<double>(num_states));
}

void DiscSolverConfig::validate(std::size_t dim, std::size_t num_states) const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("discount factor must lie in (0, 1)");
    if (!alpha.empty()) check_alpha(alpha, num_states);
    if (!(penalty > 0.0)) throw ParameterError("penalty H must be positive");
    if (!(radius > 0.0)) throw ParameterError("radius S must be positive");
    if (sum_constraint) {
        const double target = 1.0 / (1.0 - gamma);
        if (radius * radius * static_cast<double>(dim) < target * target * (1.0 - 1e-12)) {
            throw ParameterError("radius too small for the sum constraint");
        }
    }
    if (iterations == 0) throw ParameterError("iteration count T must be at least 1");
    if (minibatch == 0) throw ParameterError("minibatch must be at least 1");
    if (step_size && !(*step_size >= 0.0)) throw ParameterError("step size must be nonnegative");
    if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
}

DiscViolations violations_exact_disc(const MdpModel& model, const FeatureSpace& fs, double gamma,
                                     std::span<const double> alpha, std::span<const double> theta) {
    if (theta.size() != fs.dim()) throw ShapeError("theta has wrong dimension");
    check_alpha(alpha, fs.num_states());
    if (fs.num_pairs() > kExactCapacity) throw CapacityError("exact surrogate evaluation exceeds capacity");
    DiscViolations v;
    for (std::size_t p = 0; p < fs.num_pairs(); ++p) {
        const double u = dot(fs.row(p), theta);
        if (u < 0.0) v.negativity -= u;
    }
    for (std::size_t x = 0; x < fs.num_states(); ++x) {
        v.feasibility += std::abs(dot(fs.feasibility_column(model, x, gamma), theta) - alpha[x]);
    }
    return v;
}

double surrogate_cost_exact_disc(const MdpModel& model, const FeatureSpace& fs, double penalty, double gamma,
                                 std::span<const double> alpha, std::span<const double> theta) {
    const DiscViolations v = violations_exact_disc(model, fs, gamma, alpha, theta);
    const double linear = std::inner_product(fs.loss_phi().begin(), fs.loss_phi().end(), theta.begin(), 0.0);
    return linear + penalty * v.total();
}

std::vector<double> subgradient_sample_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                                            double penalty, double gamma, std::span<const double> alpha,
                                            std::span<const double> theta, std::size_t pair, std::size_t state) {
    if (theta.size() != fs.dim()) throw ShapeError("theta has wrong dimension");
    if (alpha.size() != fs.num_states()) throw ShapeError("alpha has wrong length");
    std::vector<double> g(fs.loss_phi().begin(), fs.loss_phi().end());
    add_disc_penalty(model, fs, sp, penalty, gamma, alpha, theta, pair, state, g);
    return g;
}

std::vector<double> subgradient_estimate_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                                              double penalty, double gamma, std::span<const double> alpha,
                                              std::span<const double> theta, Rng& rng) {
    const std::size_t pair = sp.sample_pair(rng);
    const std::size_t state = sp.sample_state(rng);
    return subgradient_sample_disc(model, fs, sp, penalty, gamma, alpha, theta, pair, state);
}

std::vector<double> project_theta_disc(std::span<const double> theta, double radius) {
    if (!(radius > 0.0)) throw ParameterError("radius must be positive");
    double n2 = 0.0;
    for (double v : theta) n2 += v * v;
    const double n = std::sqrt(n2);
    std::vector<double> out(theta.begin(), theta.end());
    if (n > radius) {
        const double scale = radius / n;
        for (double& v : out) v *= scale;
    }
    return out;
}

RunTrace sgd_solve_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                        const DiscSolverConfig& cfg, const EvalHook& eval_hook) {
    cfg.validate(fs.dim(), fs.num_states());
    const std::vector<double> alpha = cfg.alpha.empty() ? uniform_alpha(fs.num_states()) : cfg.alpha;
    const double step = cfg.step_size ? *cfg.step_size
                                      : auto_step_size(fs.dim(), sp, cfg.penalty, cfg.radius, cfg.iterations);
    DiscProblem problem(model, fs, sp, cfg, alpha);
    return detail::run_sgd(problem, cfg, step, eval_hook);
}

double violation_summand_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp, double gamma,
                              std::span<const double> alpha, std::span<const double> theta, std::size_t pair,
                              std::size_t state) {
    double s = 0.0;
    const double u = dot(fs.row(pair), theta);
    if (u < 0.0) {
        if (!(sp.q_sa(pair) > 0.0)) throw InvariantError("sampled a pair with zero probability");
        s += -u / sp.q_sa(pair);
    }
    const double r = std::abs(dot(fs.feasibility_column(model, state, gamma), theta) - alpha[state]);
    if (r > 0.0) {
        if (!(sp.q_s(state) > 0.0)) throw InvariantError("sampled a state with zero probability");
        s += r / sp.q_s(state);
    }
    return s;
}

double estimate_violations_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp, double gamma,
                                std::span<const double> alpha, std::span<const double> theta, std::size_t n,
                                Rng& rng) {
    if (theta.size() != fs.dim()) throw ShapeError("theta has wrong dimension");
    check_alpha(alpha, fs.num_states());
    if (n == 0) throw ParameterError("violation estimate needs at least one sample");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pair = sp.sample_pair(rng);
        const std::size_t state = sp.sample_state(rng);
        total += violation_summand_disc(model, fs, sp, gamma, alpha, theta, pair, state);
    }
    return total / static_cast<double>(n);
}

std::size_t violation_sample_size_disc(const SamplingPair& sp, double radius, double epsilon, double delta) {
    const double b = radius * (sp.c_sa() + 2.0 * sp.c_s());
    return static_cast<std::size_t>(std::ceil(b * b / (2.0 * epsilon * epsilon) * std::log(2.0 / delta)));
}

std::size_t discounted_iterations(std::size_t dim, const SamplingPair& sp, double penalty, double radius,
                                  double epsilon, double delta) {
    const double d = static_cast<double>(dim);
    const double s2 = radius * radius;
    const double eps2 = epsilon * epsilon;
    const double t0 = s2 * penalty * penalty / eps2;
    const double inner = penalty * (sp.c_sa() + sp.c_s()) + std::sqrt(d) +
                         2.0 * std::sqrt(10.0 * std::log(1.0 / delta)) +
                         2.0 * std::sqrt(5.0 * d * std::log1p(s2 * t0 / d));
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(s2 / eps2 * inner * inner)));
}

DiscountedEvaluation evaluate_discounted(const MdpModel& model, const Policy& pi, double gamma,
                                         std::span<const double> alpha) {
    const StateVector j = value_function(model, pi, gamma);
    const OccupancyVector nu = discounted_visits(model, pi, gamma, alpha);
    const auto loss = model.loss();
    return {std::inner_product(alpha.begin(), alpha.end(), j.begin(), 0.0),
            std::inner_product(loss.begin(), loss.end(), nu.begin(), 0.0)};
}

EvalHook discounted_value_hook(const MdpModel& model, double gamma, std::vector<double> alpha) {
    return [&model, gamma, alpha = std::move(alpha)](const Policy& pi, std::span<const double>) -> std::optional<double> {
        const StateVector j = value_function(model, pi, gamma);
        return std::inner_product(alpha.begin(), alpha.end(), j.begin(), 0.0);
    };
}

double default_disc_v_max(const FeatureSpace& fs, double radius) {
    return 4.0 * std::sqrt(static_cast<double>(fs.dim())) * fs.column_norm_bound() * radius;
}

double default_disc_beta(const FeatureSpace& fs, double radius, double gamma) {
    return 6.0 * std::sqrt(static_cast<double>(fs.dim())) * fs.column_norm_bound() * radius / (1.0 - gamma);
}

MetaResult meta_solve_disc(const MdpModel& model, const FeatureSpace& fs, const SamplingPair& sp,
                           const MetaDiscConfig& cfg, const EvalHook& eval_hook) {
    if (!(cfg.epsilon > 0.0)) throw ParameterError("epsilon must be positive");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
    if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw ParameterError("discount factor must lie in (0, 1)");
    const std::vector<double> alpha = cfg.alpha.empty() ? uniform_alpha(fs.num_states()) : cfg.alpha;
    check_alpha(alpha, fs.num_states());
    const double v_max = cfg.v_max.value_or(default_disc_v_max(fs, cfg.radius));
    const double beta = cfg.beta.value_or(default_disc_beta(fs, cfg.radius, cfg.gamma));

    MetaResult result;
    if (cfg.grid_points) {
        if (cfg.grid_points->empty()) throw ParameterError("explicit grid is empty");
        result.grid = HGrid{beta, v_max, cfg.epsilon, *cfg.grid_points};
    } else {
        result.grid = build_h_grid(v_max, beta, cfg.epsilon);
    }

    const double k = static_cast<double>(result.grid.points.size());
    const double b = cfg.radius * (sp.c_sa() + 2.0 * sp.c_s());
    const auto n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(b * b / (2.0 * cfg.epsilon * cfg.epsilon) *
                                              std::log(4.0 * k / cfg.delta))));
    const double horizon = 1.0 / (1.0 - cfg.gamma);

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < result.grid.points.size(); ++i) {
        const double h = result.grid.points[i];
        DiscSolverConfig run;
        run.gamma = cfg.gamma;
        run.alpha = alpha;
        run.penalty = h;
        run.radius = cfg.radius;
        run.iterations = discounted_iterations(fs.dim(), sp, h, cfg.radius, cfg.epsilon, cfg.delta);
        run.minibatch = cfg.minibatch;
        run.seed = derive_seed(cfg.seed, 100, i);
        run.trace_stride = cfg.trace_stride;
        run.trace_violation_samples = cfg.trace_violation_samples;
        run.epsilon = cfg.epsilon;
        run.delta = cfg.delta;
        run.sum_constraint = cfg.sum_constraint;

        GridPointResult point;
        point.penalty = h;
        point.iterations = run.iterations;
        point.violation_samples = n;
        point.trace = sgd_solve_disc(model, fs, sp, run, eval_hook);
        const auto& theta = point.trace.theta;
        point.linear_objective =
            std::inner_product(fs.loss_phi().begin(), fs.loss_phi().end(), theta.begin(), 0.0);
        Rng rng = make_rng(cfg.seed, 200, i);
        point.v_hat = estimate_violations_disc(model, fs, sp, cfg.gamma, alpha, theta, n, rng);
        point.selection_value =
            point.linear_objective + (h + horizon) * point.v_hat + beta / (h * (1.0 - cfg.gamma));
        if (point.selection_value < best) {
            best = point.selection_value;
            result.chosen = i;
        }
        result.points.push_back(std::move(point));
    }
    return result;
}

}  // namespace dalp
