// Command-line driver: solvers, meta-algorithms, the queueing benchmark and
// small utilities. Every run writes summary.json (resolved config, result,
// provenance) and, for solver runs, trace.csv into --out.

#include "dalp/avg_solver.hpp"
#include "dalp/disc_solver.hpp"
#include "dalp/error.hpp"
#include "dalp/grid.hpp"
#include "dalp/io.hpp"
#include "dalp/queue.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using dalp::io::Json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kCapacityError = 3, kConvergenceError = 4 };

struct Flags {
    std::string mode;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::optional<std::size_t> trace_stride;
    std::string preset;
    bool timing = false;
};

Json solver_defaults(bool discounted) {
    Json s = {{"penalty", 1.0},     {"radius", 1.0},  {"iterations", 1000},          {"step_size", nullptr},
              {"halve_every", 0},   {"minibatch", 1}, {"trace_stride", 0},           {"trace_violation_samples", 0},
              {"epsilon", 0.1},     {"delta", 0.1}};
    if (discounted) {
        s["gamma"] = 0.9;
        s["alpha"] = nullptr;
        s["sum_constraint"] = false;
    }
    return s;
}

Json meta_defaults(bool discounted) {
    Json m = {{"radius", 1.0},       {"epsilon", 0.1},  {"delta", 0.1},       {"v_max", nullptr},
              {"beta", nullptr},     {"grid_points", nullptr}, {"minibatch", 1}, {"trace_stride", 0},
              {"trace_violation_samples", 0}};
    if (discounted) {
        m["gamma"] = 0.9;
        m["alpha"] = nullptr;
        m["sum_constraint"] = false;
    }
    return m;
}

Json queue_problem_defaults(const std::string& preset) {
    return {{"preset", preset}, {"buffers", nullptr}, {"arrival", nullptr}, {"service", nullptr}};
}

Json defaults_for(const std::string& mode) {
    Json d = {{"mode", mode}, {"seed", 0}};
    if (mode == "print-grid") {
        d["grid"] = {{"v_max", 1.0}, {"beta", 1.0}, {"epsilon", 0.1}};
        return d;
    }
    if (mode == "bench-queue") {
        d["problem"] = {{"queue", queue_problem_defaults("desk")}};
        d["features"] = {{"preset", nullptr}};
        d["sampling"] = "uniform";
        Json s = solver_defaults(false);
        s["penalty"] = 2.0;
        s["iterations"] = 20000;
        s["step_size"] = 1e-4;
        s["halve_every"] = 2000;
        s["minibatch"] = 1000;
        s["trace_stride"] = 1000;
        d["solver"] = s;
        d["simulation"] = {{"horizon", 1000000}, {"burn_in", 10000}, {"reps", 4}};
        return d;
    }
    d["problem"] = {{"mdp", nullptr}, {"queue", nullptr}};
    if (mode == "eval-policy") {
        d["policy"] = "uniform";
        d["gamma"] = nullptr;
        d["alpha"] = nullptr;
        d["simulation"] = {{"horizon", 100000}, {"burn_in", 10000}, {"reps", 4}};
        return d;
    }
    d["features"] = {{"path", nullptr}, {"preset", nullptr}};
    d["sampling"] = "uniform";
    d["evaluate"] = true;
    if (mode == "solve-avg") d["solver"] = solver_defaults(false);
    if (mode == "solve-disc") d["solver"] = solver_defaults(true);
    if (mode == "meta-avg") d["meta"] = meta_defaults(false);
    if (mode == "meta-disc") d["meta"] = meta_defaults(true);
    return d;
}

// Rejects keys the defaults do not know about, recursing into objects.
void check_keys(const Json& user, const Json& defaults, const std::string& where) {
    for (const auto& [key, value] : user.items()) {
        if (!defaults.contains(key)) throw dalp::ConfigError("unknown config key '" + where + key + "'");
        const Json& d = defaults.at(key);
        if (value.is_object() && d.is_object() && !d.empty()) check_keys(value, d, where + key + ".");
    }
}

// Recursive overwrite. Unlike merge_patch, an explicit null is kept as a value.
void overlay(Json& base, const Json& user) {
    for (const auto& [key, value] : user.items()) {
        if (value.is_object() && base.contains(key) && base[key].is_object()) overlay(base[key], value);
        else base[key] = value;
    }
}

template <class T>
T get(const Json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw dalp::ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

template <class T>
std::optional<T> get_opt(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return get<T>(j, key);
}

class Runner {
public:
    Runner(Flags flags, Json config, fs::path base_dir)
        : flags_(std::move(flags)), config_(std::move(config)), base_dir_(std::move(base_dir)) {
        seed_ = get<std::uint64_t>(config_, "seed");
    }

    int run() {
        const auto start = std::chrono::steady_clock::now();
        fs::create_directories(flags_.out);
        Json result;
        const std::string& mode = flags_.mode;
        if (mode == "print-grid") result = print_grid();
        else if (mode == "solve-avg") result = solve(false);
        else if (mode == "solve-disc") result = solve(true);
        else if (mode == "meta-avg") result = meta(false);
        else if (mode == "meta-disc") result = meta(true);
        else if (mode == "bench-queue") result = bench_queue();
        else if (mode == "eval-policy") result = eval_policy();
        else throw dalp::ConfigError("unknown mode '" + mode + "'");

        Json provenance = {{"seed", seed_}, {"iterations", iterations_}};
        if (flags_.timing)
            provenance["wall_time_s"] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        Json summary = {{"config", config_}, {"result", result}, {"provenance", provenance}};
        dalp::io::write_json(fs::path(flags_.out) / "summary.json", summary);
        return kOk;
    }

private:
    struct Problem {
        std::optional<dalp::MdpModel> model;
        std::optional<dalp::queue::QueueNetSpec> queue;
        /// Factor from the model's loss to the reported loss (sum of buffers for queues).
        double loss_scale = 1.0;
    };

    fs::path resolve(const std::string& p) const {
        const fs::path path(p);
        return path.is_absolute() ? path : base_dir_ / path;
    }

    // Fills the queue section with the concrete network so the summary is replayable.
    dalp::queue::QueueNetSpec queue_spec(Json& q) {
        const std::string preset = get_opt<std::string>(q, "preset").value_or("desk");
        dalp::queue::QueueNetSpec spec;
        if (preset == "desk") spec = dalp::queue::QueueNetSpec::desk();
        else if (preset == "paper") spec = dalp::queue::QueueNetSpec::paper();
        else throw dalp::ConfigError("unknown queue preset '" + preset + "'");
        if (auto b = get_opt<std::array<int, 4>>(q, "buffers")) spec.buffers = *b;
        if (auto a = get_opt<std::array<double, 2>>(q, "arrival")) {
            spec.arrival1 = (*a)[0];
            spec.arrival3 = (*a)[1];
        }
        if (auto s = get_opt<std::array<double, 4>>(q, "service")) spec.service = *s;
        spec.validate();
        q = {{"preset", preset},
             {"buffers", spec.buffers},
             {"arrival", {spec.arrival1, spec.arrival3}},
             {"service", spec.service}};
        return spec;
    }

    Problem load_problem(bool need_model) {
        Json& p = config_["problem"];
        Problem prob;
        const auto mdp_path = get_opt<std::string>(p, "mdp");
        const bool has_queue = p.contains("queue") && !p["queue"].is_null();
        if (mdp_path.has_value() == has_queue)
            throw dalp::ConfigError("problem needs exactly one of 'mdp' (fixture path) or 'queue'");
        if (mdp_path) {
            p["mdp"] = resolve(*mdp_path).lexically_normal().string();
            prob.model = dalp::io::load_mdp(p["mdp"].get<std::string>());
            return prob;
        }
        prob.queue = queue_spec(p["queue"]);
        prob.loss_scale = prob.queue->total_capacity();
        if (need_model) prob.model = dalp::queue::build_mdp(*prob.queue);
        return prob;
    }

    dalp::FeatureSpace load_feature_space(const Problem& prob) {
        Json& f = config_["features"];
        const auto path = get_opt<std::string>(f, "path");
        auto preset = get_opt<std::string>(f, "preset");
        if (path && preset) throw dalp::ConfigError("features need either 'path' or 'preset', not both");
        if (path) {
            f["path"] = resolve(*path).lexically_normal().string();
            return dalp::io::load_features(*prob.model, f["path"].get<std::string>());
        }
        if (!prob.queue) throw dalp::ConfigError("features.path is required for fixture problems");
        if (!preset) preset = config_["problem"]["queue"]["preset"].get<std::string>();
        dalp::queue::FeatureOptions opt;
        if (*preset == "desk") opt = dalp::queue::FeatureOptions::desk();
        else if (*preset == "paper") opt = dalp::queue::FeatureOptions::paper();
        else throw dalp::ConfigError("unknown feature preset '" + *preset + "'");
        opt.seed = seed_;
        f["preset"] = *preset;
        return dalp::queue::build_features(*prob.queue, *prob.model, opt);
    }

    dalp::SamplingPair sampling(const Problem& prob, const dalp::FeatureSpace& fs, const dalp::ConstraintOperator& op) {
        const auto kind = get<std::string>(config_, "sampling");
        if (kind == "uniform") return dalp::make_uniform_sampling(*prob.model, fs, op);
        if (kind == "norm") return dalp::make_norm_proportional_sampling(*prob.model, fs, op);
        throw dalp::ConfigError("sampling must be 'uniform' or 'norm'");
    }

    std::size_t stride_override(Json& section) {
        if (flags_.trace_stride) section["trace_stride"] = *flags_.trace_stride;
        if (get<std::size_t>(section, "trace_stride") == 0 && section.contains("iterations")) {
            dalp::SgdOptions opt;
            opt.iterations = get<std::size_t>(section, "iterations");
            section["trace_stride"] = std::max<std::size_t>(1, opt.iterations / 1000);
        }
        return get<std::size_t>(section, "trace_stride");
    }

    static std::vector<double> alpha_for(Json& section, std::size_t num_states) {
        auto alpha = get_opt<std::vector<double>>(section, "alpha");
        if (!alpha) alpha = dalp::uniform_alpha(num_states);
        section["alpha"] = *alpha;
        return *alpha;
    }

    static void scale_rows(std::vector<dalp::TraceRow>& rows, double scale) {
        if (scale == 1.0) return;
        for (auto& r : rows) {
            r.objective *= scale;
            if (r.eval_cost) *r.eval_cost *= scale;
        }
    }

    void write_trace(std::vector<dalp::TraceRow> rows, double scale) {
        scale_rows(rows, scale);
        dalp::io::write_trace(fs::path(flags_.out) / "trace.csv", rows);
    }

    static bool within_capacity(const dalp::MdpModel& m) { return m.num_pairs() <= dalp::kExactCapacity; }

    Json print_grid() {
        const Json& g = config_["grid"];
        const auto grid = dalp::build_h_grid(get<double>(g, "v_max"), get<double>(g, "beta"), get<double>(g, "epsilon"));
        for (double h : grid.points) std::printf("%s\n", dalp::io::format_double(h).c_str());
        return {{"points", grid.points},
                {"num_points", grid.points.size()},
                {"index_bound", dalp::grid_index_bound(grid.v_max, grid.beta, grid.epsilon)}};
    }

    template <class Config>
    void fill_sgd(Config& cfg, Json& s) {
        cfg.penalty = get<double>(s, "penalty");
        cfg.radius = get<double>(s, "radius");
        cfg.iterations = get<std::size_t>(s, "iterations");
        cfg.step_size = get_opt<double>(s, "step_size");
        cfg.halve_every = get<std::size_t>(s, "halve_every");
        cfg.minibatch = get<std::size_t>(s, "minibatch");
        cfg.trace_stride = stride_override(s);
        cfg.trace_violation_samples = get<std::size_t>(s, "trace_violation_samples");
        cfg.epsilon = get<double>(s, "epsilon");
        cfg.delta = get<double>(s, "delta");
        cfg.seed = seed_;
    }

    Json solve(bool discounted) {
        Problem prob = load_problem(true);
        const auto fs = load_feature_space(prob);
        const bool evaluate = get<bool>(config_, "evaluate") && within_capacity(*prob.model);
        Json& s = config_["solver"];
        Json result = {{"dim", fs.dim()}, {"dropped_features", fs.dropped()}};
        dalp::RunTrace trace;
        if (!discounted) {
            dalp::AvgSolverConfig cfg;
            fill_sgd(cfg, s);
            const auto sp = sampling(prob, fs, dalp::ConstraintOperator::stationary());
            dalp::EvalHook hook;
            if (evaluate)
                hook = [&](const dalp::Policy& pi, std::span<const double>) -> std::optional<double> {
                    return dalp::average_cost(*prob.model, pi);
                };
            trace = dalp::sgd_solve_avg(*prob.model, fs, sp, cfg, hook);
            const auto v = dalp::violations_exact(*prob.model, fs, trace.theta);
            result["violations"] = {{"negativity", v.negativity}, {"stationarity", v.stationarity}};
            result["surrogate"] = dalp::surrogate_cost_exact(*prob.model, fs, cfg.penalty, trace.theta) * prob.loss_scale;
            result["coverage"] = {{"c_sa", sp.c_sa()}, {"c_s", sp.c_s()}};
            if (evaluate) result["average_cost"] = dalp::average_cost(*prob.model, trace.policy) * prob.loss_scale;
        } else {
            dalp::DiscSolverConfig cfg;
            fill_sgd(cfg, s);
            cfg.gamma = get<double>(s, "gamma");
            cfg.alpha = alpha_for(s, prob.model->num_states());
            cfg.sum_constraint = get<bool>(s, "sum_constraint");
            const auto sp = sampling(prob, fs, dalp::ConstraintOperator::discounted(cfg.gamma));
            dalp::EvalHook hook;
            if (evaluate) hook = dalp::discounted_value_hook(*prob.model, cfg.gamma, cfg.alpha);
            trace = dalp::sgd_solve_disc(*prob.model, fs, sp, cfg, hook);
            const auto v = dalp::violations_exact_disc(*prob.model, fs, cfg.gamma, cfg.alpha, trace.theta);
            result["violations"] = {{"negativity", v.negativity}, {"feasibility", v.feasibility}};
            result["surrogate"] = dalp::surrogate_cost_exact_disc(*prob.model, fs, cfg.penalty, cfg.gamma, cfg.alpha,
                                                                  trace.theta) * prob.loss_scale;
            result["coverage"] = {{"c_sa", sp.c_sa()}, {"c_s", sp.c_s()}};
            if (evaluate) {
                const auto e = dalp::evaluate_discounted(*prob.model, trace.policy, cfg.gamma, cfg.alpha);
                result["discounted_value"] = e.value * prob.loss_scale;
            }
        }
        result["penalty"] = get<double>(s, "penalty");
        result["step_size"] = trace.step_size;
        result["linear_objective"] = trace.rows.empty() ? 0.0 : trace.rows.back().objective * prob.loss_scale;
        result["theta"] = trace.theta;
        iterations_ = trace.iterations;
        write_trace(trace.rows, prob.loss_scale);
        return result;
    }

    Json meta(bool discounted) {
        Problem prob = load_problem(true);
        const auto fs = load_feature_space(prob);
        const bool evaluate = get<bool>(config_, "evaluate") && within_capacity(*prob.model);
        Json& m = config_["meta"];
        dalp::MetaResult res;
        std::vector<double> alpha;
        double gamma = 0.0;
        if (!discounted) {
            dalp::MetaAvgConfig cfg;
            cfg.radius = get<double>(m, "radius");
            cfg.epsilon = get<double>(m, "epsilon");
            cfg.delta = get<double>(m, "delta");
            cfg.v_max = get_opt<double>(m, "v_max");
            cfg.beta = get_opt<double>(m, "beta");
            cfg.grid_points = get_opt<std::vector<double>>(m, "grid_points");
            cfg.minibatch = get<std::size_t>(m, "minibatch");
            cfg.trace_stride = stride_override(m);
            cfg.trace_violation_samples = get<std::size_t>(m, "trace_violation_samples");
            cfg.seed = seed_;
            const auto sp = sampling(prob, fs, dalp::ConstraintOperator::stationary());
            dalp::EvalHook hook;
            if (evaluate)
                hook = [&](const dalp::Policy& pi, std::span<const double>) -> std::optional<double> {
                    return dalp::average_cost(*prob.model, pi);
                };
            res = dalp::meta_solve_avg(*prob.model, fs, sp, cfg, hook);
        } else {
            dalp::MetaDiscConfig cfg;
            cfg.gamma = gamma = get<double>(m, "gamma");
            cfg.alpha = alpha = alpha_for(m, prob.model->num_states());
            cfg.radius = get<double>(m, "radius");
            cfg.epsilon = get<double>(m, "epsilon");
            cfg.delta = get<double>(m, "delta");
            cfg.v_max = get_opt<double>(m, "v_max");
            cfg.beta = get_opt<double>(m, "beta");
            cfg.grid_points = get_opt<std::vector<double>>(m, "grid_points");
            cfg.minibatch = get<std::size_t>(m, "minibatch");
            cfg.trace_stride = stride_override(m);
            cfg.trace_violation_samples = get<std::size_t>(m, "trace_violation_samples");
            cfg.sum_constraint = get<bool>(m, "sum_constraint");
            cfg.seed = seed_;
            const auto sp = sampling(prob, fs, dalp::ConstraintOperator::discounted(cfg.gamma));
            dalp::EvalHook hook;
            if (evaluate) hook = dalp::discounted_value_hook(*prob.model, cfg.gamma, cfg.alpha);
            res = dalp::meta_solve_disc(*prob.model, fs, sp, cfg, hook);
        }

        Json points = Json::array();
        for (const auto& p : res.points) {
            points.push_back({{"penalty", p.penalty},
                              {"iterations", p.iterations},
                              {"violation_samples", p.violation_samples},
                              {"linear_objective", p.linear_objective * prob.loss_scale},
                              {"v_hat", p.v_hat},
                              {"selection_value", p.selection_value}});
            iterations_ += p.iterations;
        }
        const auto& chosen = res.selected();
        Json result = {{"dim", fs.dim()},
                       {"grid", {{"beta", res.grid.beta}, {"v_max", res.grid.v_max}, {"epsilon", res.grid.epsilon}}},
                       {"chosen_index", res.chosen},
                       {"chosen_penalty", chosen.penalty},
                       {"points", points},
                       {"theta", chosen.trace.theta}};
        if (evaluate) {
            if (!discounted)
                result["average_cost"] = dalp::average_cost(*prob.model, chosen.trace.policy) * prob.loss_scale;
            else
                result["discounted_value"] =
                    dalp::evaluate_discounted(*prob.model, chosen.trace.policy, gamma, alpha).value * prob.loss_scale;
        }
        write_trace(chosen.trace.rows, prob.loss_scale);
        return result;
    }

    Json simulate_heuristics(const dalp::queue::QueueNetSpec& spec) {
        const Json& sim = config_["simulation"];
        const auto horizon = get<std::size_t>(sim, "horizon");
        const auto burn_in = get<std::size_t>(sim, "burn_in");
        const auto reps = get<std::size_t>(sim, "reps");
        Json out;
        for (auto h : {dalp::queue::Heuristic::longer, dalp::queue::Heuristic::lbfs}) {
            const auto pi = dalp::queue::heuristic_policy(spec, h);
            const auto r = dalp::queue::evaluate_policy_simulated(spec, pi, horizon, burn_in, reps,
                                                                  dalp::derive_seed(seed_, 500, static_cast<int>(h)));
            out[dalp::queue::to_string(h)] = {{"mean", r.mean}, {"std_dev", r.std_dev}, {"std_error", r.std_error}};
        }
        return out;
    }

    Json bench_queue() {
        if (!flags_.preset.empty()) config_["problem"]["queue"]["preset"] = flags_.preset;
        Json& q = config_["problem"]["queue"];
        const auto spec = queue_spec(q);
        const double scale = spec.total_capacity();
        Json result = {{"num_states", spec.num_states()}};

        if (spec.num_states() * dalp::queue::kNumActions > dalp::kExactCapacity) {
            // Too large for the exact model: report simulated baselines only.
            result["solver"] = "skipped: state-action count exceeds the exact capacity";
            result["baselines_simulated"] = simulate_heuristics(spec);
            return result;
        }

        Problem prob;
        prob.queue = spec;
        prob.loss_scale = scale;
        prob.model = dalp::queue::build_mdp(spec);
        Json baselines;
        double best = std::numeric_limits<double>::infinity();
        for (auto h : {dalp::queue::Heuristic::longer, dalp::queue::Heuristic::lbfs}) {
            const double c = dalp::average_cost(*prob.model, dalp::queue::heuristic_policy(spec, h)) * scale;
            baselines[dalp::queue::to_string(h)] = c;
            best = std::min(best, c);
        }
        result["baselines"] = baselines;

        const auto fs = load_feature_space(prob);
        dalp::AvgSolverConfig cfg;
        Json& s = config_["solver"];
        fill_sgd(cfg, s);
        const auto sp = sampling(prob, fs, dalp::ConstraintOperator::stationary());
        dalp::EvalHook hook = [&](const dalp::Policy& pi, std::span<const double>) -> std::optional<double> {
            return dalp::average_cost(*prob.model, pi);
        };
        const auto trace = dalp::sgd_solve_avg(*prob.model, fs, sp, cfg, hook);
        const double solved = dalp::average_cost(*prob.model, trace.policy) * scale;
        const auto v = dalp::violations_exact(*prob.model, fs, trace.theta);
        result["dim"] = fs.dim();
        result["dropped_features"] = fs.dropped();
        result["solved_loss"] = solved;
        result["ratio_to_best_heuristic"] = solved / best;
        result["violations"] = {{"negativity", v.negativity}, {"stationarity", v.stationarity}};
        result["step_size"] = trace.step_size;
        result["theta"] = trace.theta;
        iterations_ = trace.iterations;
        write_trace(trace.rows, scale);
        return result;
    }

    dalp::Policy policy_for(const Problem& prob, std::size_t num_states, std::size_t num_actions) {
        const Json& p = config_["policy"];
        if (p.is_string()) {
            const auto name = p.get<std::string>();
            if (name == "uniform") return dalp::Policy::uniform(num_states, num_actions);
            if (!prob.queue) throw dalp::ConfigError("heuristic policies need a queue problem");
            return dalp::queue::heuristic_policy(*prob.queue, dalp::queue::heuristic_from_string(name));
        }
        if (p.contains("actions")) {
            const auto actions = get<std::vector<std::size_t>>(p, "actions");
            if (actions.size() != num_states) throw dalp::ConfigError("policy.actions needs one entry per state");
            return dalp::Policy::deterministic(num_actions, actions);
        }
        if (p.contains("probs")) return dalp::Policy(num_states, num_actions, get<std::vector<double>>(p, "probs"));
        throw dalp::ConfigError("policy must be a name or an object with 'actions' or 'probs'");
    }

    Json eval_policy() {
        Json& p = config_["problem"];
        const bool is_queue = p.contains("queue") && !p["queue"].is_null();
        std::optional<dalp::queue::QueueNetSpec> spec;
        bool exact = true;
        if (is_queue) {
            spec = queue_spec(p["queue"]);
            exact = spec->num_states() * dalp::queue::kNumActions <= dalp::kExactCapacity;
        }
        Problem prob = load_problem(exact);
        const std::size_t n = prob.model ? prob.model->num_states() : spec->num_states();
        const std::size_t a = prob.model ? prob.model->num_actions() : dalp::queue::kNumActions;
        const auto pi = policy_for(prob, n, a);

        Json result;
        if (prob.model) {
            result["average_cost"] = dalp::average_cost(*prob.model, pi) * prob.loss_scale;
            if (auto gamma = get_opt<double>(config_, "gamma")) {
                const auto alpha = alpha_for(config_, n);
                const auto e = dalp::evaluate_discounted(*prob.model, pi, *gamma, alpha);
                result["discounted_value"] = e.value * prob.loss_scale;
                result["visit_cost"] = e.visit_cost * prob.loss_scale;
            }
        }
        if (prob.queue) {
            const Json& sim = config_["simulation"];
            const auto r = dalp::queue::evaluate_policy_simulated(
                *prob.queue, pi, get<std::size_t>(sim, "horizon"), get<std::size_t>(sim, "burn_in"),
                get<std::size_t>(sim, "reps"), dalp::derive_seed(seed_, 500));
            result["simulated"] = {{"mean", r.mean}, {"std_dev", r.std_dev}, {"std_error", r.std_error}};
        }
        return result;
    }

    Flags flags_;
    Json config_;
    fs::path base_dir_;
    std::uint64_t seed_ = 0;
    std::size_t iterations_ = 0;
};

Json resolve_config(const Flags& flags) {
    Json config = defaults_for(flags.mode);
    if (!flags.config_path.empty()) {
        Json user = dalp::io::read_json(flags.config_path);
        if (!user.is_object()) throw dalp::ConfigError("config must be a JSON object");
        if (user.contains("mode") && user["mode"] != flags.mode)
            throw dalp::ConfigError("config mode does not match the subcommand");
        check_keys(user, config, "");
        overlay(config, user);
    }
    if (const char* env = std::getenv("DALP_SEED")) {
        try {
            config["seed"] = std::stoull(env);
        } catch (const std::exception&) {
            throw dalp::ConfigError("DALP_SEED is not an unsigned integer");
        }
    }
    if (flags.seed) config["seed"] = *flags.seed;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual approximate linear programming planner"};
    app.require_subcommand(1);
    Flags flags;

    const std::vector<std::pair<std::string, std::string>> modes = {
        {"solve-avg", "stochastic subgradient run on the average-cost surrogate"},
        {"solve-disc", "stochastic subgradient run on the discounted surrogate"},
        {"meta-avg", "penalty-grid meta-algorithm, average cost"},
        {"meta-disc", "penalty-grid meta-algorithm, discounted cost"},
        {"bench-queue", "four-queue network benchmark"},
        {"eval-policy", "exact and simulated policy evaluation"},
        {"print-grid", "print the penalty grid"}};
    for (const auto& [name, help] : modes) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", flags.config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", flags.seed, "master seed (overrides config and DALP_SEED)");
        sub->add_option("--out", flags.out, "output directory");
        sub->add_option("--trace-stride", flags.trace_stride, "record every N iterations");
        sub->add_option("--preset", flags.preset, "queue preset")->check(CLI::IsMember({"paper", "desk"}));
        sub->add_flag("--timing", flags.timing, "record wall time in the summary");
        sub->callback([&flags, name = name] { flags.mode = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        const fs::path base = flags.config_path.empty() ? fs::current_path()
                                                        : fs::absolute(flags.config_path).parent_path();
        Runner runner(flags, resolve_config(flags), base);
        return runner.run();
    } catch (const dalp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const dalp::ParameterError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const dalp::ShapeError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const dalp::CapacityError& e) {
        std::cerr << "capacity error: " << e.what() << '\n';
        return kCapacityError;
    } catch (const dalp::ConvergenceError& e) {
        std::cerr << "convergence error: " << e.what() << '\n';
        return kConvergenceError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}
