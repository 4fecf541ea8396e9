#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dalp/error.hpp"
#include "dalp/io.hpp"
#include "dalp/queue.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <sys/wait.h>

using namespace dalp;
namespace fs = std::filesystem;
using io::Json;

namespace {

const fs::path kFixtures = DALP_FIXTURES;
const fs::path kScratch = DALP_SCRATCH;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = kScratch / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

fs::path write_config(const fs::path& dir, const Json& j) {
    const fs::path p = dir / "config.json";
    io::write_json(p, j);
    return p;
}

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + std::string(DALP_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("trace files round-trip") {
    std::vector<TraceRow> rows = {{1, 0.1, 0.0, std::nullopt},
                                  {10, 1.0 / 3.0, 2.5e-17, 12.25},
                                  {20, -7.0, 1e300, std::numeric_limits<double>::denorm_min()}};
    const auto dir = fresh_dir("trace");
    io::write_trace(dir / "t.csv", rows);
    const auto text = slurp(dir / "t.csv");
    CHECK(text.rfind("t,objective,v_hat,eval_cost\n", 0) == 0);
    CHECK(text.find("1,0.1,0,\n") != std::string::npos);
    const auto back = io::read_trace(dir / "t.csv");
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].t == rows[i].t);
        CHECK(back[i].objective == rows[i].objective);
        CHECK(back[i].v_hat == rows[i].v_hat);
        CHECK(back[i].eval_cost == rows[i].eval_cost);
    }
    for (double v : {0.1, 1.0 / 7.0, 6.02214076e23, -1e-310}) CHECK(std::strtod(io::format_double(v).c_str(), nullptr) == v);
}

TEST_CASE("fixture loading") {
    const auto m = io::load_mdp(kFixtures / "four_state.json");
    CHECK(m.num_states() == 4);
    CHECK(m.num_actions() == 2);
    CHECK(m.loss()[5] == 0.9);
    const auto f = io::load_features(m, kFixtures / "four_state_features.json");
    CHECK(f.dim() == 3);
    CHECK(f.normalized());

    Json bad = io::read_json(kFixtures / "four_state.json");
    bad.erase("loss");
    CHECK_THROWS_AS(io::mdp_from_json(bad), ConfigError);
    bad = io::read_json(kFixtures / "four_state.json");
    bad["transitions"][0]["p"] = 0.3;
    CHECK_THROWS_AS(io::mdp_from_json(bad), Error);
    CHECK_THROWS_AS(io::read_json(kFixtures / "missing.json"), ConfigError);
}

TEST_CASE("cli determinism and replay") {
    const auto cfg = (kFixtures / "solve_avg.json").string();
    for (const std::string mode : {"solve-avg", "solve-disc"}) {
        Json c = io::read_json(cfg);
        if (mode == "solve-disc") c["solver"]["gamma"] = 0.8;
        const auto dir = fresh_dir(mode);
        auto conf = write_config(dir, c);
        for (const auto& f : fs::directory_iterator(kFixtures))
            if (f.path().filename() != "solve_avg.json") fs::copy_file(f.path(), dir / f.path().filename());
        REQUIRE(run_cli(mode + " --config " + conf.string() + " --seed 7 --out " + (dir / "a").string()) == 0);
        REQUIRE(run_cli(mode + " --config " + conf.string() + " --seed 7 --out " + (dir / "b").string()) == 0);
        CHECK(slurp(dir / "a/trace.csv") == slurp(dir / "b/trace.csv"));
        CHECK(slurp(dir / "a/summary.json") == slurp(dir / "b/summary.json"));
        CHECK(!slurp(dir / "a/trace.csv").empty());

        // The resolved configuration alone replays the run.
        const Json summary = io::read_json(dir / "a/summary.json");
        CHECK(summary["provenance"]["seed"] == 7);
        CHECK(!summary["provenance"].contains("wall_time_s"));
        CHECK(summary["config"]["solver"]["trace_stride"] == 2);
        const auto replay = dir / "replay.json";
        io::write_json(replay, summary["config"]);
        REQUIRE(run_cli(mode + " --config " + replay.string() + " --out " + (dir / "c").string()) == 0);
        CHECK(slurp(dir / "a/trace.csv") == slurp(dir / "c/trace.csv"));
        CHECK(slurp(dir / "a/summary.json") == slurp(dir / "c/summary.json"));

        // Seed precedence: flag over environment over config.
        REQUIRE(run_cli(mode + " --config " + conf.string() + " --out " + (dir / "d").string(), "DALP_SEED=7") == 0);
        CHECK(slurp(dir / "a/trace.csv") == slurp(dir / "d/trace.csv"));
        REQUIRE(run_cli(mode + " --config " + conf.string() + " --seed 8 --out " + (dir / "e").string(),
                        "DALP_SEED=7") == 0);
        CHECK(slurp(dir / "a/trace.csv") != slurp(dir / "e/trace.csv"));
    }
}

TEST_CASE("cli meta runs") {
    const auto dir = fresh_dir("meta");
    Json avg = {{"problem", {{"mdp", (kFixtures / "four_state.json").string()}}},
                {"features", {{"path", (kFixtures / "four_state_features.json").string()}}},
                {"meta", {{"epsilon", 0.5}}}};
    const auto a = write_config(dir, avg);
    REQUIRE(run_cli("meta-avg --config " + a.string() + " --seed 3 --out " + (dir / "a").string()) == 0);
    REQUIRE(run_cli("meta-avg --config " + a.string() + " --seed 3 --out " + (dir / "b").string()) == 0);
    CHECK(slurp(dir / "a/summary.json") == slurp(dir / "b/summary.json"));
    CHECK(slurp(dir / "a/trace.csv") == slurp(dir / "b/trace.csv"));
    const Json s = io::read_json(dir / "a/summary.json");
    CHECK(s["result"]["points"].size() >= 2);
    CHECK(s["result"]["chosen_penalty"] == s["result"]["points"][s["result"]["chosen_index"].get<std::size_t>()]["penalty"]);

    Json disc = {{"problem", {{"mdp", (kFixtures / "four_state.json").string()}}},
                 {"features", {{"path", (kFixtures / "four_state_features.json").string()}}},
                 {"meta", {{"epsilon", 2.0}, {"grid_points", {1.0, 2.0}}}}};
    const auto d = dir / "disc.json";
    io::write_json(d, disc);
    REQUIRE(run_cli("meta-disc --config " + d.string() + " --seed 3 --out " + (dir / "c").string()) == 0);
    REQUIRE(run_cli("meta-disc --config " + d.string() + " --seed 3 --out " + (dir / "e").string()) == 0);
    CHECK(slurp(dir / "c/summary.json") == slurp(dir / "e/summary.json"));
    const Json sd = io::read_json(dir / "c/summary.json");
    CHECK(sd["result"]["points"].size() == 2);
    CHECK(sd["config"]["meta"]["alpha"].size() == 4);
}

TEST_CASE("cli print-grid") {
    const auto dir = fresh_dir("grid");
    const auto c = write_config(dir, Json{{"grid", {{"v_max", 1.0}, {"beta", 1.0}, {"epsilon", 0.5}}}});
    const std::string cmd = std::string(DALP_CLI) + " print-grid --config " + c.string() + " --out " +
                            (dir / "o").string() + " > " + (dir / "stdout.txt").string();
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(slurp(dir / "stdout.txt").rfind("1\n1.25\n", 0) == 0);
    const Json s = io::read_json(dir / "o/summary.json");
    CHECK(s["result"]["points"][1] == 1.25);
}

TEST_CASE("cli exit codes") {
    const auto dir = fresh_dir("codes");
    const auto out = " --out " + (dir / "o").string();
    CHECK(run_cli("solve-avg" + out) == 2);  // no problem given
    CHECK(run_cli("no-such-mode" + out) == 2);
    CHECK(run_cli("solve-avg --config " + write_config(dir, Json{{"solver", {{"penalty", 1.0}, {"bogus", 1}}}}).string() +
                  out) == 2);
    Json neg = io::read_json(kFixtures / "solve_avg.json");
    neg["problem"]["mdp"] = (kFixtures / "four_state.json").string();
    neg["features"]["path"] = (kFixtures / "four_state_features.json").string();
    neg["solver"]["penalty"] = -1.0;
    CHECK(run_cli("solve-avg --config " + write_config(dir, neg).string() + out) == 2);
    CHECK(run_cli("print-grid --config " + write_config(dir, Json{{"grid", {{"v_max", 1.0}, {"beta", 1.0}, {"epsilon", 5.0}}}}).string() +
                  out) == 2);
    Json big = {{"problem", {{"queue", {{"preset", "paper"}}}}}, {"solver", {{"iterations", 10}}}};
    CHECK(run_cli("solve-avg --config " + write_config(dir, big).string() + out) == 3);
    CHECK(run_cli("solve-avg --seed 1" + out, "DALP_SEED=abc") == 2);
}

TEST_CASE("cli bench-queue desk summary") {
    const auto dir = fresh_dir("bench");
    const auto c = write_config(dir, Json{{"solver", {{"iterations", 200}, {"minibatch", 10}, {"trace_stride", 50}}}});
    REQUIRE(run_cli("bench-queue --preset desk --seed 2 --config " + c.string() + " --out " + (dir / "o").string()) == 0);
    const Json s = io::read_json(dir / "o/summary.json");
    const auto spec = queue::QueueNetSpec::desk();
    const auto m = queue::build_mdp(spec);
    const double longer = average_cost(m, queue::heuristic_policy(spec, queue::Heuristic::longer)) * 30.0;
    const double lbfs = average_cost(m, queue::heuristic_policy(spec, queue::Heuristic::lbfs)) * 30.0;
    CHECK(std::abs(s["result"]["baselines"]["LONGER"].get<double>() - longer) <= 1e-9);
    CHECK(std::abs(s["result"]["baselines"]["LBFS"].get<double>() - lbfs) <= 1e-9);
    const double solved = s["result"]["solved_loss"].get<double>();
    CHECK(std::abs(s["result"]["ratio_to_best_heuristic"].get<double>() - solved / std::min(longer, lbfs)) <= 1e-12);
    CHECK(s["result"]["dim"] == 366);
    CHECK(s["config"]["problem"]["queue"]["buffers"] == Json::array({9, 6, 6, 9}));
    const auto rows = io::read_trace(dir / "o/trace.csv");
    REQUIRE(rows.size() == 4);
    CHECK(rows.back().t == 200);
    REQUIRE(rows.back().eval_cost.has_value());
    CHECK(std::abs(*rows.back().eval_cost - solved) <= 1e-9);
}
