#pragma once

#include "dalp/features.hpp"
#include "dalp/mdp.hpp"
#include "dalp/trace.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dalp::io {

using Json = nlohmann::ordered_json;

Json read_json(const std::filesystem::path& path);
/// Two-space indented, trailing newline.
void write_json(const std::filesystem::path& path, const Json& doc);

/// {"num_states", "num_actions", "loss": [X*A], "transitions": [{"x", "a", "next", "p"}]}
MdpModel mdp_from_json(const Json& doc);
MdpModel load_mdp(const std::filesystem::path& path);

/// {"normalize": bool, "mu0": [X*A] (optional), "columns": [{"name", "entries": [{"x", "a", "value"}]}]}
FeatureSpace features_from_json(const MdpModel& model, const Json& doc);
FeatureSpace load_features(const MdpModel& model, const std::filesystem::path& path);

/// Shortest text that round-trips the double exactly.
std::string format_double(double v);

/// CSV with header t,objective,v_hat,eval_cost; a missing eval_cost is an empty cell.
void write_trace(const std::filesystem::path& path, const std::vector<TraceRow>& rows);
std::vector<TraceRow> read_trace(const std::filesystem::path& path);

}  // namespace dalp::io
