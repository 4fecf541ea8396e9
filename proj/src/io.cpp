#include "dalp/io.hpp"

#include "dalp/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dalp::io {

namespace fs = std::filesystem;

Json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const Json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

namespace {

template <class T>
T field(const Json& doc, const char* key) {
    if (!doc.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what());
    }
}

}  // namespace

MdpModel mdp_from_json(const Json& doc) {
    const auto x = field<std::size_t>(doc, "num_states");
    const auto a = field<std::size_t>(doc, "num_actions");
    auto loss = field<std::vector<double>>(doc, "loss");
    std::vector<MdpModel::Entry> entries;
    for (const auto& t : field<Json>(doc, "transitions"))
        entries.push_back({field<std::size_t>(t, "x"), field<std::size_t>(t, "a"), field<std::size_t>(t, "next"),
                           field<double>(t, "p")});
    return MdpModel(x, a, std::move(loss), entries);
}

MdpModel load_mdp(const fs::path& path) { return mdp_from_json(read_json(path)); }

FeatureSpace features_from_json(const MdpModel& model, const Json& doc) {
    std::vector<FeatureSpace::Column> columns;
    for (const auto& c : field<Json>(doc, "columns")) {
        FeatureSpace::Column col{c.value("name", "phi" + std::to_string(columns.size())), {}};
        for (const auto& e : field<Json>(c, "entries")) {
            const auto x = field<std::size_t>(e, "x");
            const auto a = field<std::size_t>(e, "a");
            if (x >= model.num_states() || a >= model.num_actions())
                throw ConfigError("feature entry outside the state-action space");
            col.entries.push_back({static_cast<std::uint32_t>(model.pair_index(x, a)), field<double>(e, "value")});
        }
        columns.push_back(std::move(col));
    }
    std::optional<OccupancyVector> mu0;
    if (doc.contains("mu0")) mu0 = field<std::vector<double>>(doc, "mu0");
    return FeatureSpace(model, std::move(columns), std::move(mu0), doc.value("normalize", false));
}

FeatureSpace load_features(const MdpModel& model, const fs::path& path) {
    return features_from_json(model, read_json(path));
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_trace(const fs::path& path, const std::vector<TraceRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "t,objective,v_hat,eval_cost\n";
    for (const auto& r : rows) {
        out << r.t << ',' << format_double(r.objective) << ',' << format_double(r.v_hat) << ',';
        if (r.eval_cost) out << format_double(*r.eval_cost);
        out << '\n';
    }
}

std::vector<TraceRow> read_trace(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "t,objective,v_hat,eval_cost")
        throw ConfigError(path.string() + ": unexpected trace header");

    auto parse = [&](const std::string& cell, auto& value) {
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
            throw ConfigError(path.string() + ": bad trace cell '" + cell + "'");
    };

    std::vector<TraceRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (cells.size() != 4) throw ConfigError(path.string() + ": expected 4 cells per row");
        TraceRow r;
        parse(cells[0], r.t);
        parse(cells[1], r.objective);
        parse(cells[2], r.v_hat);
        if (!cells[3].empty()) {
            double v = 0.0;
            parse(cells[3], v);
            r.eval_cost = v;
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace dalp::io
