#include "evomerge/run_log.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace evomerge {

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

std::string format_genotype(const std::vector<double>& genes) {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < genes.size(); ++i) {
        if (i) out += ';';
        std::snprintf(buf, sizeof buf, "%.9g", genes[i]);
        out += buf;
    }
    return out;
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

nlohmann::json json_number(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

}  // namespace

RunLogger::RunLogger(std::filesystem::path csv_path, std::filesystem::path jsonl_path,
                     std::vector<std::string> objective_names)
    : csv_path_(std::move(csv_path)), jsonl_path_(std::move(jsonl_path)), objective_names_(std::move(objective_names)) {
    csv_.open(csv_path_, std::ios::trunc);
    if (!csv_) throw std::runtime_error("cannot open evaluation log '" + csv_path_.string() + "'");
    jsonl_.open(jsonl_path_, std::ios::trunc);
    if (!jsonl_) throw std::runtime_error("cannot open evaluation log '" + jsonl_path_.string() + "'");
}

std::vector<std::string> RunLogger::columns() const {
    std::vector<std::string> cols{"run_id", "generation", "individual_index", "genotype"};
    for (const auto& n : objective_names_) cols.push_back("objective_" + n);
    for (const auto& n : objective_names_) cols.push_back("estimator_" + n);
    cols.insert(cols.end(), {"checkpoint_hash", "wall_ms", "status"});
    return cols;
}

void RunLogger::log(const LogRow& row) {
    if (row.objectives.size() != objective_names_.size() || row.estimators.size() != objective_names_.size()) {
        throw std::invalid_argument("log row does not match the objective list");
    }
    const auto cols = columns();
    if (rows_ == 0) {
        for (std::size_t i = 0; i < cols.size(); ++i) csv_ << (i ? "," : "") << cols[i];
        csv_ << '\n';
    }

    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", row.wall_ms);
    std::vector<std::string> cells{row.run_id, std::to_string(row.generation), std::to_string(row.individual_index),
                                   format_genotype(row.genotype)};
    for (double v : row.objectives) cells.push_back(format_double(v));
    for (const auto& e : row.estimators) cells.push_back(e);
    cells.insert(cells.end(), {row.checkpoint_hash, wall, row.status});

    for (std::size_t i = 0; i < cells.size(); ++i) csv_ << (i ? "," : "") << csv_escape(cells[i]);
    csv_ << '\n';
    csv_.flush();

    nlohmann::ordered_json j;
    j["run_id"] = row.run_id;
    j["generation"] = row.generation;
    j["individual_index"] = row.individual_index;
    j["genotype"] = cells[3];
    for (std::size_t k = 0; k < objective_names_.size(); ++k) {
        j["objective_" + objective_names_[k]] = json_number(row.objectives[k]);
    }
    for (std::size_t k = 0; k < objective_names_.size(); ++k) j["estimator_" + objective_names_[k]] = row.estimators[k];
    j["checkpoint_hash"] = row.checkpoint_hash;
    j["wall_ms"] = row.wall_ms;
    j["status"] = row.status;
    jsonl_ << j.dump() << '\n';
    jsonl_.flush();

    if (!csv_ || !jsonl_) throw std::runtime_error("write to evaluation log failed");
    ++rows_;
}

std::vector<std::string> split_log_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

}  // namespace evomerge
