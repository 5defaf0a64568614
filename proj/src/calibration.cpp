#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "evomerge/estimators.hpp"

namespace evomerge {

void ResponseMatrix::validate() const {
    if (model_names.size() != correct.size()) throw CalibrationError("one correctness row per model required");
    for (std::size_t m = 0; m < correct.size(); ++m) {
        if (correct[m].size() != item_ids.size()) {
            throw CalibrationError("row for model '" + model_names[m] + "' has " + std::to_string(correct[m].size()) +
                                   " cells, expected " + std::to_string(item_ids.size()));
        }
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : item_ids) {
        if (id.empty() || !seen.insert(id).second) throw CalibrationError("item ids must be non-empty and unique");
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        const auto start = cell.find_first_not_of(' ');
        cells.push_back(start == std::string::npos ? std::string{} : cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

ResponseMatrix read_response_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open response matrix '" + path.string() + "'");
    ResponseMatrix matrix;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
    auto header = split_csv_line(line);
    if (header.size() < 2) throw ConfigError(path.string() + ": header must be model,<item ids...>");
    matrix.item_ids.assign(header.begin() + 1, header.end());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " cells");
        }
        matrix.model_names.push_back(cells[0]);
        std::vector<bool> row;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c] != "0" && cells[c] != "1") {
                throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": cells must be 0 or 1");
            }
            row.push_back(cells[c] == "1");
        }
        matrix.correct.push_back(std::move(row));
    }
    return matrix;
}

void write_response_csv(const ResponseMatrix& matrix, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "model";
    for (const auto& id : matrix.item_ids) out << ',' << id;
    out << '\n';
    for (std::size_t m = 0; m < matrix.model_names.size(); ++m) {
        out << matrix.model_names[m];
        for (bool y : matrix.correct[m]) out << ',' << (y ? '1' : '0');
        out << '\n';
    }
}

namespace {

constexpr double kMinDiscrimination = 0.05;

double log_sigmoid(double z) {
    return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

// Log-likelihood of one item column given abilities.
double item_ll(const IrtItem& item, std::span<const double> thetas, const std::vector<std::vector<bool>>& y,
               std::size_t j) {
    double ll = 0.0;
    for (std::size_t m = 0; m < thetas.size(); ++m) {
        const double z = item.a * (thetas[m] - item.b);
        ll += log_sigmoid(y[m][j] ? z : -z);
    }
    return ll;
}

IrtItem clip_item(IrtItem it) {
    it.a = std::clamp(it.a, kMinDiscrimination, kDiscriminationMax);
    it.b = std::clamp(it.b, kThetaMin, kThetaMax);
    return it;
}

// 2-D grid (log-spaced a, b in steps of 0.25) then compass search.
IrtItem fit_item(std::span<const double> thetas, const std::vector<std::vector<bool>>& y, std::size_t j) {
    static const std::vector<double> a_grid = [] {
        std::vector<double> g;
        for (int k = 0; k < 16; ++k) g.push_back(0.1 * std::pow(100.0, k / 15.0));
        return g;
    }();
    IrtItem best{1.0, 0.0};
    double best_ll = -std::numeric_limits<double>::infinity();
    for (double a : a_grid) {
        for (int k = 0; k <= 48; ++k) {
            const IrtItem cand{a, kThetaMin + 0.25 * k};
            const double ll = item_ll(cand, thetas, y, j);
            if (ll > best_ll) {
                best_ll = ll;
                best = cand;
            }
        }
    }

    double step_a = 0.25 * best.a;
    double step_b = 0.125;
    while (step_a > 1e-4 || step_b > 1e-4) {
        bool moved = false;
        const IrtItem moves[] = {{best.a + step_a, best.b},
                                 {best.a - step_a, best.b},
                                 {best.a, best.b + step_b},
                                 {best.a, best.b - step_b}};
        for (const auto& m : moves) {
            const IrtItem cand = clip_item(m);
            const double ll = item_ll(cand, thetas, y, j);
            if (ll > best_ll + 1e-12) {
                best_ll = ll;
                best = cand;
                moved = true;
            }
        }
        if (!moved) {
            step_a *= 0.5;
            step_b *= 0.5;
        }
    }
    return best;
}

void standardize(std::vector<double>& thetas) {
    const double n = static_cast<double>(thetas.size());
    const double mean = std::accumulate(thetas.begin(), thetas.end(), 0.0) / n;
    double var = 0.0;
    for (double t : thetas) var += (t - mean) * (t - mean);
    const double sd = std::sqrt(var / n);
    for (double& t : thetas) t = std::clamp(sd > 0.0 ? (t - mean) / sd : t - mean, kThetaMin, kThetaMax);
}

double logit(double p) {
    return std::log(p / (1.0 - p));
}

}  // namespace

CalibrationResult calibrate(const ResponseMatrix& matrix, const CalibrationOptions& options) {
    matrix.validate();
    const std::size_t n_models = matrix.model_names.size();
    const std::size_t n_items = matrix.item_ids.size();
    if (n_models < 3) throw CalibrationError("calibration needs at least 3 models, got " + std::to_string(n_models));
    if (n_items < 10) throw CalibrationError("calibration needs at least 10 items, got " + std::to_string(n_items));
    if (std::all_of(matrix.correct.begin(), matrix.correct.end(),
                    [&](const auto& row) { return row == matrix.correct.front(); })) {
        throw CalibrationError("degenerate response matrix: every model answered identically");
    }

    const auto& y = matrix.correct;
    std::vector<double> thetas(n_models);
    for (std::size_t m = 0; m < n_models; ++m) {
        const double score = static_cast<double>(std::count(y[m].begin(), y[m].end(), true));
        thetas[m] = logit((score + 0.5) / (static_cast<double>(n_items) + 1.0));
    }
    standardize(thetas);

    std::vector<IrtItem> items(n_items);
    CalibrationResult result;
    double previous = -std::numeric_limits<double>::infinity();
    for (std::size_t round = 1; round <= options.max_rounds; ++round) {
        result.rounds = round;
        const auto ni = static_cast<std::ptrdiff_t>(n_items);
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t j = 0; j < ni; ++j) {
            items[static_cast<std::size_t>(j)] = fit_item(thetas, y, static_cast<std::size_t>(j));
        }

        double ll = 0.0;
        for (std::size_t j = 0; j < n_items; ++j) ll += item_ll(items[j], thetas, y, j);
        result.log_likelihood = ll;
        if (std::fabs(ll - previous) < options.tolerance) break;
        previous = ll;
        if (round == options.max_rounds) break;

        for (std::size_t m = 0; m < n_models; ++m) {
            std::vector<ItemResponse> responses(n_items);
            for (std::size_t j = 0; j < n_items; ++j) responses[j] = {items[j], y[m][j]};
            thetas[m] = fit_theta(responses).theta;
        }
        standardize(thetas);
    }

    for (std::size_t j = 0; j < n_items; ++j) result.bank.items.emplace(matrix.item_ids[j], items[j]);
    if (!options.anchors.empty()) {
        result.bank.anchor_ids = options.anchors;
    } else {
        result.bank.anchor_ids = most_informative(result.bank.items, std::min(options.n_anchors, n_items));
    }
    result.bank.validate();
    result.thetas = std::move(thetas);
    return result;
}

ItemBank calibrate_item_bank(const ResponseMatrix& matrix, const CalibrationOptions& options) {
    return calibrate(matrix, options).bank;
}

}  // namespace evomerge
