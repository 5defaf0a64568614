#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evomerge/evaluation.hpp"

namespace evomerge {

// 2PL item: P(correct | theta) = sigmoid(a * (theta - b)).
struct IrtItem {
    double a = 1.0;  // discrimination, (0, 10]
    double b = 0.0;  // difficulty, [-6, 6]
    bool operator==(const IrtItem&) const = default;
};

inline constexpr double kThetaMin = -6.0;
inline constexpr double kThetaMax = 6.0;
inline constexpr double kDiscriminationMax = 10.0;

struct ItemBank {
    std::map<std::string, IrtItem> items;
    std::vector<std::string> anchor_ids;

    void validate() const;
    nlohmann::json to_json() const;
    static ItemBank from_json(const nlohmann::json& j);

    bool operator==(const ItemBank&) const = default;
};

// {"items": {id: {"a": float, "b": float}}, "anchors": [ids]}
ItemBank load_item_bank(const std::filesystem::path& path);
void save_item_bank(const ItemBank& bank, const std::filesystem::path& path);

double irt_prob(double theta, const IrtItem& item);

struct AbilityEstimate {
    double theta = 0.0;
    double log_likelihood = 0.0;
    std::size_t n_observed = 0;
};

struct ItemResponse {
    IrtItem item;
    bool correct = false;
};

// Maximum likelihood ability over [-6, 6]: grid at 0.1 then golden-section
// refinement to 1e-4. All-correct / all-wrong pin to the box edge.
AbilityEstimate fit_theta(std::span<const ItemResponse> responses);
AbilityEstimate fit_theta(const std::map<std::string, bool>& responses, const ItemBank& bank);
AbilityEstimate fit_theta(const EvalRecord& record, const ItemBank& bank);

// Observed bits for the evaluated items plus 2PL predictions at theta for
// every other bank item, averaged over the bank.
double extrapolate_accuracy(const EvalRecord& observed, const ItemBank& bank, double theta);

double estimate_pirt(const EvalRecord& anchors, const ItemBank& bank);
double estimate_gpirt(const EvalRecord& anchors, const ItemBank& bank, double lambda = 0.5);
// Ability of the merge = normalized-weight combination of endpoint abilities.
double estimate_mpirt(std::span<const double> endpoint_thetas, std::span<const double> merge_weights,
                      const EvalRecord& anchors, const ItemBank& bank);
double estimate_gmpirt(double mpirt, double observed_anchor_mean, double alpha);
// Accuracy on a seeded random subsample of n items.
double estimate_random(const Dataset& full, std::size_t n, std::uint64_t seed,
                       const std::function<EvalRecord(const Dataset&)>& evaluate);

// Least-squares blend weight for GMP-IRT, refit from (mpirt, observed,
// measured) triples. 0.5 until five triples exist; clipped to [0, 1].
class GmpirtAlpha {
public:
    void add(double mpirt, double observed_mean, double measured);
    double alpha() const;
    std::size_t size() const { return samples_.size(); }

private:
    struct Sample {
        double mpirt, observed, measured;
    };
    std::vector<Sample> samples_;
};

enum class EstimatorKind { full, random, pirt, gpirt, mpirt, gmpirt };

std::string_view to_string(EstimatorKind k);
std::optional<EstimatorKind> parse_estimator_kind(std::string_view name);
inline bool is_irt(EstimatorKind k) {
    return k == EstimatorKind::pirt || k == EstimatorKind::gpirt || k == EstimatorKind::mpirt ||
           k == EstimatorKind::gmpirt;
}

// models x items correctness matrix.
struct ResponseMatrix {
    std::vector<std::string> model_names;
    std::vector<std::string> item_ids;
    std::vector<std::vector<bool>> correct;

    void validate() const;
};

// CSV: header "model,<item id>,...", then one row per model with 0/1 cells.
ResponseMatrix read_response_csv(const std::filesystem::path& path);
void write_response_csv(const ResponseMatrix& matrix, const std::filesystem::path& path);

class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CalibrationOptions {
    std::size_t n_anchors = 50;                // clipped to the item count
    std::vector<std::string> anchors;          // overrides automatic selection
    std::size_t max_rounds = 10;
    double tolerance = 1e-5;                   // on the log-likelihood change
};

struct CalibrationResult {
    ItemBank bank;
    std::vector<double> thetas;  // per model
    double log_likelihood = 0.0;
    std::size_t rounds = 0;
};

// Alternating maximization: items given abilities, abilities given items.
CalibrationResult calibrate(const ResponseMatrix& matrix, const CalibrationOptions& options = {});
ItemBank calibrate_item_bank(const ResponseMatrix& matrix, const CalibrationOptions& options = {});

// Fisher information a^2 p (1 - p) at theta.
double item_information(const IrtItem& item, double theta);
// The n items with the largest information at theta = 0 (ties: id order).
std::vector<std::string> most_informative(const std::map<std::string, IrtItem>& items, std::size_t n);

}  // namespace evomerge
