#include "evomerge/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace evomerge {

using json = nlohmann::json;

double irt_prob(double theta, const IrtItem& item) {
    // keep the result strictly inside (0, 1)
    const double z = std::clamp(item.a * (theta - item.b), -30.0, 30.0);
    return 1.0 / (1.0 + std::exp(-z));
}

double item_information(const IrtItem& item, double theta) {
    const double p = irt_prob(theta, item);
    return item.a * item.a * p * (1.0 - p);
}

void ItemBank::validate() const {
    if (items.empty()) throw ConfigError("item bank has no items");
    if (anchor_ids.empty()) throw ConfigError("item bank has no anchors");
    for (const auto& [id, item] : items) {
        if (!(item.a > 0.0 && item.a <= kDiscriminationMax) || !(item.b >= kThetaMin && item.b <= kThetaMax)) {
            throw ConfigError("item '" + id + "' has parameters outside a in (0, 10], b in [-6, 6]");
        }
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : anchor_ids) {
        if (!items.contains(id)) throw ConfigError("anchor '" + id + "' is not in the item bank");
        if (!seen.insert(id).second) throw ConfigError("anchor '" + id + "' listed twice");
    }
}

json ItemBank::to_json() const {
    json j_items = json::object();
    for (const auto& [id, item] : items) j_items[id] = {{"a", item.a}, {"b", item.b}};
    return {{"items", j_items}, {"anchors", anchor_ids}};
}

ItemBank ItemBank::from_json(const json& j) {
    if (!j.is_object() || !j.contains("items") || !j["items"].is_object() || !j.contains("anchors") ||
        !j["anchors"].is_array()) {
        throw ConfigError("item bank must be {\"items\": {...}, \"anchors\": [...]}");
    }
    ItemBank bank;
    for (auto it = j["items"].begin(); it != j["items"].end(); ++it) {
        const auto& v = *it;
        if (!v.is_object() || !v.contains("a") || !v.contains("b") || !v["a"].is_number() || !v["b"].is_number()) {
            throw ConfigError("item bank entry '" + it.key() + "' needs numeric a and b");
        }
        bank.items.emplace(it.key(), IrtItem{v["a"].get<double>(), v["b"].get<double>()});
    }
    for (const auto& id : j["anchors"]) {
        if (!id.is_string()) throw ConfigError("item bank anchors must be strings");
        bank.anchor_ids.push_back(id.get<std::string>());
    }
    bank.validate();
    return bank;
}

ItemBank load_item_bank(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open item bank '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("item bank '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return ItemBank::from_json(j);
}

void save_item_bank(const ItemBank& bank, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write item bank '" + path.string() + "'");
    out << bank.to_json().dump(2) << '\n';
}

namespace {

double log_likelihood(std::span<const ItemResponse> responses, double theta) {
    double ll = 0.0;
    for (const auto& r : responses) {
        // log sigmoid(z) = -log1p(exp(-z)), evaluated stably for either sign
        const double z = r.item.a * (theta - r.item.b);
        const double s = r.correct ? z : -z;
        ll += s >= 0.0 ? -std::log1p(std::exp(-s)) : s - std::log1p(std::exp(s));
    }
    return ll;
}

template <class F>
double golden_section_max(F f, double lo, double hi, double tol) {
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    while (hi - lo > tol) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    return 0.5 * (lo + hi);
}

std::vector<ItemResponse> collect(const std::map<std::string, bool>& responses, const ItemBank& bank) {
    std::vector<ItemResponse> out;
    out.reserve(responses.size());
    for (const auto& [id, y] : responses) {
        auto it = bank.items.find(id);
        if (it == bank.items.end()) throw ConfigError("response for item '" + id + "' which is not in the item bank");
        out.push_back({it->second, y});
    }
    return out;
}

double clamp01(double x) {
    return std::clamp(x, 0.0, 1.0);
}

// a * x + (1 - a) * y, returning the input exactly at the endpoints and when
// both inputs agree.
double blend(double a, double x, double y) {
    if (a == 1.0 || x == y) return x;
    if (a == 0.0) return y;
    return a * x + (1.0 - a) * y;
}

}  // namespace

AbilityEstimate fit_theta(std::span<const ItemResponse> responses) {
    if (responses.empty()) throw std::invalid_argument("fit_theta needs at least one response");
    AbilityEstimate est;
    est.n_observed = responses.size();

    const auto n_correct = std::count_if(responses.begin(), responses.end(), [](const auto& r) { return r.correct; });
    if (n_correct == static_cast<std::ptrdiff_t>(responses.size()) || n_correct == 0) {
        est.theta = n_correct == 0 ? kThetaMin : kThetaMax;
        est.log_likelihood = log_likelihood(responses, est.theta);
        return est;
    }

    double best = kThetaMin;
    double best_ll = log_likelihood(responses, best);
    for (int k = 1; k <= 120; ++k) {
        const double theta = kThetaMin + 0.1 * k;
        const double ll = log_likelihood(responses, theta);
        if (ll > best_ll) {
            best_ll = ll;
            best = theta;
        }
    }
    const double lo = std::max(kThetaMin, best - 0.1);
    const double hi = std::min(kThetaMax, best + 0.1);
    const double refined = golden_section_max([&](double t) { return log_likelihood(responses, t); }, lo, hi, 1e-4);
    const double refined_ll = log_likelihood(responses, refined);
    if (refined_ll >= best_ll) {
        best = refined;
        best_ll = refined_ll;
    }
    est.theta = best;
    est.log_likelihood = best_ll;
    return est;
}

AbilityEstimate fit_theta(const std::map<std::string, bool>& responses, const ItemBank& bank) {
    return fit_theta(collect(responses, bank));
}

AbilityEstimate fit_theta(const EvalRecord& record, const ItemBank& bank) {
    std::map<std::string, bool> responses;
    for (std::size_t i = 0; i < record.item_ids.size(); ++i) responses[record.item_ids[i]] = record.correct[i];
    return fit_theta(responses, bank);
}

double extrapolate_accuracy(const EvalRecord& observed, const ItemBank& bank, double theta) {
    if (observed.item_ids.empty()) throw std::invalid_argument("IRT estimate needs at least one observed item");
    std::unordered_set<std::string> seen;
    double total = 0.0;
    for (std::size_t i = 0; i < observed.item_ids.size(); ++i) {
        if (!bank.items.contains(observed.item_ids[i])) {
            throw ConfigError("observed item '" + observed.item_ids[i] + "' is not in the item bank");
        }
        seen.insert(observed.item_ids[i]);
        if (observed.correct[i]) total += 1.0;
    }
    for (const auto& [id, item] : bank.items) {
        if (!seen.contains(id)) total += irt_prob(theta, item);
    }
    return clamp01(total / static_cast<double>(bank.items.size()));
}

double estimate_pirt(const EvalRecord& anchors, const ItemBank& bank) {
    if (anchors.item_ids.empty()) throw std::invalid_argument("P-IRT needs at least one anchor observation");
    return extrapolate_accuracy(anchors, bank, fit_theta(anchors, bank).theta);
}

double estimate_gpirt(const EvalRecord& anchors, const ItemBank& bank, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("GP-IRT lambda must lie in [0, 1]");
    return clamp01(blend(lambda, anchors.recompute_accuracy(), estimate_pirt(anchors, bank)));
}

double estimate_mpirt(std::span<const double> endpoint_thetas, std::span<const double> merge_weights,
                      const EvalRecord& anchors, const ItemBank& bank) {
    if (endpoint_thetas.size() != merge_weights.size() || endpoint_thetas.empty()) {
        throw std::invalid_argument("MP-IRT needs one weight per endpoint ability");
    }
    double sum = 0.0;
    for (double w : merge_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("MP-IRT weights must be finite and >= 0");
        sum += w;
    }
    if (!(sum > 0.0)) throw std::invalid_argument("MP-IRT weights sum to zero");
    double theta = 0.0;
    for (std::size_t i = 0; i < merge_weights.size(); ++i) theta += merge_weights[i] / sum * endpoint_thetas[i];
    return extrapolate_accuracy(anchors, bank, theta);
}

double estimate_gmpirt(double mpirt, double observed_anchor_mean, double alpha) {
    return clamp01(blend(std::clamp(alpha, 0.0, 1.0), mpirt, observed_anchor_mean));
}

double estimate_random(const Dataset& full, std::size_t n, std::uint64_t seed,
                       const std::function<EvalRecord(const Dataset&)>& evaluate) {
    SubsampleSpec spec;
    spec.n = n;
    spec.seed = seed;
    spec.strategy = SubsampleStrategy::random;
    const auto sample = subsample(full, spec);
    if (sample.empty()) throw std::invalid_argument("random estimator needs n >= 1");
    return evaluate(sample).accuracy;
}

void GmpirtAlpha::add(double mpirt, double observed_mean, double measured) {
    samples_.push_back({mpirt, observed_mean, measured});
}

double GmpirtAlpha::alpha() const {
    if (samples_.size() < 5) return 0.5;
    // measured - observed ~ alpha * (mpirt - observed)
    double num = 0.0;
    double den = 0.0;
    for (const auto& s : samples_) {
        const double x = s.mpirt - s.observed;
        num += x * (s.measured - s.observed);
        den += x * x;
    }
    if (!(den > 0.0)) return 0.5;
    return std::clamp(num / den, 0.0, 1.0);
}

std::string_view to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::full: return "full";
        case EstimatorKind::random: return "random";
        case EstimatorKind::pirt: return "pirt";
        case EstimatorKind::gpirt: return "gpirt";
        case EstimatorKind::mpirt: return "mpirt";
        case EstimatorKind::gmpirt: return "gmpirt";
    }
    return "?";
}

std::optional<EstimatorKind> parse_estimator_kind(std::string_view name) {
    for (auto k : {EstimatorKind::full, EstimatorKind::random, EstimatorKind::pirt, EstimatorKind::gpirt,
                   EstimatorKind::mpirt, EstimatorKind::gmpirt}) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

std::vector<std::string> most_informative(const std::map<std::string, IrtItem>& items, std::size_t n) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [id, item] : items) ranked.emplace_back(item_information(item, 0.0), id);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(n, ranked.size()); ++i) out.push_back(ranked[i].second);
    return out;
}

}  // namespace evomerge
