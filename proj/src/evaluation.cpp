#include "evomerge/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "evomerge/philox.hpp"
#include "evomerge/subprocess.hpp"

namespace evomerge {

using json = nlohmann::json;

// ---------------------------------------------------------------- datasets

namespace {

EvalItem item_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const char* key : {"id", "prompt", "gold"}) {
        if (!j.contains(key) || !j[key].is_string()) throw ConfigError(where + ": missing string field '" + key + "'");
    }
    EvalItem item;
    item.id = j["id"].get<std::string>();
    item.prompt = j["prompt"].get<std::string>();
    item.gold = j["gold"].get<std::string>();
    if (auto it = j.find("language"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw ConfigError(where + ": 'language' must be a string");
        item.language = it->get<std::string>();
    }
    if (auto it = j.find("features"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw ConfigError(where + ": 'features' must be an array of numbers");
        std::vector<double> f;
        for (const auto& v : *it) {
            if (!v.is_number()) throw ConfigError(where + ": 'features' must be an array of numbers");
            f.push_back(v.get<double>());
        }
        item.features = std::move(f);
    }
    return item;
}

}  // namespace

Dataset parse_dataset(std::string_view jsonl, const std::string& source) {
    Dataset items;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        const auto end = std::min(jsonl.find('\n', pos), jsonl.size());
        const auto line = jsonl.substr(pos, end - pos);
        ++line_no;
        pos = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            if (end == jsonl.size()) break;
            continue;
        }
        const std::string where = source + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ConfigError(where + ": invalid JSON: " + e.what());
        }
        items.push_back(item_from_json(j, where));
        if (end == jsonl.size()) break;
    }
    validate_dataset(items);
    return items;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str(), path.string());
}

void save_dataset(const Dataset& items, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write dataset '" + path.string() + "'");
    for (const auto& item : items) {
        json j = {{"id", item.id}, {"prompt", item.prompt}, {"gold", item.gold}};
        if (item.language) j["language"] = *item.language;
        if (item.features) j["features"] = *item.features;
        out << j.dump() << '\n';
    }
}

void validate_dataset(const Dataset& items) {
    std::unordered_set<std::string> seen;
    for (const auto& item : items) {
        if (item.id.empty()) throw ConfigError("dataset item with empty id");
        if (item.gold.empty()) throw ConfigError("dataset item '" + item.id + "' has an empty gold answer");
        if (!seen.insert(item.id).second) throw ConfigError("duplicate dataset id '" + item.id + "'");
    }
}

// ---------------------------------------------------------------- records

EvalRecord EvalRecord::from_bits(std::vector<std::string> ids, std::vector<bool> bits) {
    if (ids.size() != bits.size()) throw std::invalid_argument("EvalRecord: ids and bits differ in length");
    EvalRecord r;
    r.item_ids = std::move(ids);
    r.correct = std::move(bits);
    r.accuracy = r.recompute_accuracy();
    return r;
}

std::size_t EvalRecord::n_correct() const {
    return static_cast<std::size_t>(std::count(correct.begin(), correct.end(), true));
}

double EvalRecord::recompute_accuracy() const {
    if (correct.empty()) return 0.0;
    return static_cast<double>(n_correct()) / static_cast<double>(correct.size());
}

bool EvalRecord::consistent() const {
    return item_ids.size() == correct.size() && accuracy == recompute_accuracy();
}

json EvalRecord::to_json() const {
    return {{"item_ids", item_ids}, {"correct", correct}, {"accuracy", accuracy}, {"missing", missing}};
}

EvalRecord EvalRecord::from_json(const json& j) {
    EvalRecord r = from_bits(j.at("item_ids").get<std::vector<std::string>>(), j.at("correct").get<std::vector<bool>>());
    if (j.contains("missing")) r.missing = j["missing"].get<std::vector<std::string>>();
    if (j.contains("accuracy") && j["accuracy"].get<double>() != r.accuracy) {
        throw std::invalid_argument("EvalRecord: stored accuracy disagrees with the correctness bits");
    }
    return r;
}

// ---------------------------------------------------------------- subsampling

std::string_view to_string(SubsampleStrategy s) {
    switch (s) {
        case SubsampleStrategy::random: return "random";
        case SubsampleStrategy::stratified: return "stratified";
        case SubsampleStrategy::anchors: return "anchors";
    }
    return "?";
}

std::optional<SubsampleStrategy> parse_subsample_strategy(std::string_view name) {
    if (name == "random") return SubsampleStrategy::random;
    if (name == "stratified") return SubsampleStrategy::stratified;
    if (name == "anchors") return SubsampleStrategy::anchors;
    return std::nullopt;
}

namespace {

// k distinct indices out of [0, n), sorted. Partial Fisher-Yates.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed, std::uint64_t stream) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    StreamRng rng(seed, stream);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

Dataset subsample(const Dataset& items, const SubsampleSpec& spec) {
    const std::size_t size = items.size();
    if (spec.n > size) {
        throw ConfigError("subsample of " + std::to_string(spec.n) + " items requested from a dataset of " +
                          std::to_string(size));
    }

    if (spec.strategy == SubsampleStrategy::anchors) {
        std::unordered_map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < size; ++i) index.emplace(items[i].id, i);
        Dataset out;
        for (const auto& id : spec.anchors) {
            auto it = index.find(id);
            if (it == index.end()) throw ConfigError("unknown anchor id '" + id + "'");
            out.push_back(items[it->second]);
        }
        return out;
    }

    const std::size_t n = spec.n == 0 ? size : spec.n;
    if (n == size) return items;

    std::vector<std::size_t> chosen;
    if (spec.strategy == SubsampleStrategy::random) {
        chosen = sample_indices(size, n, spec.seed, hash_string("subsample/random"));
    } else {
        // Groups in order of first appearance; untagged items share one group.
        std::vector<std::string> order;
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < size; ++i) {
            const std::string lang = items[i].language.value_or("");
            auto [it, inserted] = groups.try_emplace(lang);
            if (inserted) order.push_back(lang);
            it->second.push_back(i);
        }
        std::vector<std::size_t> quota(order.size());
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t assigned = 0;
        for (std::size_t g = 0; g < order.size(); ++g) {
            const double exact = static_cast<double>(n) * static_cast<double>(groups[order[g]].size()) /
                                 static_cast<double>(size);
            quota[g] = static_cast<std::size_t>(std::floor(exact));
            assigned += quota[g];
            remainders.emplace_back(exact - static_cast<double>(quota[g]), g);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++quota[remainders[r].second];

        for (std::size_t g = 0; g < order.size(); ++g) {
            const auto& members = groups[order[g]];
            const auto picks =
                sample_indices(members.size(), quota[g], spec.seed, hash_string("subsample/stratified/" + order[g]));
            for (auto p : picks) chosen.push_back(members[p]);
        }
        std::sort(chosen.begin(), chosen.end());
    }

    Dataset out;
    out.reserve(chosen.size());
    for (auto i : chosen) out.push_back(items[i]);
    return out;
}

// ---------------------------------------------------------------- graders

std::optional<char> extract_choice(std::string_view response) {
    static const std::regex pattern(R"(\b([A-Da-d])\b)");
    std::optional<char> last;
    try {
        for (std::cregex_iterator it(response.data(), response.data() + response.size(), pattern), end; it != end;
             ++it) {
            const char c = (*it)[1].str()[0];
            last = static_cast<char>(c >= 'a' ? c - 'a' + 'A' : c);
        }
    } catch (const std::regex_error&) {
        return std::nullopt;
    }
    return last;
}

namespace {

const std::regex& number_pattern() {
    static const std::regex pattern(R"([-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?)");
    return pattern;
}

std::optional<double> to_number(std::string text) {
    text.erase(std::remove(text.begin(), text.end(), ','), text.end());
    if (!text.empty() && text.front() == '+') text.erase(text.begin());
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return value;
}

}  // namespace

std::optional<double> extract_last_number(std::string_view response) {
    std::optional<std::string> last;
    try {
        for (std::cregex_iterator it(response.data(), response.data() + response.size(), number_pattern()), end;
             it != end; ++it) {
            last = it->str();
        }
    } catch (const std::regex_error&) {
        return std::nullopt;
    }
    if (!last) return std::nullopt;
    return to_number(*last);
}

double parse_gold_number(std::string_view gold) {
    const auto begin = gold.find_first_not_of(" \t\r\n");
    const auto end = gold.find_last_not_of(" \t\r\n");
    if (begin == std::string_view::npos) throw ConfigError("empty numeric gold answer");
    const std::string trimmed(gold.substr(begin, end - begin + 1));
    std::optional<double> value;
    if (std::regex_match(trimmed, number_pattern())) value = to_number(trimmed);
    if (!value) throw ConfigError("gold answer '" + std::string(gold) + "' is not a decimal number");
    return *value;
}

bool grade_multiple_choice(std::string_view response, std::string_view gold) {
    if (gold.size() != 1 || gold[0] < 'A' || gold[0] > 'D') {
        throw ConfigError("multiple-choice gold must be one of A, B, C, D (got '" + std::string(gold) + "')");
    }
    const auto choice = extract_choice(response);
    return choice && *choice == gold[0];
}

bool grade_math(std::string_view response, std::string_view gold, const std::optional<std::string>& expected_lang,
                const LanguageIdentifier& lang_id) {
    const double target = parse_gold_number(gold);
    const auto got = extract_last_number(response);
    if (!got) return false;
    const double diff = std::fabs(*got - target);
    const bool numeric_ok = diff <= 1e-9 || diff <= 1e-6 * std::fabs(target);
    if (!numeric_ok) return false;
    if (!expected_lang) return true;
    try {
        return lang_id && lang_id(response) == *expected_lang;
    } catch (...) {
        return false;
    }
}

// ---------------------------------------------------------------- config

std::string_view to_string(Grader g) {
    return g == Grader::math ? "math" : "multiple_choice";
}

std::optional<Grader> parse_grader(std::string_view name) {
    if (name == "multiple_choice") return Grader::multiple_choice;
    if (name == "math") return Grader::math;
    return std::nullopt;
}

std::string_view to_string(EvaluatorKind k) {
    switch (k) {
        case EvaluatorKind::constant: return "constant";
        case EvaluatorKind::toy_mlp: return "toy_mlp";
        case EvaluatorKind::external: return "external";
    }
    return "?";
}

std::optional<EvaluatorKind> parse_evaluator_kind(std::string_view name) {
    if (name == "constant") return EvaluatorKind::constant;
    if (name == "toy_mlp") return EvaluatorKind::toy_mlp;
    if (name == "external") return EvaluatorKind::external;
    return std::nullopt;
}

EvaluatorConfig parse_evaluator_spec(std::string_view spec) {
    EvaluatorConfig cfg;
    const auto colon = spec.find(':');
    const auto head = spec.substr(0, colon);
    const auto tail = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
    const auto kind = parse_evaluator_kind(head);
    if (!kind) throw ConfigError("unknown evaluator '" + std::string(head) + "'");
    cfg.kind = *kind;
    switch (cfg.kind) {
        case EvaluatorKind::constant:
            if (tail.empty() || tail == "gold") {
                cfg.constant_mode = ConstantMode::gold;
            } else if (tail == "empty") {
                cfg.constant_mode = ConstantMode::text;
            } else if (tail.starts_with("text=")) {
                cfg.constant_mode = ConstantMode::text;
                cfg.constant_text = std::string(tail.substr(5));
            } else {
                throw ConfigError("constant evaluator takes gold, empty or text=<response>");
            }
            break;
        case EvaluatorKind::toy_mlp:
            if (!tail.empty()) throw ConfigError("toy_mlp evaluator takes no arguments");
            break;
        case EvaluatorKind::external: {
            std::istringstream words{std::string(tail)};
            for (std::string w; words >> w;) cfg.command.push_back(w);
            if (cfg.command.empty()) throw ConfigError("external evaluator needs a command");
            break;
        }
    }
    return cfg;
}

// ---------------------------------------------------------------- toy MLP

ToyMlp::ToyMlp(const TensorMap& model) {
    for (std::size_t i = 0;; ++i) {
        const std::string w_name = "layers." + std::to_string(i) + ".weight";
        const std::string b_name = "layers." + std::to_string(i) + ".bias";
        if (!model.contains(w_name)) break;
        const Tensor& w = model.at(w_name);
        if (!model.contains(b_name)) throw EvaluatorError("toy model is missing '" + b_name + "'");
        const Tensor& b = model.at(b_name);
        if (w.shape.size() != 2) throw EvaluatorError("'" + w_name + "' must be 2-D [out, in]");
        if (b.shape.size() != 1 || b.shape[0] != w.shape[0]) {
            throw EvaluatorError("'" + b_name + "' must have shape [" + std::to_string(w.shape[0]) + "]");
        }
        Layer layer;
        layer.out = static_cast<std::size_t>(w.shape[0]);
        layer.in = static_cast<std::size_t>(w.shape[1]);
        if (!layers_.empty() && layers_.back().out != layer.in) {
            throw EvaluatorError("'" + w_name + "' expects " + std::to_string(layer.in) + " inputs but the previous layer has " +
                                 std::to_string(layers_.back().out) + " outputs");
        }
        layer.weight = w.to_f64();
        layer.bias = b.to_f64();
        layers_.push_back(std::move(layer));
    }
    if (layers_.empty()) throw EvaluatorError("toy model has no 'layers.0.weight'");
    if (layers_.back().out == 0 || layers_.back().out > 4) {
        throw EvaluatorError("toy model must have 1 to 4 output classes, has " + std::to_string(layers_.back().out));
    }
}

char ToyMlp::predict(std::span<const double> features) const {
    if (features.size() != input_size()) {
        throw EvaluatorError("feature vector has " + std::to_string(features.size()) + " entries, model expects " +
                             std::to_string(input_size()));
    }
    std::vector<double> act(features.begin(), features.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        next.assign(layer.out, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o) {
            double s = layer.bias[o];
            const double* row = layer.weight.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) s += row[i] * act[i];
            next[o] = (l + 1 < layers_.size()) ? std::max(0.0, s) : s;
        }
        act.swap(next);
    }
    std::size_t best = 0;
    for (std::size_t o = 1; o < act.size(); ++o) {
        if (act[o] > act[best]) best = o;
    }
    return static_cast<char>('A' + best);
}

std::vector<char> ToyMlp::predict_batch(std::span<const std::vector<double>> features) const {
    for (const auto& f : features) {
        if (f.size() != input_size()) {
            throw EvaluatorError("feature vector has " + std::to_string(f.size()) + " entries, model expects " +
                                 std::to_string(input_size()));
        }
    }
    std::vector<char> out(features.size());
    const auto n = static_cast<std::ptrdiff_t>(features.size());
#pragma omp parallel for schedule(static) if (n > 256)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = predict(features[static_cast<std::size_t>(i)]);
    return out;
}

char mlp_forward(const TensorMap& model, std::span<const double> features) {
    return ToyMlp(model).predict(features);
}

// ---------------------------------------------------------------- external

std::map<std::string, Response> run_external_evaluator(const std::vector<std::string>& command,
                                                       const std::filesystem::path& checkpoint, const Dataset& items) {
    if (command.empty()) throw ConfigError("external evaluator needs a command");
    std::vector<std::string> argv = command;
    argv.push_back(checkpoint.string());

    std::string input;
    for (const auto& item : items) {
        input += json{{"id", item.id}, {"prompt", item.prompt}}.dump();
        input += '\n';
    }

    ProcessResult proc;
    try {
        proc = run_process(argv, input);
    } catch (const std::system_error& e) {
        throw EvaluatorError(std::string("cannot start external evaluator: ") + e.what());
    }
    const std::string excerpt = proc.err.size() > 2000 ? proc.err.substr(proc.err.size() - 2000) : proc.err;
    if (proc.exit_code != 0) {
        const std::string how = proc.signal ? "was killed by signal " + std::to_string(proc.signal)
                                            : "exited with status " + std::to_string(proc.exit_code);
        throw EvaluatorError("external evaluator " + how, excerpt);
    }

    std::unordered_set<std::string> known;
    for (const auto& item : items) known.insert(item.id);

    std::map<std::string, Response> responses;
    std::istringstream lines(proc.out);
    std::size_t line_no = 0;
    for (std::string line; std::getline(lines, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            throw EvaluatorError("external evaluator: stdout line " + std::to_string(line_no) + " is not JSON", excerpt);
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("response") ||
            !j["response"].is_string()) {
            throw EvaluatorError("external evaluator: line " + std::to_string(line_no) +
                                     " must be {\"id\": string, \"response\": string}",
                                 excerpt);
        }
        const auto id = j["id"].get<std::string>();
        if (!known.contains(id)) throw EvaluatorError("external evaluator: unknown id '" + id + "'", excerpt);
        Response r{j["response"].get<std::string>(), std::nullopt};
        if (auto it = j.find("language"); it != j.end() && it->is_string()) r.language = it->get<std::string>();
        if (!responses.emplace(id, std::move(r)).second) {
            throw EvaluatorError("external evaluator: duplicate response for id '" + id + "'", excerpt);
        }
    }
    return responses;
}

// ---------------------------------------------------------------- evaluate

EvalRecord evaluate_checkpoint(const ModelHandle& model, const Dataset& items, const EvaluatorConfig& config,
                               const LanguageIdentifier& lang_id) {
    std::map<std::string, Response> responses;
    switch (config.kind) {
        case EvaluatorKind::constant:
            for (const auto& item : items) {
                responses.emplace(item.id,
                                  Response{config.constant_mode == ConstantMode::gold ? item.gold : config.constant_text,
                                           std::nullopt});
            }
            break;
        case EvaluatorKind::toy_mlp: {
            std::optional<TensorMap> loaded;
            if (!model.tensors) loaded = read_checkpoint(model.path);
            const ToyMlp mlp(model.tensors ? *model.tensors : *loaded);
            std::vector<std::vector<double>> features;
            for (const auto& item : items) {
                if (!item.features) throw ConfigError("toy_mlp evaluator: item '" + item.id + "' has no features");
                features.push_back(*item.features);
            }
            const auto predictions = mlp.predict_batch(features);
            for (std::size_t i = 0; i < items.size(); ++i) {
                responses.emplace(items[i].id, Response{std::string(1, predictions[i]), std::nullopt});
            }
            break;
        }
        case EvaluatorKind::external:
            if (model.path.empty()) throw EvaluatorError("external evaluator needs a checkpoint path");
            responses = run_external_evaluator(config.command, model.path, items);
            break;
    }

    std::vector<std::string> ids;
    std::vector<bool> bits;
    std::vector<std::string> missing;
    ids.reserve(items.size());
    bits.reserve(items.size());
    for (const auto& item : items) {
        ids.push_back(item.id);
        auto it = responses.find(item.id);
        if (it == responses.end()) {
            missing.push_back(item.id);
            bits.push_back(false);
            continue;
        }
        const Response& r = it->second;
        bool ok = false;
        if (config.grader == Grader::multiple_choice) {
            ok = grade_multiple_choice(r.text, item.gold);
        } else {
            const auto expected = config.check_language ? item.language : std::nullopt;
            if (r.language) {
                const std::string tag = *r.language;
                ok = grade_math(r.text, item.gold, expected, [&tag](std::string_view) { return tag; });
            } else {
                ok = grade_math(r.text, item.gold, expected, lang_id);
            }
        }
        bits.push_back(ok);
    }
    EvalRecord record = EvalRecord::from_bits(std::move(ids), std::move(bits));
    record.missing = std::move(missing);
    return record;
}

}  // namespace evomerge
