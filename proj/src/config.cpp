#include "evomerge/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "evomerge/run_log.hpp"

namespace evomerge {

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::optional<std::string> closest_key(std::string_view key, const std::vector<std::string>& allowed) {
    std::optional<std::string> best;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    for (const auto& k : allowed) {
        const auto d = edit_distance(key, k);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    if (!best || best_d > std::max<std::size_t>(2, key.size() / 3)) return std::nullopt;
    return best;
}

namespace {

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

std::string index_path(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

void expect_map(const YAML::Node& n, const std::string& path) {
    if (!n.IsMap()) throw ConfigParseError(path.empty() ? "<root>" : path, "expected a mapping");
}

void check_keys(const YAML::Node& n, const std::string& path, const std::vector<std::string>& allowed) {
    expect_map(n, path);
    for (const auto& kv : n) {
        const auto key = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), key) != allowed.end()) continue;
        std::string msg = "unknown key '" + key + "'";
        if (auto hint = closest_key(key, allowed)) msg += "; did you mean '" + *hint + "'?";
        throw ConfigParseError(join(path, key), msg);
    }
}

std::string get_string(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw ConfigParseError(path, "expected a string");
    return n.as<std::string>();
}

double get_double(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw ConfigParseError(path, "expected a number");
    double v;
    if (!YAML::convert<double>::decode(n, v) || !std::isfinite(v)) throw ConfigParseError(path, "expected a finite number");
    return v;
}

std::uint64_t get_uint(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw ConfigParseError(path, "expected a non-negative integer");
    const auto s = n.Scalar();
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigParseError(path, "expected a non-negative integer, got '" + s + "'");
    }
    std::uint64_t v;
    if (!YAML::convert<std::uint64_t>::decode(n, v)) throw ConfigParseError(path, "integer out of range");
    return v;
}

bool get_bool(const YAML::Node& n, const std::string& path) {
    bool v;
    if (!n.IsScalar() || !YAML::convert<bool>::decode(n, v)) throw ConfigParseError(path, "expected true or false");
    return v;
}

std::vector<std::string> get_string_list(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence()) throw ConfigParseError(path, "expected a list");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(get_string(n[i], index_path(path, i)));
    return out;
}

Bound get_bound(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence() || n.size() != 2) throw ConfigParseError(path, "expected [lo, hi]");
    Bound b{get_double(n[0], index_path(path, 0)), get_double(n[1], index_path(path, 1))};
    if (!(b.lo < b.hi)) {
        throw ConfigParseError(path, "lower bound " + format_double(b.lo) + " must be below upper bound " +
                                         format_double(b.hi));
    }
    return b;
}

constexpr Bound kDensityBound{0.1, 1.0};
constexpr Bound kDropRateBound{0.0, 0.9};

template <class T, class Parse>
T get_enum(const YAML::Node& n, const std::string& path, Parse parse, const std::string& choices) {
    const auto s = get_string(n, path);
    auto v = parse(s);
    if (!v) throw ConfigParseError(path, "unknown value '" + s + "'; expected one of " + choices);
    return *v;
}

ModelsConfig parse_models(const YAML::Node& n, const std::string& path) {
    check_keys(n, path, {"base", "endpoints"});
    ModelsConfig m;
    if (n["base"] && !n["base"].IsNull()) m.base = get_string(n["base"], join(path, "base"));
    if (!n["endpoints"]) throw ConfigParseError(join(path, "endpoints"), "required");
    m.endpoints = get_string_list(n["endpoints"], join(path, "endpoints"));
    if (m.endpoints.empty()) throw ConfigParseError(join(path, "endpoints"), "at least one endpoint required");
    return m;
}

MergeConfig parse_merge(const YAML::Node& n, const std::string& path, std::size_t n_endpoints) {
    check_keys(n, path, {"method", "density", "drop_rate", "evolve_density", "evolve_drop_rate", "bounds"});
    MergeConfig m;
    if (!n["method"]) throw ConfigParseError(join(path, "method"), "required");
    m.method = get_enum<MergeMethod>(n["method"], join(path, "method"), parse_merge_method,
                                     "linear, slerp, task_arithmetic, ties, dare_linear, dare_ties");
    if (n["density"]) m.density = get_double(n["density"], join(path, "density"));
    if (n["drop_rate"]) m.drop_rate = get_double(n["drop_rate"], join(path, "drop_rate"));
    if (n["evolve_density"]) m.evolve_density = get_bool(n["evolve_density"], join(path, "evolve_density"));
    if (n["evolve_drop_rate"]) m.evolve_drop_rate = get_bool(n["evolve_drop_rate"], join(path, "evolve_drop_rate"));
    if (!(m.density > 0.0 && m.density <= 1.0)) throw ConfigParseError(join(path, "density"), "must lie in (0, 1]");
    if (!(m.drop_rate >= 0.0 && m.drop_rate < 1.0)) throw ConfigParseError(join(path, "drop_rate"), "must lie in [0, 1)");

    GenotypeSpec g;
    g.method = m.method;
    g.n_endpoints = n_endpoints;
    g.evolve_density = m.evolve_density;
    g.evolve_drop_rate = m.evolve_drop_rate;
    const std::size_t n_weights = g.weight_genes();
    const std::size_t n_genes = g.gene_count();

    const auto bpath = join(path, "bounds");
    Bound weight_bound{0.0, 1.0};
    if (n["bounds"]) {
        const auto& b = n["bounds"];
        if (!b.IsSequence() || b.size() == 0) throw ConfigParseError(bpath, "expected [lo, hi] or a list of [lo, hi]");
        if (b[0].IsSequence()) {
            if (b.size() != n_genes) {
                throw ConfigParseError(bpath, "expected " + std::to_string(n_genes) + " [lo, hi] pairs, got " +
                                                  std::to_string(b.size()));
            }
            for (std::size_t i = 0; i < b.size(); ++i) m.bounds.push_back(get_bound(b[i], index_path(bpath, i)));
        } else {
            weight_bound = get_bound(b, bpath);
        }
    }
    if (m.bounds.empty()) {
        m.bounds.assign(n_weights, weight_bound);
        if (m.evolve_density) m.bounds.push_back(kDensityBound);
        if (m.evolve_drop_rate) m.bounds.push_back(kDropRateBound);
    }
    std::size_t next = n_weights;
    if (m.method == MergeMethod::slerp && (m.bounds[0].lo < 0.0 || m.bounds[0].hi > 1.0)) {
        throw ConfigParseError(bpath, "slerp t must stay within [0, 1]");
    }
    if (m.evolve_density) {
        const auto& b = m.bounds[next++];
        if (!(b.lo > 0.0 && b.hi <= 1.0)) throw ConfigParseError(bpath, "density gene bounds must lie in (0, 1]");
    }
    if (m.evolve_drop_rate) {
        const auto& b = m.bounds[next++];
        if (!(b.lo >= 0.0 && b.hi < 1.0)) throw ConfigParseError(bpath, "drop_rate gene bounds must lie in [0, 1)");
    }
    return m;
}

EvaluatorConfig parse_evaluator(const YAML::Node& n, const std::string& path, std::vector<std::string>* warnings) {
    if (n.IsScalar()) {
        try {
            return parse_evaluator_spec(n.Scalar());
        } catch (const ConfigError& e) {
            throw ConfigParseError(path, e.what());
        }
    }
    check_keys(n, path, {"type", "grader", "mode", "text", "command", "check_language", "reentrant"});
    EvaluatorConfig e;
    if (!n["type"]) throw ConfigParseError(join(path, "type"), "required");
    auto type = get_string(n["type"], join(path, "type"));
    if (type == "lm-eval") {
        if (warnings) {
            warnings->push_back(join(path, "type") + ": 'lm-eval' is deprecated; use 'external'");
        }
        type = "external";
    }
    const auto kind = parse_evaluator_kind(type);
    if (!kind) throw ConfigParseError(join(path, "type"), "unknown evaluator '" + type + "'; expected constant, toy_mlp or external");
    e.kind = *kind;
    if (n["grader"]) {
        e.grader = get_enum<Grader>(n["grader"], join(path, "grader"), parse_grader, "multiple_choice, math");
    }
    if (n["mode"]) {
        const auto mode = get_string(n["mode"], join(path, "mode"));
        if (mode == "gold") e.constant_mode = ConstantMode::gold;
        else if (mode == "text") e.constant_mode = ConstantMode::text;
        else throw ConfigParseError(join(path, "mode"), "expected gold or text");
    }
    if (n["text"]) e.constant_text = get_string(n["text"], join(path, "text"));
    if (n["command"]) {
        const auto& c = n["command"];
        if (c.IsScalar()) {
            std::istringstream words(c.Scalar());
            for (std::string w; words >> w;) e.command.push_back(w);
        } else {
            e.command = get_string_list(c, join(path, "command"));
        }
    }
    if (n["check_language"]) e.check_language = get_bool(n["check_language"], join(path, "check_language"));
    if (n["reentrant"]) e.reentrant = get_bool(n["reentrant"], join(path, "reentrant"));
    if (e.kind == EvaluatorKind::external && e.command.empty()) {
        throw ConfigParseError(join(path, "command"), "external evaluator needs a command");
    }
    if (e.kind != EvaluatorKind::external && !e.command.empty()) {
        throw ConfigParseError(join(path, "command"), "only external evaluators take a command");
    }
    return e;
}

ObjectiveConfig parse_objective(const YAML::Node& n, const std::string& path, std::vector<std::string>* warnings) {
    check_keys(n, path, {"name", "dataset", "test_dataset", "direction", "subsample", "evaluator", "estimator"});
    ObjectiveConfig o;
    for (const char* req : {"name", "dataset", "evaluator"}) {
        if (!n[req]) throw ConfigParseError(join(path, req), "required");
    }
    o.name = get_string(n["name"], join(path, "name"));
    if (o.name.empty() || o.name.find_first_of(", \t\n") != std::string::npos) {
        throw ConfigParseError(join(path, "name"), "must be non-empty without commas or whitespace");
    }
    o.dataset = get_string(n["dataset"], join(path, "dataset"));
    if (n["test_dataset"] && !n["test_dataset"].IsNull()) {
        o.test_dataset = get_string(n["test_dataset"], join(path, "test_dataset"));
    }
    if (n["direction"]) {
        o.direction = get_enum<Direction>(n["direction"], join(path, "direction"), parse_direction, "maximize, minimize");
    }
    if (n["subsample"]) {
        const auto sp = join(path, "subsample");
        const auto& s = n["subsample"];
        check_keys(s, sp, {"strategy", "n", "seed", "anchors"});
        if (s["strategy"]) {
            o.strategy = get_enum<SubsampleStrategy>(s["strategy"], join(sp, "strategy"), parse_subsample_strategy,
                                                     "random, stratified, anchors");
        }
        if (s["n"]) o.n = get_uint(s["n"], join(sp, "n"));
        if (s["seed"]) o.subsample_seed = get_uint(s["seed"], join(sp, "seed"));
        if (s["anchors"]) o.anchors = get_string_list(s["anchors"], join(sp, "anchors"));
        if (!o.anchors.empty() && o.strategy != SubsampleStrategy::anchors) {
            throw ConfigParseError(join(sp, "anchors"), "anchors are only used with strategy: anchors");
        }
    }
    o.evaluator = parse_evaluator(n["evaluator"], join(path, "evaluator"), warnings);
    if (n["estimator"]) {
        const auto ep = join(path, "estimator");
        const auto& e = n["estimator"];
        if (e.IsScalar()) {
            o.estimator = get_enum<EstimatorKind>(e, ep, parse_estimator_kind, "full, random, pirt, gpirt, mpirt, gmpirt");
        } else {
            check_keys(e, ep, {"type", "item_bank", "lambda"});
            if (!e["type"]) throw ConfigParseError(join(ep, "type"), "required");
            o.estimator = get_enum<EstimatorKind>(e["type"], join(ep, "type"), parse_estimator_kind,
                                                  "full, random, pirt, gpirt, mpirt, gmpirt");
            if (e["item_bank"] && !e["item_bank"].IsNull()) o.item_bank = get_string(e["item_bank"], join(ep, "item_bank"));
            if (e["lambda"]) o.lambda = get_double(e["lambda"], join(ep, "lambda"));
        }
        if (is_irt(o.estimator) && !o.item_bank) {
            throw ConfigParseError(join(ep, "item_bank"), "required for estimator " + std::string(to_string(o.estimator)));
        }
        if (!is_irt(o.estimator) && o.item_bank) {
            throw ConfigParseError(join(ep, "item_bank"), "only IRT estimators use an item bank");
        }
        if (!(o.lambda >= 0.0 && o.lambda <= 1.0)) throw ConfigParseError(join(ep, "lambda"), "must lie in [0, 1]");
        if (is_irt(o.estimator) && o.strategy != SubsampleStrategy::anchors) {
            throw ConfigParseError(join(path, "subsample.strategy"), "IRT estimators need strategy: anchors");
        }
    }
    return o;
}

AlgorithmConfig parse_algorithm_node(const YAML::Node& n, const std::string& path) {
    AlgorithmConfig a;
    if (n.IsScalar()) {
        a.name = get_enum<Algorithm>(n, path, parse_algorithm, "ga, de, nsga2");
        return a;
    }
    check_keys(n, path, {"name", "pop_size", "generations", "eta_c", "eta_m", "p_mut", "tournament_size", "F", "CR"});
    if (!n["name"]) throw ConfigParseError(join(path, "name"), "required");
    a.name = get_enum<Algorithm>(n["name"], join(path, "name"), parse_algorithm, "ga, de, nsga2");
    auto& p = a.params;
    if (n["pop_size"]) p.pop_size = get_uint(n["pop_size"], join(path, "pop_size"));
    if (n["generations"]) p.generations = get_uint(n["generations"], join(path, "generations"));
    if (n["eta_c"]) p.eta_c = get_double(n["eta_c"], join(path, "eta_c"));
    if (n["eta_m"]) p.eta_m = get_double(n["eta_m"], join(path, "eta_m"));
    if (n["p_mut"] && !n["p_mut"].IsNull()) p.p_mut = get_double(n["p_mut"], join(path, "p_mut"));
    if (n["tournament_size"]) p.tournament_size = get_uint(n["tournament_size"], join(path, "tournament_size"));
    if (n["F"]) p.de_F = get_double(n["F"], join(path, "F"));
    if (n["CR"]) p.de_CR = get_double(n["CR"], join(path, "CR"));
    try {
        validate_params(p, a.name);
    } catch (const std::invalid_argument& e) {
        throw ConfigParseError(path, e.what());
    }
    return a;
}

OutputConfig parse_output(const YAML::Node& n, const std::string& path) {
    check_keys(n, path, {"work_dir", "log_csv", "log_jsonl", "keep_best", "run_id"});
    OutputConfig o;
    if (n["work_dir"]) o.work_dir = get_string(n["work_dir"], join(path, "work_dir"));
    if (n["log_csv"] && !n["log_csv"].IsNull()) o.log_csv = get_string(n["log_csv"], join(path, "log_csv"));
    if (n["log_jsonl"] && !n["log_jsonl"].IsNull()) o.log_jsonl = get_string(n["log_jsonl"], join(path, "log_jsonl"));
    if (n["keep_best"]) o.keep_best = get_uint(n["keep_best"], join(path, "keep_best"));
    if (n["run_id"] && !n["run_id"].IsNull()) o.run_id = get_string(n["run_id"], join(path, "run_id"));
    if (o.work_dir.empty()) throw ConfigParseError(join(path, "work_dir"), "must be non-empty");
    return o;
}

RunConfig parse_root(const YAML::Node& root, const std::filesystem::path& source_dir, std::vector<std::string>* warnings) {
    check_keys(root, "", {"models", "merge", "objectives", "algorithm", "output", "seed"});
    if (!root.IsMap()) throw ConfigParseError("", "expected a mapping at the top level");
    RunConfig c;
    c.source_dir = source_dir;
    if (root["seed"]) c.seed = get_uint(root["seed"], "seed");
    if (!root["models"]) throw ConfigParseError("models", "required");
    c.models = parse_models(root["models"], "models");
    if (!root["merge"]) throw ConfigParseError("merge", "required");
    c.merge = parse_merge(root["merge"], "merge", c.models.endpoints.size());

    if (!root["objectives"]) throw ConfigParseError("objectives", "required");
    const auto& objs = root["objectives"];
    if (!objs.IsSequence() || objs.size() == 0) throw ConfigParseError("objectives", "expected a non-empty list");
    std::set<std::string> names;
    for (std::size_t i = 0; i < objs.size(); ++i) {
        c.objectives.push_back(parse_objective(objs[i], index_path("objectives", i), warnings));
        if (!names.insert(c.objectives.back().name).second) {
            throw ConfigParseError(index_path("objectives", i) + ".name", "duplicate objective name");
        }
    }
    if (root["algorithm"]) {
        c.algorithm = parse_algorithm_node(root["algorithm"], "algorithm");
    } else {
        c.algorithm.name = c.objectives.size() >= 2 ? Algorithm::nsga2 : Algorithm::ga;
    }
    c.algorithm.params.seed = c.seed;
    if (root["output"]) c.output = parse_output(root["output"], "output");
    validate_config(c);
    return c;
}

}  // namespace

void validate_config(const RunConfig& c) {
    const auto g = c.genotype_spec();
    if (c.models.endpoints.empty()) throw ConfigParseError("models.endpoints", "at least one endpoint required");
    if (c.merge.method == MergeMethod::slerp && c.models.endpoints.size() != 2) {
        throw ConfigParseError("models.endpoints", "slerp merges exactly 2 endpoints");
    }
    if (needs_base(c.merge.method) && !c.models.base) {
        throw ConfigParseError("models.base", std::string(to_string(c.merge.method)) + " requires a base model");
    }
    if (c.merge.method == MergeMethod::linear && c.models.endpoints.size() < 2) {
        throw ConfigParseError("models.endpoints", "linear merges need at least 2 endpoints");
    }
    if (c.merge.bounds.size() != g.gene_count()) {
        throw ConfigParseError("merge.bounds", "expected " + std::to_string(g.gene_count()) + " bounds, got " +
                                                   std::to_string(c.merge.bounds.size()));
    }
    for (std::size_t i = 0; i < c.merge.bounds.size(); ++i) {
        if (!(c.merge.bounds[i].lo < c.merge.bounds[i].hi)) {
            throw ConfigParseError("merge.bounds", "bound " + std::to_string(i) + " needs lo < hi");
        }
    }
    if (c.objectives.empty()) throw ConfigParseError("objectives", "at least one objective required");
    const bool multi = c.objectives.size() >= 2;
    if (multi != is_multi_objective(c.algorithm.name)) {
        throw ConfigParseError("algorithm.name", std::string(to_string(c.algorithm.name)) + " cannot optimize " +
                                                     std::to_string(c.objectives.size()) +
                                                     " objective(s); nsga2 is for 2 or more, ga/de for exactly 1");
    }
    if (c.algorithm.params.seed != c.seed) throw ConfigParseError("seed", "algorithm seed out of sync");
}

RunConfig parse_config_string(const std::string& yaml, const std::filesystem::path& source_dir,
                              std::vector<std::string>* warnings) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml);
    } catch (const YAML::Exception& e) {
        throw ConfigParseError("<root>", std::string("invalid YAML: ") + e.what());
    }
    try {
        return parse_root(root, source_dir, warnings);
    } catch (const YAML::Exception& e) {
        throw ConfigParseError("<root>", e.what());
    }
}

RunConfig parse_config(const std::filesystem::path& path, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    auto dir = std::filesystem::absolute(path).lexically_normal().parent_path();
    try {
        return parse_config_string(ss.str(), dir, warnings);
    } catch (const ConfigParseError& e) {
        throw ConfigParseError(e.yaml_path(), std::string(e.what()).substr(e.yaml_path().size() + 2) + " (in " +
                                                  path.string() + ")");
    }
}

GenotypeSpec RunConfig::genotype_spec() const {
    GenotypeSpec g;
    g.method = merge.method;
    g.n_endpoints = models.endpoints.size();
    g.evolve_density = merge.evolve_density;
    g.evolve_drop_rate = merge.evolve_drop_rate;
    g.bounds = merge.bounds;
    g.default_density = merge.density;
    g.default_drop_rate = merge.drop_rate;
    g.seed = seed;
    return g;
}

EvoParams RunConfig::evo_params() const {
    EvoParams p = algorithm.params;
    p.seed = seed;
    return p;
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
    std::filesystem::path p(path);
    if (p.is_absolute()) return p;
    return (source_dir / p).lexically_normal();
}

std::vector<std::optional<std::filesystem::path>> RunConfig::test_datasets() const {
    std::vector<std::optional<std::filesystem::path>> out;
    for (const auto& o : objectives) {
        out.push_back(o.test_dataset ? std::optional(resolve(*o.test_dataset)) : std::nullopt);
    }
    return out;
}

ProblemConfig RunConfig::to_problem_config() const {
    ProblemConfig p;
    p.genotype = genotype_spec();
    if (models.base) p.base = resolve(*models.base);
    for (const auto& e : models.endpoints) p.endpoints.push_back(resolve(e));
    for (const auto& o : objectives) {
        ObjectiveSpec s;
        s.name = o.name;
        s.dataset = resolve(o.dataset);
        if (o.test_dataset) s.test_dataset = resolve(*o.test_dataset);
        s.subsample.strategy = o.strategy;
        s.subsample.n = o.n;
        s.subsample.seed = o.subsample_seed.value_or(seed);
        s.subsample.anchors = o.anchors;
        s.evaluator = o.evaluator;
        // a relative script path in the command is taken relative to the config
        if (!s.evaluator.command.empty()) {
            auto& exe = s.evaluator.command.front();
            if (exe.find('/') != std::string::npos) exe = resolve(exe).string();
        }
        s.estimator.kind = o.estimator;
        if (o.item_bank) s.estimator.item_bank = resolve(*o.item_bank);
        s.estimator.lambda = o.lambda;
        s.direction = o.direction;
        p.objectives.push_back(std::move(s));
    }
    if (const char* env = std::getenv("EVOMERGE_WORK_DIR"); env && *env) {
        p.work_dir = std::filesystem::absolute(env).lexically_normal();
    } else {
        p.work_dir = resolve(output.work_dir);
    }
    if (output.log_csv) p.log_csv = resolve(*output.log_csv);
    if (output.log_jsonl) p.log_jsonl = resolve(*output.log_jsonl);
    p.keep_best = output.keep_best;
    p.run_id = output.run_id.value_or("seed-" + std::to_string(seed));
    return p;
}

namespace {
// shortest text that reads back to the same double
std::string num(double v) { return format_double(v); }
}  // namespace

std::string to_yaml(const RunConfig& c) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "seed" << YAML::Value << c.seed;

    out << YAML::Key << "models" << YAML::Value << YAML::BeginMap;
    if (c.models.base) out << YAML::Key << "base" << YAML::Value << *c.models.base;
    out << YAML::Key << "endpoints" << YAML::Value << YAML::BeginSeq;
    for (const auto& e : c.models.endpoints) out << e;
    out << YAML::EndSeq << YAML::EndMap;

    out << YAML::Key << "merge" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "method" << YAML::Value << std::string(to_string(c.merge.method));
    out << YAML::Key << "density" << YAML::Value << num(c.merge.density);
    out << YAML::Key << "drop_rate" << YAML::Value << num(c.merge.drop_rate);
    out << YAML::Key << "evolve_density" << YAML::Value << c.merge.evolve_density;
    out << YAML::Key << "evolve_drop_rate" << YAML::Value << c.merge.evolve_drop_rate;
    out << YAML::Key << "bounds" << YAML::Value << YAML::BeginSeq;
    for (const auto& b : c.merge.bounds) out << YAML::Flow << YAML::BeginSeq << num(b.lo) << num(b.hi) << YAML::EndSeq;
    out << YAML::EndSeq << YAML::EndMap;

    out << YAML::Key << "objectives" << YAML::Value << YAML::BeginSeq;
    for (const auto& o : c.objectives) {
        out << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << o.name;
        out << YAML::Key << "dataset" << YAML::Value << o.dataset;
        if (o.test_dataset) out << YAML::Key << "test_dataset" << YAML::Value << *o.test_dataset;
        out << YAML::Key << "direction" << YAML::Value << std::string(to_string(o.direction));
        out << YAML::Key << "subsample" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "strategy" << YAML::Value << std::string(to_string(o.strategy));
        out << YAML::Key << "n" << YAML::Value << o.n;
        if (o.subsample_seed) out << YAML::Key << "seed" << YAML::Value << *o.subsample_seed;
        if (!o.anchors.empty()) {
            out << YAML::Key << "anchors" << YAML::Value << YAML::Flow << YAML::BeginSeq;
            for (const auto& a : o.anchors) out << a;
            out << YAML::EndSeq;
        }
        out << YAML::EndMap;

        const auto& e = o.evaluator;
        out << YAML::Key << "evaluator" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "type" << YAML::Value << std::string(to_string(e.kind));
        out << YAML::Key << "grader" << YAML::Value << std::string(to_string(e.grader));
        if (e.kind == EvaluatorKind::constant) {
            out << YAML::Key << "mode" << YAML::Value << (e.constant_mode == ConstantMode::gold ? "gold" : "text");
        }
        if (!e.constant_text.empty()) {
            out << YAML::Key << "text" << YAML::Value << YAML::DoubleQuoted << e.constant_text;
        }
        if (!e.command.empty()) {
            out << YAML::Key << "command" << YAML::Value << YAML::Flow << YAML::BeginSeq;
            for (const auto& w : e.command) out << YAML::DoubleQuoted << w;
            out << YAML::EndSeq;
        }
        out << YAML::Key << "check_language" << YAML::Value << e.check_language;
        out << YAML::Key << "reentrant" << YAML::Value << e.reentrant;
        out << YAML::EndMap;

        out << YAML::Key << "estimator" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "type" << YAML::Value << std::string(to_string(o.estimator));
        if (o.item_bank) out << YAML::Key << "item_bank" << YAML::Value << *o.item_bank;
        out << YAML::Key << "lambda" << YAML::Value << num(o.lambda);
        out << YAML::EndMap;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    const auto& p = c.algorithm.params;
    out << YAML::Key << "algorithm" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << std::string(to_string(c.algorithm.name));
    out << YAML::Key << "pop_size" << YAML::Value << p.pop_size;
    out << YAML::Key << "generations" << YAML::Value << p.generations;
    out << YAML::Key << "eta_c" << YAML::Value << num(p.eta_c);
    out << YAML::Key << "eta_m" << YAML::Value << num(p.eta_m);
    if (p.p_mut) out << YAML::Key << "p_mut" << YAML::Value << num(*p.p_mut);
    out << YAML::Key << "tournament_size" << YAML::Value << p.tournament_size;
    out << YAML::Key << "F" << YAML::Value << num(p.de_F);
    out << YAML::Key << "CR" << YAML::Value << num(p.de_CR);
    out << YAML::EndMap;

    out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "work_dir" << YAML::Value << c.output.work_dir;
    if (c.output.log_csv) out << YAML::Key << "log_csv" << YAML::Value << *c.output.log_csv;
    if (c.output.log_jsonl) out << YAML::Key << "log_jsonl" << YAML::Value << *c.output.log_jsonl;
    out << YAML::Key << "keep_best" << YAML::Value << c.output.keep_best;
    if (c.output.run_id) out << YAML::Key << "run_id" << YAML::Value << *c.output.run_id;
    out << YAML::EndMap;

    out << YAML::EndMap;
    if (!out.good()) throw std::runtime_error("YAML emitter: " + out.GetLastError());
    return std::string(out.c_str()) + "\n";
}

void write_config(const RunConfig& config, const std::filesystem::path& path) {
    const auto text = to_yaml(config);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << text;
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("write to '" + tmp.string() + "' failed");
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace evomerge
