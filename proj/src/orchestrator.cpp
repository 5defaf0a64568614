#include "evomerge/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

namespace evomerge {

using json = nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string genes_key(std::span<const double> genes) {
    std::string key(genes.size() * sizeof(double), '\0');
    if (!genes.empty()) std::memcpy(key.data(), genes.data(), key.size());
    return key;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

std::string default_run_id() {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    return "run-" + std::to_string(std::chrono::duration_cast<std::chrono::seconds>(now).count());
}

void write_json_file(const json& j, const std::filesystem::path& path) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

json number_or_string(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

json numbers(const std::vector<double>& v) {
    json out = json::array();
    for (double x : v) out.push_back(number_or_string(x));
    return out;
}

json recipe_json(const MergeRecipe& r) {
    json j{{"method", to_string(r.method)},
           {"endpoints", r.endpoints},
           {"weights", r.weights},
           {"density", r.density},
           {"drop_rate", r.drop_rate},
           {"seed", r.seed}};
    j["base"] = r.base ? json(*r.base) : json(nullptr);
    return j;
}

}  // namespace

std::string_view to_string(Direction d) {
    return d == Direction::maximize ? "maximize" : "minimize";
}

std::optional<Direction> parse_direction(std::string_view name) {
    if (name == "maximize" || name == "max") return Direction::maximize;
    if (name == "minimize" || name == "min") return Direction::minimize;
    return std::nullopt;
}

struct MergingProblem::ObjectiveState {
    Dataset full;
    Dataset fitness;
    std::optional<ItemBank> bank;
    std::vector<double> endpoint_thetas;
    std::optional<double> base_theta;
    GmpirtAlpha alpha_fit;
    double alpha = 0.5;
};

MergingProblem::MergingProblem(ProblemConfig config) : config_(std::move(config)) {
    auto& g = config_.genotype;
    g.validate();
    if (config_.endpoints.size() != g.n_endpoints) {
        throw ConfigError("genotype expects " + std::to_string(g.n_endpoints) + " endpoints, got " +
                          std::to_string(config_.endpoints.size()));
    }
    if (g.method == MergeMethod::slerp && g.n_endpoints != 2) throw ConfigError("slerp merges exactly 2 endpoints");
    if (needs_base(g.method) && !config_.base) {
        throw ConfigError(std::string(to_string(g.method)) + " requires a base checkpoint");
    }
    if (config_.objectives.empty()) throw ConfigError("at least one objective is required");
    std::set<std::string> seen;
    for (const auto& o : config_.objectives) {
        if (o.name.empty()) throw ConfigError("objective names must be non-empty");
        if (!seen.insert(o.name).second) throw ConfigError("objective '" + o.name + "' listed twice");
        names_.push_back(o.name);
    }

    if (config_.base) base_ = read_checkpoint(*config_.base);
    for (const auto& p : config_.endpoints) endpoints_.push_back(read_checkpoint(p));
    for (const auto& e : endpoints_) endpoint_ptrs_.push_back(&e);
    std::vector<const TensorMap*> all;
    if (base_) all.push_back(&*base_);
    all.insert(all.end(), endpoint_ptrs_.begin(), endpoint_ptrs_.end());
    if (all.size() >= 2) {
        auto report = validate_compat(all);
        if (!report.compatible) throw CompatError(std::move(report));
    }

    if (config_.work_dir.empty()) config_.work_dir = "evomerge-work";
    std::filesystem::create_directories(config_.work_dir);
    if (config_.log_csv.empty()) config_.log_csv = config_.work_dir / "evaluations.csv";
    if (config_.log_jsonl.empty()) config_.log_jsonl = config_.work_dir / "evaluations.jsonl";
    if (config_.run_id.empty()) config_.run_id = default_run_id();

    const std::size_t n_weights = g.weight_genes();
    for (auto& o : config_.objectives) {
        auto st = std::make_unique<ObjectiveState>();
        st->full = load_dataset(o.dataset);
        validate_dataset(st->full);

        if (is_irt(o.estimator.kind)) {
            if (o.estimator.item_bank.empty()) {
                throw ConfigError("objective '" + o.name + "': estimator " + std::string(to_string(o.estimator.kind)) +
                                  " needs an item bank");
            }
            st->bank = load_item_bank(o.estimator.item_bank);
            if (o.subsample.strategy != SubsampleStrategy::anchors) {
                throw ConfigError("objective '" + o.name + "': IRT estimators need the anchors subsample strategy");
            }
            if (o.subsample.anchors.empty()) {
                o.subsample.anchors = st->bank->anchor_ids;
            } else if (o.subsample.anchors != st->bank->anchor_ids) {
                throw ConfigError("objective '" + o.name + "': anchors differ from the item bank's anchors");
            }
            if (o.estimator.kind == EstimatorKind::gpirt && !(o.estimator.lambda >= 0.0 && o.estimator.lambda <= 1.0)) {
                throw ConfigError("objective '" + o.name + "': lambda must lie in [0, 1]");
            }
        }
        st->fitness = subsample(st->full, o.subsample);
        if (st->fitness.empty()) throw ConfigError("objective '" + o.name + "': fitness subsample is empty");
        if (st->bank) {
            for (const auto& item : st->fitness) {
                if (!st->bank->items.contains(item.id)) {
                    throw ConfigError("objective '" + o.name + "': item '" + item.id + "' is not in the item bank");
                }
            }
        }

        if (o.estimator.kind == EstimatorKind::mpirt || o.estimator.kind == EstimatorKind::gmpirt) {
            for (std::size_t i = 0; i < n_weights; ++i) {
                if (g.bounds[i].lo < 0.0) {
                    throw ConfigError("objective '" + o.name + "': " + std::string(to_string(o.estimator.kind)) +
                                      " needs non-negative weight bounds");
                }
            }
            for (std::size_t i = 0; i < endpoints_.size(); ++i) {
                const auto rec = evaluate_checkpoint({config_.endpoints[i], &endpoints_[i]}, st->fitness, o.evaluator);
                st->endpoint_thetas.push_back(fit_theta(rec, *st->bank).theta);
            }
            if (base_) {
                const auto rec = evaluate_checkpoint({*config_.base, &*base_}, st->fitness, o.evaluator);
                st->base_theta = fit_theta(rec, *st->bank).theta;
            }
        }
        objectives_.push_back(std::move(st));
    }
}

MergingProblem::~MergingProblem() = default;

const Dataset& MergingProblem::fitness_items(std::size_t objective) const {
    return objectives_.at(objective)->fitness;
}

const std::vector<double>& MergingProblem::endpoint_thetas(std::size_t objective) const {
    return objectives_.at(objective)->endpoint_thetas;
}

double MergingProblem::gmpirt_alpha(std::size_t objective) const {
    return objectives_.at(objective)->alpha;
}

const EvaluationOutcome* MergingProblem::find_cached(std::span<const double> genes) const {
    auto it = cache_.find(genes_key(genes));
    return it == cache_.end() ? nullptr : &it->second;
}

void MergingProblem::open_log() {
    logger_ = std::make_unique<RunLogger>(config_.log_csv, config_.log_jsonl, names_);
}

std::filesystem::path MergingProblem::checkpoint_path(const std::string& hash) const {
    return config_.work_dir / ("ckpt-" + hash + ".safetensors");
}

std::vector<std::filesystem::path> MergingProblem::kept_checkpoints() const {
    std::vector<std::filesystem::path> out;
    for (const auto& k : kept_) out.push_back(checkpoint_path(k.hash));
    return out;
}

MergeRecipe MergingProblem::recipe_for(std::span<const double> genes) const {
    auto recipe = decode_genotype(genes, config_.genotype);
    if (config_.base) recipe.base = config_.base->string();
    recipe.endpoints.clear();
    for (const auto& p : config_.endpoints) recipe.endpoints.push_back(p.string());
    return recipe;
}

TensorMap MergingProblem::merge(std::span<const double> genes) const {
    return apply_recipe(recipe_for(genes), base_ ? &*base_ : nullptr, endpoint_ptrs_);
}

EvalRecord MergingProblem::evaluate_full(const ModelHandle& model, std::size_t objective, const Dataset& items) const {
    return evaluate_checkpoint(model, items, config_.objectives.at(objective).evaluator);
}

double MergingProblem::score_of(const std::vector<double>& internal) const {
    double s = 0.0;
    for (double v : internal) {
        if (!std::isfinite(v)) return kInf;
        s += v;
    }
    return s;
}

std::vector<double> MergingProblem::mpirt_weights(const MergeRecipe& recipe) const {
    if (recipe.method == MergeMethod::slerp) return {1.0 - recipe.weights.at(0), recipe.weights.at(0)};
    return recipe.weights;
}

void MergingProblem::retain_or_delete(const std::string& hash, const std::filesystem::path& path, double score) {
    std::error_code ec;
    for (auto& k : kept_) {
        if (k.hash == hash) {
            k.score = std::min(k.score, score);
            return;
        }
    }
    const auto order = [](const Kept& x, const Kept& y) { return std::tie(x.score, x.hash) < std::tie(y.score, y.hash); };
    if (config_.keep_best == 0 || !std::isfinite(score)) {
        std::filesystem::remove(path, ec);
        return;
    }
    if (kept_.size() < config_.keep_best) {
        kept_.push_back({score, hash});
    } else if (order({score, hash}, kept_.back())) {
        std::filesystem::remove(checkpoint_path(kept_.back().hash), ec);
        kept_.back() = {score, hash};
    } else {
        std::filesystem::remove(path, ec);
        return;
    }
    std::sort(kept_.begin(), kept_.end(), order);
}

EvaluationOutcome MergingProblem::evaluate_detailed(std::span<const double> genes, const EvalContext& ctx) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = config_.objectives.size();
    const auto key = genes_key(genes);

    EvaluationOutcome out;
    std::vector<std::string> estimator_cells(n);
    if (auto it = cache_.find(key); it != cache_.end()) {
        out = it->second;
        out.status = it->second.status == "ok" ? "cached" : it->second.status;
    } else {
        out.internal.assign(n, kInf);
        out.user_facing.assign(n, std::numeric_limits<double>::quiet_NaN());
        out.observed.assign(n, std::numeric_limits<double>::quiet_NaN());
        out.mpirt.assign(n, std::numeric_limits<double>::quiet_NaN());
        std::string stage = "merge";
        std::filesystem::path path;
        bool written = false;
        try {
            const auto recipe = recipe_for(genes);
            const auto merged = apply_recipe(recipe, base_ ? &*base_ : nullptr, endpoint_ptrs_);
            stage = "write";
            out.checkpoint_hash = checkpoint_hash(merged);
            path = checkpoint_path(out.checkpoint_hash);
            if (!std::filesystem::exists(path)) write_checkpoint(merged, path);
            written = true;

            for (std::size_t k = 0; k < n; ++k) {
                const auto& o = config_.objectives[k];
                auto& st = *objectives_[k];
                stage = "evaluate:" + o.name;
                const auto rec = evaluate_checkpoint({path, &merged}, st.fitness, o.evaluator);
                out.observed[k] = rec.accuracy;
                stage = "estimate:" + o.name;
                double value = rec.accuracy;
                switch (o.estimator.kind) {
                    case EstimatorKind::full:
                    case EstimatorKind::random: break;
                    case EstimatorKind::pirt: value = estimate_pirt(rec, *st.bank); break;
                    case EstimatorKind::gpirt: value = estimate_gpirt(rec, *st.bank, o.estimator.lambda); break;
                    case EstimatorKind::mpirt:
                    case EstimatorKind::gmpirt: {
                        const auto w = mpirt_weights(recipe);
                        const double sum = std::accumulate(w.begin(), w.end(), 0.0);
                        double mp;
                        if (sum > 0.0) {
                            mp = estimate_mpirt(st.endpoint_thetas, w, rec, *st.bank);
                        } else if (st.base_theta) {
                            mp = extrapolate_accuracy(rec, *st.bank, *st.base_theta);
                        } else {
                            mp = estimate_pirt(rec, *st.bank);
                        }
                        out.mpirt[k] = mp;
                        value = o.estimator.kind == EstimatorKind::mpirt ? mp
                                                                         : estimate_gmpirt(mp, rec.accuracy, st.alpha);
                        break;
                    }
                }
                out.user_facing[k] = value;
                out.internal[k] = o.direction == Direction::maximize ? -value : value;
            }
            retain_or_delete(out.checkpoint_hash, path, score_of(out.internal));
        } catch (const std::exception& e) {
            out.internal.assign(n, kInf);
            out.status = "failed:" + stage + ": " + one_line(e.what());
            if (written) {
                bool kept = std::any_of(kept_.begin(), kept_.end(),
                                        [&](const Kept& k) { return k.hash == out.checkpoint_hash; });
                std::error_code ec;
                if (!kept) std::filesystem::remove(path, ec);
            }
        }
        out.wall_ms = elapsed_ms(start);
        cache_.emplace(key, out);
    }

    for (std::size_t k = 0; k < n; ++k) estimator_cells[k] = std::string(to_string(config_.objectives[k].estimator.kind));
    if (logger_) {
        LogRow row;
        row.run_id = config_.run_id;
        row.generation = ctx.generation;
        row.individual_index = ctx.index;
        row.genotype.assign(genes.begin(), genes.end());
        row.objectives = out.user_facing;
        row.estimators = estimator_cells;
        row.checkpoint_hash = out.checkpoint_hash;
        row.wall_ms = out.status == "cached" ? elapsed_ms(start) : out.wall_ms;
        row.status = out.status;
        logger_->log(row);
    }
    return out;
}

std::vector<double> MergingProblem::evaluate(std::span<const double> genes, const EvalContext& ctx) {
    return evaluate_detailed(genes, ctx).internal;
}

void MergingProblem::on_generation_end(std::size_t, std::span<const Individual> population) {
    std::vector<std::size_t> gm;
    for (std::size_t k = 0; k < config_.objectives.size(); ++k) {
        if (config_.objectives[k].estimator.kind == EstimatorKind::gmpirt) gm.push_back(k);
    }
    if (gm.empty() || population.empty()) return;

    const Individual* best = nullptr;
    double best_score = kInf;
    for (const auto& ind : population) {
        const double s = score_of(ind.objectives);
        if (s < best_score) {
            best_score = s;
            best = &ind;
        }
    }
    if (!best) return;
    const auto* outcome = find_cached(best->genotype);
    if (!outcome || outcome->status.starts_with("failed")) return;

    const auto merged = merge(best->genotype);
    const auto path = checkpoint_path(checkpoint_hash(merged));
    const bool existed = std::filesystem::exists(path);
    if (!existed) write_checkpoint(merged, path);
    for (std::size_t k : gm) {
        auto& st = *objectives_[k];
        const auto rec = evaluate_checkpoint({path, &merged}, st.full, config_.objectives[k].evaluator);
        st.alpha_fit.add(outcome->mpirt[k], outcome->observed[k], rec.accuracy);
        st.alpha = st.alpha_fit.alpha();
    }
    std::error_code ec;
    if (!existed) std::filesystem::remove(path, ec);
}

nlohmann::json SearchReport::to_json() const {
    json j;
    j["run_id"] = run_id;
    j["algorithm"] = to_string(algorithm);
    j["objectives"] = objective_names;
    j["evaluations"] = evaluations;
    j["wall_seconds"] = wall_seconds;
    j["log_csv"] = log_csv.string();
    j["log_jsonl"] = log_jsonl.string();
    json best_j = json::array();
    for (const auto& b : best) {
        best_j.push_back({{"genotype", b.genotype},
                          {"objectives", numbers(b.objectives)},
                          {"recipe", recipe_json(b.recipe)},
                          {"checkpoint_hash", b.checkpoint_hash},
                          {"marked", b.marked}});
    }
    j["best"] = best_j;
    json hist = json::array();
    for (const auto& h : history) {
        hist.push_back({{"generation", h.generation}, {"best", numbers(h.best)}, {"mean", numbers(h.mean)}});
    }
    j["history"] = hist;
    return j;
}

SearchReport search(MergingProblem& problem, Algorithm algorithm, const EvoParams& params) {
    const std::size_t n_obj = problem.n_objectives();
    if (is_multi_objective(algorithm) && n_obj < 2) {
        throw ConfigError("nsga2 needs at least 2 objectives, got " + std::to_string(n_obj));
    }
    if (!is_multi_objective(algorithm) && n_obj != 1) {
        throw ConfigError(std::string(to_string(algorithm)) + " optimizes exactly 1 objective, got " +
                          std::to_string(n_obj) + "; use nsga2");
    }
    validate_params(params, algorithm);
    if (!problem.logger()) problem.open_log();

    const auto start = std::chrono::steady_clock::now();
    const auto result = run_algorithm(algorithm, problem, params);

    const auto& cfg = problem.config();
    SearchReport report;
    report.run_id = cfg.run_id;
    report.algorithm = algorithm;
    report.objective_names = problem.objective_names();
    report.log_csv = cfg.log_csv;
    report.log_jsonl = cfg.log_jsonl;
    report.evaluations = result.evaluations;

    std::vector<double> sign(n_obj);
    for (std::size_t k = 0; k < n_obj; ++k) {
        sign[k] = cfg.objectives[k].direction == Direction::maximize ? -1.0 : 1.0;
    }
    for (const auto& h : result.history) {
        GenerationStats s = h;
        for (std::size_t k = 0; k < n_obj; ++k) {
            s.best[k] *= sign[k];
            s.mean[k] *= sign[k];
        }
        report.history.push_back(std::move(s));
    }

    std::set<std::vector<double>> seen;
    std::size_t marked = 0;
    double marked_score = kInf;
    for (const auto& ind : result.front) {
        if (!seen.insert(ind.genotype).second) continue;
        BestSolution b;
        b.genotype = ind.genotype;
        b.internal = ind.objectives;
        b.objectives.resize(n_obj);
        for (std::size_t k = 0; k < n_obj; ++k) b.objectives[k] = ind.objectives[k] * sign[k];
        b.recipe = problem.recipe_for(ind.genotype);
        if (const auto* o = problem.find_cached(ind.genotype)) b.checkpoint_hash = o->checkpoint_hash;
        const double s = std::accumulate(ind.objectives.begin(), ind.objectives.end(), 0.0);
        if (report.best.empty() || s < marked_score) {
            marked_score = s;
            marked = report.best.size();
        }
        report.best.push_back(std::move(b));
    }
    if (!report.best.empty()) report.best[marked].marked = true;

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.report_path = cfg.work_dir / "report.json";
    write_json_file(report.to_json(), report.report_path);
    return report;
}

nlohmann::json TestReport::to_json(const std::vector<std::string>& objective_names) const {
    json rows = json::array();
    for (const auto& r : results) {
        json fit = json::object();
        json test = json::object();
        for (std::size_t k = 0; k < objective_names.size(); ++k) {
            fit[objective_names[k]] = number_or_string(r.fitness.at(k));
            test[objective_names[k]] = number_or_string(r.test.at(k));
        }
        rows.push_back({{"genotype", r.genotype},
                        {"recipe", recipe_json(r.recipe)},
                        {"checkpoint_hash", r.checkpoint_hash},
                        {"reproduced", r.reproduced},
                        {"fitness", fit},
                        {"test", test},
                        {"marked", r.marked}});
    }
    return {{"results", rows}};
}

TestReport test_best(const MergingProblem& problem, const SearchReport& report,
                     const std::vector<std::optional<std::filesystem::path>>& test_datasets) {
    const auto& names = problem.objective_names();
    if (test_datasets.size() != names.size()) throw ConfigError("one test dataset per objective required");
    std::vector<Dataset> tests;
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (!test_datasets[k]) throw ConfigError("objective '" + names[k] + "' has no test dataset");
        tests.push_back(load_dataset(*test_datasets[k]));
        validate_dataset(tests.back());
    }

    TestReport out;
    for (const auto& b : report.best) {
        TestResult r;
        r.genotype = b.genotype;
        r.recipe = problem.recipe_for(b.genotype);
        r.marked = b.marked;
        r.fitness = b.objectives;
        const auto merged = problem.merge(b.genotype);
        r.checkpoint_hash = checkpoint_hash(merged);
        r.reproduced = r.checkpoint_hash == b.checkpoint_hash;

        auto path = problem.checkpoint_path(r.checkpoint_hash);
        const bool existed = std::filesystem::exists(path);
        if (!existed) write_checkpoint(merged, path);
        for (std::size_t k = 0; k < names.size(); ++k) {
            r.test.push_back(problem.evaluate_full({path, &merged}, k, tests[k]).accuracy);
        }
        std::error_code ec;
        if (!existed) std::filesystem::remove(path, ec);
        out.results.push_back(std::move(r));
    }
    out.report_path = problem.config().work_dir / "test_report.json";
    write_json_file(out.to_json(names), out.report_path);
    return out;
}

}  // namespace evomerge
