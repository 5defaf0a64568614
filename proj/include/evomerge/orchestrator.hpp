#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evomerge/checkpoint_io.hpp"
#include "evomerge/estimators.hpp"
#include "evomerge/evaluation.hpp"
#include "evomerge/evo.hpp"
#include "evomerge/merge.hpp"
#include "evomerge/run_log.hpp"

namespace evomerge {

enum class Direction { maximize, minimize };

std::string_view to_string(Direction d);
std::optional<Direction> parse_direction(std::string_view name);

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::full;
    std::filesystem::path item_bank;  // required for the IRT estimators
    double lambda = 0.5;              // gpirt blend

    bool operator==(const EstimatorSpec&) const = default;
};

struct ObjectiveSpec {
    std::string name;
    std::filesystem::path dataset;
    std::optional<std::filesystem::path> test_dataset;
    SubsampleSpec subsample;
    EvaluatorConfig evaluator;
    EstimatorSpec estimator;
    Direction direction = Direction::maximize;

    bool operator==(const ObjectiveSpec&) const = default;
};

// Everything needed to build a MergingProblem. Paths are used as given.
struct ProblemConfig {
    GenotypeSpec genotype;
    std::optional<std::filesystem::path> base;
    std::vector<std::filesystem::path> endpoints;
    std::vector<ObjectiveSpec> objectives;
    std::filesystem::path work_dir;
    std::size_t keep_best = 3;
    std::filesystem::path log_csv;    // default: work_dir/evaluations.csv
    std::filesystem::path log_jsonl;  // default: work_dir/evaluations.jsonl
    std::string run_id;
};

// One evaluated genotype as seen by the orchestrator.
struct EvaluationOutcome {
    std::vector<double> internal;     // minimization sign, +inf on failure
    std::vector<double> user_facing;  // accuracies etc. as reported
    std::vector<double> observed;     // raw subsample accuracy per objective
    std::vector<double> mpirt;        // per objective, NaN unless gmpirt
    std::string checkpoint_hash;
    std::string status = "ok";
    double wall_ms = 0.0;
};

// Genotype -> merged checkpoint -> fitness. Holds the base and endpoint
// checkpoints in memory for the whole run; merges one candidate at a time.
class MergingProblem : public Problem {
public:
    explicit MergingProblem(ProblemConfig config);
    ~MergingProblem() override;

    const Bounds& bounds() const override { return config_.genotype.bounds; }
    std::size_t n_objectives() const override { return config_.objectives.size(); }
    std::vector<double> evaluate(std::span<const double> genes, const EvalContext& ctx) override;
    void on_generation_end(std::size_t generation, std::span<const Individual> population) override;

    // Never throws for merge/evaluation failures; those score +inf.
    EvaluationOutcome evaluate_detailed(std::span<const double> genes, const EvalContext& ctx);

    MergeRecipe recipe_for(std::span<const double> genes) const;
    TensorMap merge(std::span<const double> genes) const;
    // Accuracy-like value of one objective for an arbitrary model on the full
    // dataset given, no estimator.
    EvalRecord evaluate_full(const ModelHandle& model, std::size_t objective, const Dataset& items) const;

    const ProblemConfig& config() const { return config_; }
    const std::vector<std::string>& objective_names() const { return names_; }
    const Dataset& fitness_items(std::size_t objective) const;
    const std::vector<double>& endpoint_thetas(std::size_t objective) const;
    double gmpirt_alpha(std::size_t objective) const;
    std::size_t cache_size() const { return cache_.size(); }
    const EvaluationOutcome* find_cached(std::span<const double> genes) const;

    // Starts logging to the configured CSV/JSONL paths (truncating them).
    void open_log();
    RunLogger* logger() { return logger_.get(); }

    // Checkpoints currently kept on disk, best first.
    std::vector<std::filesystem::path> kept_checkpoints() const;
    std::filesystem::path checkpoint_path(const std::string& hash) const;

private:
    struct ObjectiveState;

    void retain_or_delete(const std::string& hash, const std::filesystem::path& path, double score);
    double score_of(const std::vector<double>& internal) const;
    std::vector<double> mpirt_weights(const MergeRecipe& recipe) const;

    ProblemConfig config_;
    std::vector<std::string> names_;
    std::optional<TensorMap> base_;
    std::vector<TensorMap> endpoints_;
    std::vector<const TensorMap*> endpoint_ptrs_;
    std::vector<std::unique_ptr<ObjectiveState>> objectives_;
    std::map<std::string, EvaluationOutcome> cache_;  // key: genotype bytes
    struct Kept {
        double score;
        std::string hash;
    };
    std::vector<Kept> kept_;
    std::unique_ptr<RunLogger> logger_;
};

struct BestSolution {
    std::vector<double> genotype;
    std::vector<double> internal;
    std::vector<double> objectives;  // user-facing
    MergeRecipe recipe;
    std::string checkpoint_hash;
    bool marked = false;  // max equal-weight sum of user-facing objectives
};

struct SearchReport {
    std::string run_id;
    Algorithm algorithm = Algorithm::ga;
    std::vector<std::string> objective_names;
    std::vector<BestSolution> best;
    std::vector<GenerationStats> history;  // user-facing sign
    std::filesystem::path log_csv;
    std::filesystem::path log_jsonl;
    std::filesystem::path report_path;
    std::size_t evaluations = 0;
    double wall_seconds = 0.0;

    nlohmann::json to_json() const;
};

// Runs the evolutionary loop. Throws ConfigError before any evaluation when
// the algorithm's arity does not match the objective count.
SearchReport search(MergingProblem& problem, Algorithm algorithm, const EvoParams& params);

struct TestResult {
    std::vector<double> genotype;
    MergeRecipe recipe;
    std::string checkpoint_hash;
    bool reproduced = false;  // re-merge hash equals the search-time hash
    std::vector<double> fitness;
    std::vector<double> test;  // full-dataset accuracy per objective
    bool marked = false;
};

struct TestReport {
    std::vector<TestResult> results;
    std::filesystem::path report_path;
    nlohmann::json to_json(const std::vector<std::string>& objective_names) const;
};

// Re-merges every best genotype and scores it on the full test datasets.
TestReport test_best(const MergingProblem& problem, const SearchReport& report,
                     const std::vector<std::optional<std::filesystem::path>>& test_datasets);

}  // namespace evomerge
