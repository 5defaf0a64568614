#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evomerge/evaluation.hpp"
#include "evomerge/evo.hpp"
#include "evomerge/merge.hpp"
#include "evomerge/orchestrator.hpp"

namespace evomerge {

// Paths are kept exactly as written; resolve() makes them absolute against
// source_dir.
struct ModelsConfig {
    std::optional<std::string> base;
    std::vector<std::string> endpoints;

    bool operator==(const ModelsConfig&) const = default;
};

struct MergeConfig {
    MergeMethod method = MergeMethod::task_arithmetic;
    double density = kDefaultDensity;
    double drop_rate = kDefaultDropRate;
    bool evolve_density = false;
    bool evolve_drop_rate = false;
    Bounds bounds;  // one per gene after parsing

    bool operator==(const MergeConfig&) const = default;
};

struct ObjectiveConfig {
    std::string name;
    std::string dataset;
    std::optional<std::string> test_dataset;
    Direction direction = Direction::maximize;
    SubsampleStrategy strategy = SubsampleStrategy::random;
    std::size_t n = 0;
    std::optional<std::uint64_t> subsample_seed;  // default: run seed
    std::vector<std::string> anchors;
    EvaluatorConfig evaluator;
    EstimatorKind estimator = EstimatorKind::full;
    std::optional<std::string> item_bank;
    double lambda = 0.5;

    bool operator==(const ObjectiveConfig&) const = default;
};

struct AlgorithmConfig {
    Algorithm name = Algorithm::ga;
    EvoParams params;  // params.seed mirrors RunConfig::seed

    bool operator==(const AlgorithmConfig&) const = default;
};

struct OutputConfig {
    std::string work_dir = "runs";
    std::optional<std::string> log_csv;
    std::optional<std::string> log_jsonl;
    std::size_t keep_best = 3;
    std::optional<std::string> run_id;

    bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
    ModelsConfig models;
    MergeConfig merge;
    std::vector<ObjectiveConfig> objectives;
    AlgorithmConfig algorithm;
    OutputConfig output;
    std::uint64_t seed = 0;
    std::filesystem::path source_dir;  // directory relative paths resolve against

    bool operator==(const RunConfig&) const = default;

    GenotypeSpec genotype_spec() const;
    EvoParams evo_params() const;
    // Absolute paths, EVOMERGE_WORK_DIR applied.
    ProblemConfig to_problem_config() const;
    std::filesystem::path resolve(const std::string& path) const;
    std::vector<std::optional<std::filesystem::path>> test_datasets() const;
};

// Thrown for schema violations; the message starts with the YAML path.
class ConfigParseError : public ConfigError {
public:
    ConfigParseError(std::string yaml_path, const std::string& message)
        : ConfigError(yaml_path + ": " + message), path_(std::move(yaml_path)) {}
    const std::string& yaml_path() const noexcept { return path_; }

private:
    std::string path_;
};

// Deprecation notes and similar non-fatal findings land in warnings.
RunConfig parse_config(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);
RunConfig parse_config_string(const std::string& yaml, const std::filesystem::path& source_dir,
                              std::vector<std::string>* warnings = nullptr);
// Checks cross-field constraints (gene count vs bounds, arity, ...).
void validate_config(const RunConfig& config);

std::string to_yaml(const RunConfig& config);
// Writes via a temporary file and rename, so readers never see a partial file.
void write_config(const RunConfig& config, const std::filesystem::path& path);

std::size_t edit_distance(std::string_view a, std::string_view b);
std::optional<std::string> closest_key(std::string_view key, const std::vector<std::string>& allowed);

}  // namespace evomerge
