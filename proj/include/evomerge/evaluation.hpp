#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evomerge/checkpoint_io.hpp"

namespace evomerge {

// Invalid user configuration (bad gold label, unknown anchor id, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The evaluator backend failed: subprocess exit status, protocol violation,
// or a model that cannot be run.
class EvaluatorError : public std::runtime_error {
public:
    EvaluatorError(const std::string& message, std::string stderr_excerpt = {})
        : std::runtime_error(stderr_excerpt.empty() ? message : message + "\nstderr: " + stderr_excerpt),
          stderr_excerpt_(std::move(stderr_excerpt)) {}
    const std::string& stderr_excerpt() const noexcept { return stderr_excerpt_; }

private:
    std::string stderr_excerpt_;
};

struct EvalItem {
    std::string id;
    std::string prompt;
    std::string gold;
    std::optional<std::string> language;
    std::optional<std::vector<double>> features;

    bool operator==(const EvalItem&) const = default;
};

using Dataset = std::vector<EvalItem>;

// JSON Lines: one object per line with id, prompt, gold, optional language and
// optional features. Blank lines are skipped.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::string_view jsonl, const std::string& source = "<memory>");
void save_dataset(const Dataset& items, const std::filesystem::path& path);
void validate_dataset(const Dataset& items);

struct EvalRecord {
    std::vector<std::string> item_ids;
    std::vector<bool> correct;
    double accuracy = 0.0;
    std::vector<std::string> missing;  // ids with no response, scored incorrect

    static EvalRecord from_bits(std::vector<std::string> ids, std::vector<bool> correct);
    double recompute_accuracy() const;
    std::size_t n_correct() const;
    bool consistent() const;

    nlohmann::json to_json() const;
    static EvalRecord from_json(const nlohmann::json& j);

    bool operator==(const EvalRecord&) const = default;
};

enum class SubsampleStrategy { random, stratified, anchors };

std::string_view to_string(SubsampleStrategy s);
std::optional<SubsampleStrategy> parse_subsample_strategy(std::string_view name);

struct SubsampleSpec {
    std::size_t n = 0;  // 0 = whole dataset
    std::uint64_t seed = 0;
    SubsampleStrategy strategy = SubsampleStrategy::random;
    std::vector<std::string> anchors;

    bool operator==(const SubsampleSpec&) const = default;
};

// random: seeded, without replacement, kept in original order.
// stratified: proportional per-language quotas, largest remainder rounding.
// anchors: exactly the listed ids, in listed order.
Dataset subsample(const Dataset& items, const SubsampleSpec& spec);

// Last standalone A-D letter (case-insensitive), if any.
std::optional<char> extract_choice(std::string_view response);
// Last number: optional sign, digits with optional thousands separators,
// optional fractional part.
std::optional<double> extract_last_number(std::string_view response);
// Parses a canonical decimal gold string; throws ConfigError.
double parse_gold_number(std::string_view gold);

using LanguageIdentifier = std::function<std::string(std::string_view)>;

// Script / diacritic histogram heuristic. Good enough for fixtures only.
std::string default_language_id(std::string_view text);

// Throws ConfigError when gold is not one of A-D. Never throws on response.
bool grade_multiple_choice(std::string_view response, std::string_view gold);

// Numeric match (1e-6 relative or 1e-9 absolute) and, when expected_lang is
// set, lang_id(response) == expected_lang. Throws ConfigError on bad gold.
bool grade_math(std::string_view response, std::string_view gold, const std::optional<std::string>& expected_lang,
                const LanguageIdentifier& lang_id = default_language_id);

enum class Grader { multiple_choice, math };
enum class EvaluatorKind { constant, toy_mlp, external };
enum class ConstantMode { gold, text };

std::string_view to_string(Grader g);
std::optional<Grader> parse_grader(std::string_view name);
std::string_view to_string(EvaluatorKind k);
std::optional<EvaluatorKind> parse_evaluator_kind(std::string_view name);

struct EvaluatorConfig {
    EvaluatorKind kind = EvaluatorKind::constant;
    Grader grader = Grader::multiple_choice;
    ConstantMode constant_mode = ConstantMode::gold;
    std::string constant_text;
    std::vector<std::string> command;  // external: argv; checkpoint path appended
    bool check_language = false;       // math grader: require item.language
    bool reentrant = false;

    bool operator==(const EvaluatorConfig&) const = default;
};

// Short textual evaluator spec used on the command line:
//   constant:gold | constant:empty | constant:text=<s> | toy_mlp | external:<cmd ...>
EvaluatorConfig parse_evaluator_spec(std::string_view spec);

struct ModelHandle {
    std::filesystem::path path;         // required by the external backend
    const TensorMap* tensors = nullptr;  // used directly by toy_mlp when present
};

struct Response {
    std::string text;
    std::optional<std::string> language;  // set by evaluators that identify it themselves
};

EvalRecord evaluate_checkpoint(const ModelHandle& model, const Dataset& items, const EvaluatorConfig& config,
                               const LanguageIdentifier& lang_id = default_language_id);

// Layers "layers.{i}.weight" [out, in] and "layers.{i}.bias" [out]; ReLU
// between layers, argmax over at most 4 outputs mapped to A-D.
class ToyMlp {
public:
    explicit ToyMlp(const TensorMap& model);

    char predict(std::span<const double> features) const;
    std::vector<char> predict_batch(std::span<const std::vector<double>> features) const;

    std::size_t input_size() const { return layers_.front().in; }
    std::size_t output_size() const { return layers_.back().out; }

    struct Layer {
        std::size_t in = 0;
        std::size_t out = 0;
        std::vector<double> weight;  // row-major [out, in]
        std::vector<double> bias;
    };
    const std::vector<Layer>& layers() const { return layers_; }

private:
    std::vector<Layer> layers_;
};

char mlp_forward(const TensorMap& model, std::span<const double> features);

// External evaluator protocol. Spawns command + [checkpoint], writes one
// {"id","prompt"} object per line to stdin, then closes it; reads
// {"id","response"[,"language"]} lines from stdout in any order.
std::map<std::string, Response> run_external_evaluator(const std::vector<std::string>& command,
                                                       const std::filesystem::path& checkpoint, const Dataset& items);

}  // namespace evomerge
