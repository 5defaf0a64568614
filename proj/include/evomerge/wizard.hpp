#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "evomerge/config.hpp"

namespace evomerge {

// Input ended before the last prompt was answered. Nothing was written.
class WizardAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class EvalMethod { external, custom };
enum class MergeType { single, multi };

std::optional<EvalMethod> parse_eval_method(std::string_view name);  // accepts lm-eval
std::optional<MergeType> parse_merge_type(std::string_view name);

struct WizardOptions {
    std::optional<EvalMethod> eval_method;
    std::optional<MergeType> merge_type;
    std::filesystem::path output = "evomerge.yaml";
    // Interactive sessions reprompt after an invalid answer; scripted ones
    // (answers file) fail with ConfigError.
    bool interactive = true;
};

struct WizardResult {
    RunConfig config;
    std::filesystem::path path;
    std::vector<std::string> warnings;
};

// Prompts for models, tasks, algorithm, merge method and evaluator, then
// writes the YAML to options.output.
WizardResult run_wizard(std::istream& in, std::ostream& out, const WizardOptions& options);

}  // namespace evomerge
