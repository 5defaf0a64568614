#include "evomerge/wizard.hpp"

#include <algorithm>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

namespace evomerge {

std::optional<EvalMethod> parse_eval_method(std::string_view name) {
    if (name == "external" || name == "lm-eval") return EvalMethod::external;
    if (name == "custom") return EvalMethod::custom;
    return std::nullopt;
}

std::optional<MergeType> parse_merge_type(std::string_view name) {
    if (name == "single") return MergeType::single;
    if (name == "multi") return MergeType::multi;
    return std::nullopt;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

class Prompter {
public:
    Prompter(std::istream& in, std::ostream& out, bool interactive) : in_(in), out_(out), interactive_(interactive) {}

    // parse returns an error message, or empty on success.
    std::string ask(const std::string& question, const std::string& fallback,
                    const std::function<std::string(const std::string&)>& check) {
        for (;;) {
            out_ << question;
            if (!fallback.empty()) out_ << " [" << fallback << "]";
            out_ << ": " << std::flush;
            std::string line;
            if (!std::getline(in_, line)) throw WizardAborted("input ended during the wizard; nothing written");
            line = trim(line);
            if (line.empty()) line = fallback;
            const auto err = check(line);
            if (err.empty()) return line;
            if (!interactive_) throw ConfigError("invalid answer to '" + question + "': " + err);
            out_ << "  " << err << "\n";
        }
    }

    template <class T, class Parse>
    T choose(const std::string& question, const std::vector<std::string>& options, const std::string& fallback,
             Parse parse) {
        std::string list;
        for (const auto& o : options) list += (list.empty() ? "" : "|") + o;
        const auto answer = ask(question + " (" + list + ")", fallback, [&](const std::string& s) -> std::string {
            if (std::find(options.begin(), options.end(), s) == options.end() || !parse(s)) {
                return "choose one of " + list;
            }
            return {};
        });
        return *parse(answer);
    }

    std::size_t number(const std::string& question, std::size_t fallback, std::size_t min) {
        const auto s = ask(question, std::to_string(fallback), [&](const std::string& a) -> std::string {
            if (a.empty() || a.find_first_not_of("0123456789") != std::string::npos || a.size() > 9) {
                return "expected a whole number";
            }
            if (std::stoul(a) < min) return "must be at least " + std::to_string(min);
            return {};
        });
        return std::stoul(s);
    }

private:
    std::istream& in_;
    std::ostream& out_;
    bool interactive_;
};

std::string require_nonempty(const std::string& s) {
    return s.empty() ? "an answer is required" : std::string{};
}

}  // namespace

WizardResult run_wizard(std::istream& in, std::ostream& out, const WizardOptions& options) {
    Prompter p(in, out, options.interactive);
    WizardResult result;
    RunConfig& c = result.config;

    const auto merge_type = options.merge_type ? *options.merge_type
                                               : p.choose<MergeType>("Merge type", {"single", "multi"}, "single",
                                                                     parse_merge_type);
    std::optional<EvalMethod> eval_method = options.eval_method;
    if (!eval_method) {
        const auto answer = p.ask("Evaluation method (external|custom)", "custom", [](const std::string& s) {
            return parse_eval_method(s) ? std::string{} : std::string("choose one of external|custom");
        });
        if (answer == "lm-eval") result.warnings.push_back("'lm-eval' is deprecated; use 'external'");
        eval_method = parse_eval_method(answer);
    }

    // models
    const auto base = p.ask("Base model path (blank for none)", "", [](const std::string&) { return std::string{}; });
    if (!base.empty()) c.models.base = base;
    const auto eps = p.ask("Endpoint model paths, comma-separated", "", [](const std::string& s) {
        return split_list(s).empty() ? std::string("at least one path is required") : std::string{};
    });
    c.models.endpoints = split_list(eps);

    // tasks
    const std::size_t n_tasks =
        merge_type == MergeType::multi ? p.number("Number of tasks (one objective each)", 2, 2) : 1;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        ObjectiveConfig o;
        const std::string tag = "Task " + std::to_string(t + 1);
        o.name = p.ask(tag + " name", "task" + std::to_string(t + 1), [&](const std::string& s) -> std::string {
            if (s.empty() || s.find_first_of(", \t") != std::string::npos) return "use a name without commas or spaces";
            for (const auto& prev : c.objectives) {
                if (prev.name == s) return "name already used";
            }
            return {};
        });
        o.dataset = p.ask(tag + " dataset (JSON Lines)", "", require_nonempty);
        const auto test = p.ask(tag + " test dataset (blank for none)", "", [](const std::string&) { return std::string{}; });
        if (!test.empty()) o.test_dataset = test;
        const auto n = p.number(tag + " fitness subsample size (0 = all items)", 0, 0);
        o.n = n;
        c.objectives.push_back(std::move(o));
    }

    // algorithm
    const std::vector<std::string> algos =
        merge_type == MergeType::multi ? std::vector<std::string>{"nsga2"} : std::vector<std::string>{"ga", "de"};
    c.algorithm.name = p.choose<Algorithm>("Algorithm", algos, algos.front(), parse_algorithm);
    c.algorithm.params.pop_size = p.number("Population size", 25, 4);
    c.algorithm.params.generations = p.number("Generations", 7, 0);

    // merge method
    std::vector<std::string> methods;
    for (auto m : kAllMergeMethods) methods.emplace_back(to_string(m));
    for (;;) {
        const auto method = p.choose<MergeMethod>("Merge method", methods, "task_arithmetic", parse_merge_method);
        std::string problem;
        if (needs_base(method) && !c.models.base) problem = std::string(to_string(method)) + " needs a base model";
        if (method == MergeMethod::slerp && c.models.endpoints.size() != 2) problem = "slerp needs exactly 2 endpoints";
        if (method == MergeMethod::linear && c.models.endpoints.size() < 2) problem = "linear needs at least 2 endpoints";
        if (problem.empty()) {
            c.merge.method = method;
            break;
        }
        if (!options.interactive) throw ConfigError("invalid answer to 'Merge method': " + problem);
        out << "  " << problem << "\n";
    }
    GenotypeSpec g;
    g.method = c.merge.method;
    g.n_endpoints = c.models.endpoints.size();
    c.merge.bounds.assign(g.weight_genes(), Bound{0.0, 1.0});

    // evaluator
    EvaluatorConfig e;
    if (*eval_method == EvalMethod::external) {
        e.kind = EvaluatorKind::external;
        const auto cmd = p.ask("Evaluator command (checkpoint path is appended)", "", require_nonempty);
        std::istringstream words(cmd);
        for (std::string w; words >> w;) e.command.push_back(w);
    } else {
        e.kind = p.choose<EvaluatorKind>("Built-in evaluator", {"toy_mlp", "constant"}, "toy_mlp",
                                         parse_evaluator_kind);
    }
    e.grader = p.choose<Grader>("Grader", {"multiple_choice", "math"}, "multiple_choice", parse_grader);
    for (auto& o : c.objectives) o.evaluator = e;

    c.seed = p.number("Random seed", 0, 0);
    c.algorithm.params.seed = c.seed;
    c.output.work_dir = p.ask("Work directory", "runs", require_nonempty);

    c.source_dir = std::filesystem::absolute(options.output).lexically_normal().parent_path();
    validate_config(c);
    write_config(c, options.output);
    result.path = options.output;
    out << "wrote " << options.output.string() << "\n";
    return result;
}

}  // namespace evomerge
