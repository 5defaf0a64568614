#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "evomerge/config.hpp"
#include "evomerge/estimators.hpp"
#include "evomerge/orchestrator.hpp"
#include "evomerge/wizard.hpp"

namespace evomerge {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string accuracy_text(double v) {
    auto s = format_double(v);
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    return s;
}

std::vector<double> parse_weights(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size() || !std::isfinite(v)) {
            throw CLI::ValidationError("--weights", "'" + item + "' is not a number");
        }
        out.push_back(v);
    }
    return out;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, bool skip_test, std::ostream& out,
            std::ostream& err) {
    std::vector<std::string> warnings;
    auto cfg = parse_config(config_path, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    if (seed) {
        cfg.seed = *seed;
        cfg.algorithm.params.seed = *seed;
    }
    MergingProblem problem(cfg.to_problem_config());
    const auto report = search(problem, cfg.algorithm.name, cfg.evo_params());

    out << "run " << report.run_id << ": " << report.evaluations << " evaluations in "
        << fixed(report.wall_seconds, 2) << " s\n";
    for (const auto& b : report.best) {
        out << (b.marked ? "* " : "  ") << format_genotype(b.genotype);
        for (std::size_t k = 0; k < b.objectives.size(); ++k) {
            out << "  " << report.objective_names[k] << "=" << fixed(b.objectives[k], 4);
        }
        out << "  " << b.checkpoint_hash << "\n";
    }
    out << "report: " << report.report_path.string() << "\n";

    const auto tests = cfg.test_datasets();
    const bool all_tests = std::all_of(tests.begin(), tests.end(), [](const auto& t) { return t.has_value(); });
    if (!skip_test && all_tests) {
        const auto tr = test_best(problem, report, tests);
        for (const auto& r : tr.results) {
            out << (r.marked ? "* " : "  ") << "test";
            for (std::size_t k = 0; k < r.test.size(); ++k) {
                out << "  " << report.objective_names[k] << "=" << fixed(r.test[k], 4);
            }
            out << (r.reproduced ? "" : "  (hash mismatch)") << "\n";
        }
        out << "test report: " << tr.report_path.string() << "\n";
    }
    return 0;
}

int cmd_merge(const std::string& config_path, const std::string& weights_text, const std::string& out_path,
              std::ostream& out) {
    const auto cfg = parse_config(config_path);
    const auto genes = parse_weights(weights_text);
    const auto spec = cfg.genotype_spec();
    if (genes.size() != spec.gene_count()) {
        throw ConfigError("--weights has " + std::to_string(genes.size()) + " values, the merge expects " +
                          std::to_string(spec.gene_count()));
    }
    auto recipe = decode_genotype(genes, spec);
    std::optional<TensorMap> base;
    if (cfg.models.base) base = read_checkpoint(cfg.resolve(*cfg.models.base));
    std::vector<TensorMap> eps;
    for (const auto& e : cfg.models.endpoints) eps.push_back(read_checkpoint(cfg.resolve(e)));
    std::vector<const TensorMap*> refs;
    for (const auto& e : eps) refs.push_back(&e);
    const auto merged = apply_recipe(recipe, base ? &*base : nullptr, refs);
    write_checkpoint(merged, out_path);
    out << checkpoint_hash(merged) << "  " << out_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& model, const std::string& dataset, const std::string& spec,
                 const std::string& grader, std::ostream& out) {
    auto cfg = parse_evaluator_spec(spec);
    const auto g = parse_grader(grader);
    if (!g) throw ConfigError("unknown grader '" + grader + "'");
    cfg.grader = *g;
    const auto items = load_dataset(dataset);
    validate_dataset(items);
    std::optional<TensorMap> tensors;
    if (cfg.kind == EvaluatorKind::toy_mlp) tensors = read_checkpoint(model);
    const auto rec = evaluate_checkpoint({model, tensors ? &*tensors : nullptr}, items, cfg);
    out << "accuracy " << accuracy_text(rec.accuracy) << " (" << rec.n_correct() << "/" << rec.item_ids.size()
        << ")\n";
    return 0;
}

int cmd_calibrate(const std::string& responses, const std::string& out_path, std::size_t n_anchors, std::ostream& out) {
    const auto matrix = read_response_csv(responses);
    CalibrationOptions opts;
    opts.n_anchors = n_anchors;
    const auto result = calibrate(matrix, opts);
    save_item_bank(result.bank, out_path);
    out << "calibrated " << result.bank.items.size() << " items on " << matrix.model_names.size() << " models ("
        << result.rounds << " rounds); " << result.bank.anchor_ids.size() << " anchors -> " << out_path << "\n";
    return 0;
}

int cmd_wizard(const std::string& answers, const std::string& eval_method, const std::string& merge_type,
               const std::string& out_path, std::istream& in, std::ostream& out, std::ostream& err) {
    WizardOptions opts;
    opts.output = out_path;
    if (!eval_method.empty()) {
        opts.eval_method = parse_eval_method(eval_method);
        if (eval_method == "lm-eval") err << "warning: --eval-method lm-eval is deprecated; use external\n";
    }
    if (!merge_type.empty()) opts.merge_type = parse_merge_type(merge_type);
    WizardResult result;
    if (!answers.empty()) {
        std::ifstream file(answers);
        if (!file) throw ConfigError("cannot open answers file '" + answers + "'");
        opts.interactive = false;
        std::ostringstream transcript;
        result = run_wizard(file, transcript, opts);
        out << "wrote " << result.path.string() << "\n";
    } else {
        result = run_wizard(in, out, opts);
    }
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";
    return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Evolutionary model merging"};
    app.name(args.empty() ? "evomerge" : std::filesystem::path(args[0]).filename().string());
    app.require_subcommand(1);

    std::string config_path, weights, out_path, model, dataset, evaluator, grader = "multiple_choice";
    std::string answers, eval_method, merge_type, responses;
    std::optional<std::uint64_t> seed;
    bool skip_test = false;
    std::size_t n_anchors = 50;

    auto* run = app.add_subcommand("run", "Evolve merge coefficients from a YAML config");
    run->add_option("--config", config_path, "Run config")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Override the config seed");
    run->add_flag("--no-test", skip_test, "Skip held-out testing of the best solutions");

    auto* wizard = app.add_subcommand("wizard", "Build a run config interactively");
    wizard->add_option("--answers", answers, "Answers file, one answer per line")->check(CLI::ExistingFile);
    wizard->add_option("--eval-method", eval_method, "external or custom")
        ->check(CLI::IsMember({"external", "custom", "lm-eval"}));
    wizard->add_option("--merge-type", merge_type, "single or multi")->check(CLI::IsMember({"single", "multi"}));
    wizard->add_option("--out", out_path, "Where to write the YAML")->default_str("evomerge.yaml");

    auto* merge = app.add_subcommand("merge", "One-shot merge with fixed coefficients");
    merge->add_option("--config", config_path, "Run config")->required()->check(CLI::ExistingFile);
    merge->add_option("--weights", weights, "Comma-separated genes")->required();
    merge->add_option("--out", out_path, "Output checkpoint")->default_str("merged.safetensors");

    auto* evaluate = app.add_subcommand("evaluate", "Score one checkpoint on a dataset");
    evaluate->add_option("--model", model, "Checkpoint")->required();
    evaluate->add_option("--dataset", dataset, "JSON Lines dataset")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--evaluator", evaluator, "constant:gold | toy_mlp | external:<cmd> ...")->required();
    evaluate->add_option("--grader", grader, "multiple_choice or math")
        ->check(CLI::IsMember({"multiple_choice", "math"}));

    auto* cal = app.add_subcommand("calibrate-irt", "Fit a 2PL item bank from a response matrix");
    cal->add_option("--responses", responses, "CSV: model,<item ids...>")->required()->check(CLI::ExistingFile);
    cal->add_option("--out", out_path, "Item bank JSON")->required();
    cal->add_option("--anchors", n_anchors, "Number of anchor items")->check(CLI::PositiveNumber);

    std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rest.begin(), rest.end());
    try {
        app.parse(rest);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
        err << (sub ? sub->help() : app.help());
        return 1;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, seed, skip_test, out, err);
        if (wizard->parsed()) {
            return cmd_wizard(answers, eval_method, merge_type, out_path.empty() ? "evomerge.yaml" : out_path, in,
                              out, err);
        }
        if (merge->parsed()) return cmd_merge(config_path, weights, out_path.empty() ? "merged.safetensors" : out_path, out);
        if (evaluate->parsed()) return cmd_evaluate(model, dataset, evaluator, grader, out);
        if (cal->parsed()) return cmd_calibrate(responses, out_path, n_anchors, out);
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const WizardAborted& e) {
        err << "aborted: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    err << app.help();
    return 1;
}

}  // namespace evomerge
