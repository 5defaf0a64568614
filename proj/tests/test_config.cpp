#include <doctest.h>

#include <cstdlib>

#include "evomerge/config.hpp"
#include "support.hpp"

using namespace evomerge;
using testsupport::TempDir;

namespace {

const char* kMinimal = R"(
models:
  base: base.safetensors
  endpoints: [expert.safetensors]
merge:
  method: task_arithmetic
objectives:
  - name: acc
    dataset: data.jsonl
    evaluator: constant:gold
)";

std::string parse_message(const std::string& yaml) {
    try {
        parse_config_string(yaml, "/tmp");
    } catch (const ConfigError& e) {
        return e.what();
    }
    FAIL("expected a config error");
    return {};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("minimal config gets defaults") {
    const auto c = parse_config_string(kMinimal, "/work");
    CHECK(c.algorithm.params.pop_size == 25);
    CHECK(c.algorithm.params.generations == 7);
    CHECK(c.algorithm.name == Algorithm::ga);
    CHECK(c.merge.method == MergeMethod::task_arithmetic);
    REQUIRE(c.merge.bounds.size() == 1);
    CHECK(c.merge.bounds[0] == Bound{0.0, 1.0});
    CHECK(c.objectives[0].evaluator.kind == EvaluatorKind::constant);
    CHECK(c.objectives[0].direction == Direction::maximize);
    CHECK(c.objectives[0].estimator == EstimatorKind::full);
    CHECK(c.output.keep_best == 3);
    CHECK(c.seed == 0);
    CHECK(c.resolve("data.jsonl") == std::filesystem::path("/work/data.jsonl"));
    CHECK(c.resolve("/abs/x") == std::filesystem::path("/abs/x"));
}

TEST_CASE("bounds in the wrong order name merge.bounds") {
    std::string yaml = kMinimal;
    yaml.replace(yaml.find("method: task_arithmetic"), 23, "method: task_arithmetic\n  bounds: [1, 0]");
    try {
        parse_config_string(yaml, "/tmp");
        FAIL("expected an error");
    } catch (const ConfigParseError& e) {
        CHECK(e.yaml_path().starts_with("merge.bounds"));
        CHECK(std::string(e.what()).find("merge.bounds") != std::string::npos);
    }
}

TEST_CASE("unknown keys suggest the closest valid key") {
    const auto msg = parse_message(std::string(kMinimal) + "algorthm: ga\n");
    CHECK(msg.find("algorthm") != std::string::npos);
    CHECK(msg.find("did you mean 'algorithm'") != std::string::npos);
    const auto nested = parse_message(std::string(kMinimal) + "output:\n  workdir: x\n");
    CHECK(nested.find("output") != std::string::npos);
    CHECK(nested.find("work_dir") != std::string::npos);
    CHECK(closest_key("zzzzzz", {"models", "merge"}) == std::nullopt);
    CHECK(edit_distance("kitten", "sitting") == 3);
}

TEST_CASE("type and constraint errors") {
    CHECK(parse_message(std::string(kMinimal) + "seed: banana\n").find("seed") != std::string::npos);
    CHECK(parse_message(std::string(kMinimal) + "algorithm:\n  name: ga\n  pop_size: 2\n").find("pop_size") !=
          std::string::npos);
    CHECK(parse_message(std::string(kMinimal) + "algorithm: nsga2\n").find("nsga2") != std::string::npos);
    std::string no_base = kMinimal;
    no_base.replace(no_base.find("  base: base.safetensors\n"), 25, "");
    CHECK(parse_message(no_base).find("base") != std::string::npos);
    std::string irt = kMinimal;
    irt.replace(irt.find("    evaluator: constant:gold"), 28, "    evaluator: constant:gold\n    estimator: pirt");
    CHECK(parse_message(irt).find("item_bank") != std::string::npos);
    CHECK(parse_message("models: [1, 2]\n").find("models") != std::string::npos);
    CHECK(parse_message("- just\n- a list\n").size() > 0);
}

TEST_CASE("explicit fields parse") {
    const auto c = parse_config_string(R"(
seed: 4
models:
  base: b.safetensors
  endpoints: [e1.safetensors, e2.safetensors]
merge:
  method: dare_ties
  density: 0.3
  evolve_drop_rate: true
  bounds: [[0, 2], [0, 1], [0.05, 0.8]]
objectives:
  - name: ja
    dataset: ja.jsonl
    test_dataset: ja_test.jsonl
    direction: maximize
    subsample: {strategy: anchors}
    evaluator:
      type: external
      command: [python3, eval.py, --fast]
      grader: math
      check_language: true
    estimator: {type: gpirt, item_bank: bank.json, lambda: 0.25}
  - name: en
    dataset: en.jsonl
    subsample: {strategy: random, n: 100, seed: 9}
    evaluator: toy_mlp
algorithm:
  name: nsga2
  pop_size: 30
  generations: 12
  eta_c: 10
output:
  work_dir: out
  keep_best: 5
  run_id: demo
)",
                                       "/w");
    CHECK(c.seed == 4);
    CHECK(c.merge.method == MergeMethod::dare_ties);
    CHECK(c.merge.density == 0.3);
    CHECK(c.merge.bounds.size() == 3);
    CHECK(c.merge.bounds[2] == Bound{0.05, 0.8});
    CHECK(c.objectives[0].evaluator.command == std::vector<std::string>{"python3", "eval.py", "--fast"});
    CHECK(c.objectives[0].evaluator.grader == Grader::math);
    CHECK(c.objectives[0].estimator == EstimatorKind::gpirt);
    CHECK(c.objectives[0].lambda == 0.25);
    CHECK(c.objectives[1].n == 100);
    CHECK(c.objectives[1].subsample_seed == 9u);
    CHECK(c.algorithm.name == Algorithm::nsga2);
    CHECK(c.algorithm.params.pop_size == 30);
    CHECK(c.algorithm.params.eta_c == 10);
    CHECK(c.algorithm.params.seed == 4);
    CHECK(c.output.keep_best == 5);

    const auto pc = c.to_problem_config();
    CHECK(pc.run_id == "demo");
    CHECK(pc.work_dir == std::filesystem::path("/w/out"));
    CHECK(pc.objectives[0].estimator.item_bank == std::filesystem::path("/w/bank.json"));
    CHECK(pc.objectives[1].subsample.seed == 9u);
    CHECK(pc.genotype.evolve_drop_rate);
    CHECK(pc.genotype.gene_count() == 3);
    const auto tests = c.test_datasets();
    CHECK(tests[0] == std::filesystem::path("/w/ja_test.jsonl"));
    CHECK_FALSE(tests[1].has_value());

    // YAML round trip
    CHECK(parse_config_string(to_yaml(c), "/w") == c);
}

TEST_CASE("lm-eval alias is accepted with a warning") {
    std::string yaml = kMinimal;
    yaml.replace(yaml.find("evaluator: constant:gold"), 24, "evaluator: {type: lm-eval, command: [run.sh]}");
    std::vector<std::string> warnings;
    const auto c = parse_config_string(yaml, "/w", &warnings);
    CHECK(c.objectives[0].evaluator.kind == EvaluatorKind::external);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("deprecated") != std::string::npos);
}

TEST_CASE("work dir override and run id default") {
    auto c = parse_config_string(kMinimal, "/w");
    CHECK(c.to_problem_config().run_id == "seed-0");
    ::setenv("EVOMERGE_WORK_DIR", "/elsewhere", 1);
    const auto pc = c.to_problem_config();
    ::unsetenv("EVOMERGE_WORK_DIR");
    CHECK(pc.work_dir == std::filesystem::path("/elsewhere"));
    CHECK(c.to_problem_config().work_dir == std::filesystem::path("/w/runs"));
}

TEST_CASE("files on disk") {
    TempDir dir;
    testsupport::write_text(dir / "c.yaml", kMinimal);
    const auto c = parse_config(dir / "c.yaml");
    CHECK(c.source_dir == dir.path());
    write_config(c, dir / "d.yaml");
    CHECK(parse_config(dir / "d.yaml") == c);
    CHECK_FALSE(std::filesystem::exists(dir / "d.yaml.tmp"));
    CHECK_THROWS_AS(parse_config(dir / "missing.yaml"), ConfigError);
    testsupport::write_text(dir / "bad.yaml", "models: [\n");
    CHECK_THROWS_AS(parse_config(dir / "bad.yaml"), ConfigError);
}

}  // TEST_SUITE
