#include "evomerge/fixture.hpp"

#include <cmath>
#include <cstdio>

#include "evomerge/philox.hpp"

namespace evomerge::fixture {

namespace {

constexpr std::size_t kClasses = 4;
constexpr std::size_t kFeatures = 8;

// Box-Muller on Philox uniforms; portable, unlike std::normal_distribution.
double normal(StreamRng& rng) {
    double u1 = rng.uniform();
    while (u1 <= 0.0) u1 = rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

Dataset make_task(char task, std::size_t n, double sd, std::uint64_t seed, std::uint64_t stream) {
    StreamRng rng(seed, stream);
    const std::size_t offset = task == 'A' ? 0 : kClasses;
    Dataset items;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % kClasses;  // balanced gold letters
        std::vector<double> x(kFeatures);
        for (auto& v : x) v = sd * normal(rng);
        x[offset + c] += 1.0;
        char id[32];
        std::snprintf(id, sizeof id, "%c-%04zu", task == 'A' ? 'a' : 'b', i);
        EvalItem item;
        item.id = id;
        item.prompt = std::string("task ") + task + " item " + std::to_string(i);
        item.gold = std::string(1, static_cast<char>('A' + c));
        item.features = std::move(x);
        items.push_back(std::move(item));
    }
    return items;
}

TensorMap linear_model(const std::vector<double>& w, DType dtype) {
    TensorMap m;
    m.entries.emplace("layers.0.weight", Tensor::from_f64(dtype, {kClasses, kFeatures}, w));
    m.entries.emplace("layers.0.bias", Tensor::from_f64(dtype, {kClasses}, std::vector<double>(kClasses, 0.0)));
    m.metadata["format"] = "toy_mlp";
    return m;
}

// Weight matrix with `diag` on block `own` and `cross` on the other block.
std::vector<double> block_weights(std::size_t own, double diag, double cross) {
    std::vector<double> w(kClasses * kFeatures, 0.0);
    const std::size_t other = own == 0 ? kClasses : 0;
    for (std::size_t c = 0; c < kClasses; ++c) {
        w[c * kFeatures + own + c] = diag;
        w[c * kFeatures + other + c] = cross;
    }
    return w;
}

}  // namespace

Dataset ExpertWorld::combined() const {
    Dataset out = task_a;
    out.insert(out.end(), task_b.begin(), task_b.end());
    return out;
}

Dataset ExpertWorld::combined_test() const {
    Dataset out = test_a;
    out.insert(out.end(), test_b.begin(), test_b.end());
    return out;
}

ExpertWorld make_expert_world(const Options& o) {
    ExpertWorld w;
    w.base = linear_model(std::vector<double>(kClasses * kFeatures, 0.0), o.dtype);
    w.expert_a = linear_model(block_weights(0, 1.0, o.cross_weight), o.dtype);
    w.expert_b = linear_model(block_weights(kClasses, 1.0, o.cross_weight), o.dtype);
    w.task_a = make_task('A', o.items_per_task, o.noise_sd, o.seed, 1);
    w.task_b = make_task('B', o.items_per_task, o.noise_sd, o.seed, 2);
    w.test_a = make_task('A', o.items_per_task, o.noise_sd, o.seed, 3);
    w.test_b = make_task('B', o.items_per_task, o.noise_sd, o.seed, 4);
    // test ids must not collide with fitness ids when both are scored
    for (auto* d : {&w.test_a, &w.test_b}) {
        for (auto& item : *d) item.id = "test-" + item.id;
    }
    return w;
}

TensorMap expert_mix(const ExpertWorld& world, double la, double lb) {
    const TensorMap* eps[] = {&world.expert_a, &world.expert_b};
    const double lambdas[] = {la, lb};
    return task_arithmetic_merge(world.base, eps, lambdas);
}

Paths write_expert_world(const ExpertWorld& world, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    Paths p;
    p.dir = dir;
    p.base = dir / "base.safetensors";
    p.expert_a = dir / "expert_a.safetensors";
    p.expert_b = dir / "expert_b.safetensors";
    p.task_a = dir / "task_a.jsonl";
    p.task_b = dir / "task_b.jsonl";
    p.test_a = dir / "task_a_test.jsonl";
    p.test_b = dir / "task_b_test.jsonl";
    p.combined = dir / "combined.jsonl";
    p.combined_test = dir / "combined_test.jsonl";
    write_checkpoint(world.base, p.base);
    write_checkpoint(world.expert_a, p.expert_a);
    write_checkpoint(world.expert_b, p.expert_b);
    save_dataset(world.task_a, p.task_a);
    save_dataset(world.task_b, p.task_b);
    save_dataset(world.test_a, p.test_a);
    save_dataset(world.test_b, p.test_b);
    save_dataset(world.combined(), p.combined);
    save_dataset(world.combined_test(), p.combined_test);
    return p;
}

ItemBank calibrate_world_bank(const ExpertWorld& world, std::size_t n_models, std::size_t n_anchors,
                              std::uint64_t seed) {
    return calibrate_world_bank(world, world.combined(), n_models, n_anchors, seed);
}

ItemBank calibrate_world_bank(const ExpertWorld& world, const Dataset& items, std::size_t n_models,
                              std::size_t n_anchors, std::uint64_t seed) {
    ResponseMatrix m;
    for (const auto& it : items) m.item_ids.push_back(it.id);
    EvaluatorConfig eval;
    eval.kind = EvaluatorKind::toy_mlp;

    auto add = [&](const std::string& name, const TensorMap& model) {
        const auto rec = evaluate_checkpoint({{}, &model}, items, eval);
        m.model_names.push_back(name);
        m.correct.push_back(rec.correct);
    };
    add("base", world.base);
    add("expert_a", world.expert_a);
    add("expert_b", world.expert_b);
    StreamRng rng(seed, hash_string("fixture/bank"));
    for (std::size_t k = 0; k < n_models; ++k) {
        const double la = rng.uniform();
        const double lb = rng.uniform();
        add("mix" + std::to_string(k), expert_mix(world, la, lb));
    }
    CalibrationOptions opts;
    opts.n_anchors = n_anchors;
    return calibrate(m, opts).bank;
}

RunConfig run_config(const Paths& paths, Mode mode, std::uint64_t seed, std::size_t pop_size,
                     std::size_t generations) {
    RunConfig c;
    c.source_dir = paths.dir;
    c.seed = seed;
    c.models.base = paths.base.filename().string();
    c.models.endpoints = {paths.expert_a.filename().string(), paths.expert_b.filename().string()};
    c.merge.method = MergeMethod::task_arithmetic;
    c.merge.bounds = {{0.0, 1.0}, {0.0, 1.0}};

    EvaluatorConfig eval;
    eval.kind = EvaluatorKind::toy_mlp;
    auto objective = [&](const std::string& name, const std::filesystem::path& data, const std::filesystem::path& test) {
        ObjectiveConfig o;
        o.name = name;
        o.dataset = data.filename().string();
        o.test_dataset = test.filename().string();
        o.evaluator = eval;
        return o;
    };
    if (mode == Mode::single_combined) {
        c.objectives.push_back(objective("combined", paths.combined, paths.combined_test));
        c.algorithm.name = Algorithm::ga;
    } else {
        c.objectives.push_back(objective("task_a", paths.task_a, paths.test_a));
        c.objectives.push_back(objective("task_b", paths.task_b, paths.test_b));
        c.algorithm.name = Algorithm::nsga2;
    }
    c.algorithm.params.pop_size = pop_size;
    c.algorithm.params.generations = generations;
    c.algorithm.params.seed = seed;
    c.output.work_dir = "runs";
    validate_config(c);
    return c;
}

}  // namespace evomerge::fixture
