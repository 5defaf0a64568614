#pragma once

// Disjoint-expert toy world: a 4-way linear classifier over 8 features.
// Task A items carry their class signal in features 0-3, task B items in
// features 4-7. The base model is all zeros (always answers "A"); expert A
// adds identity on block A and -0.5 identity on block B, expert B mirrors it.
// base + tau_A + tau_B answers both tasks.

#include <cstdint>
#include <filesystem>
#include <optional>

#include "evomerge/checkpoint_io.hpp"
#include "evomerge/config.hpp"
#include "evomerge/estimators.hpp"
#include "evomerge/evaluation.hpp"

namespace evomerge::fixture {

struct Options {
    std::size_t items_per_task = 200;
    double noise_sd = 0.25;
    double cross_weight = -0.5;
    std::uint64_t seed = 7;
    DType dtype = DType::f32;
};

struct ExpertWorld {
    TensorMap base;
    TensorMap expert_a;
    TensorMap expert_b;
    Dataset task_a, task_b;  // fitness data
    Dataset test_a, test_b;  // held-out data
    Dataset combined() const;       // task_a then task_b
    Dataset combined_test() const;  // test_a then test_b
};

ExpertWorld make_expert_world(const Options& options = {});

// Linear model base + la * tau_A + lb * tau_B.
TensorMap expert_mix(const ExpertWorld& world, double la, double lb);

struct Paths {
    std::filesystem::path dir;
    std::filesystem::path base, expert_a, expert_b;
    std::filesystem::path task_a, task_b, test_a, test_b, combined, combined_test;
    std::optional<std::filesystem::path> bank;
};

// Writes checkpoints and datasets (file names relative to dir).
Paths write_expert_world(const ExpertWorld& world, const std::filesystem::path& dir);

// Calibrates an item bank on the combined fitness items from the answers of
// n_models random mixes (plus base and both experts).
ItemBank calibrate_world_bank(const ExpertWorld& world, std::size_t n_models, std::size_t n_anchors,
                              std::uint64_t seed);
// Same, on any item set. One task at a time keeps ability one-dimensional.
ItemBank calibrate_world_bank(const ExpertWorld& world, const Dataset& items, std::size_t n_models,
                              std::size_t n_anchors, std::uint64_t seed);

enum class Mode { single_combined, two_objectives };

// Task-arithmetic run config over [0, 1] coefficients with the toy_mlp
// evaluator: GA on the combined task, or NSGA-II on tasks A and B.
RunConfig run_config(const Paths& paths, Mode mode, std::uint64_t seed, std::size_t pop_size = 25,
                     std::size_t generations = 7);

}  // namespace evomerge::fixture
