// Writes the disjoint-expert toy world and ready-to-run configs.
#include <iostream>

#include <CLI11.hpp>

#include "evomerge/fixture.hpp"

int main(int argc, char** argv) {
    using namespace evomerge;
    CLI::App app{"Write the disjoint-expert fixture"};
    std::string dir = "fixture";
    std::uint64_t seed = 0;
    std::size_t items = 200;
    bool bank = false;
    app.add_option("dir", dir, "Output directory");
    app.add_option("--seed", seed, "Run seed written into the configs");
    app.add_option("--items", items, "Items per task")->check(CLI::PositiveNumber);
    app.add_flag("--bank", bank, "Also calibrate an item bank (bank.json) on the combined task");
    CLI11_PARSE(app, argc, argv);

    try {
        fixture::Options opts;
        opts.items_per_task = items;
        const auto world = fixture::make_expert_world(opts);
        auto paths = fixture::write_expert_world(world, dir);
        write_config(fixture::run_config(paths, fixture::Mode::single_combined, seed), paths.dir / "single.yaml");
        write_config(fixture::run_config(paths, fixture::Mode::two_objectives, seed), paths.dir / "multi.yaml");
        if (bank) save_item_bank(fixture::calibrate_world_bank(world, 60, 50, seed), paths.dir / "bank.json");
        std::cout << "fixture written to " << paths.dir.string() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
