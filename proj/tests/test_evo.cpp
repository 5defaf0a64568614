#include <doctest.h>

#include <cmath>
#include <deque>
#include <limits>

#include "evomerge/evo.hpp"
#include "evomerge/philox.hpp"
#include "evomerge/reference.hpp"

using namespace evomerge;

namespace {

// Replays fixed uniforms.
struct Scripted {
    std::deque<double> values;
    double uniform() {
        REQUIRE_FALSE(values.empty());
        const double v = values.front();
        values.pop_front();
        return v;
    }
};

std::vector<double> sphere(std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v * v;
    return {s};
}

Bounds box(std::size_t n, double lo, double hi) { return Bounds(n, Bound{lo, hi}); }

std::vector<std::vector<double>> random_points(StreamRng& rng, std::size_t n, std::size_t m, bool coarse) {
    std::vector<std::vector<double>> pts(n, std::vector<double>(m));
    for (auto& p : pts) {
        for (auto& v : p) v = coarse ? static_cast<double>(rng.below(5)) : rng.uniform();
    }
    return pts;
}

// Records every generation's rank-0 members to check pairwise non-domination.
class WatchedProblem : public FunctionProblem {
public:
    using FunctionProblem::FunctionProblem;
    void on_generation_end(std::size_t, std::span<const Individual> pop) override {
        std::vector<std::vector<double>> objs;
        for (const auto& ind : pop) objs.push_back(ind.objectives);
        const auto fronts = fast_nondominated_sort(objs);
        for (auto i : fronts[0]) {
            for (auto j : fronts[0]) {
                if (dominates(objs[i], objs[j])) ++violations;
            }
        }
        ++generations;
    }
    int violations = 0;
    int generations = 0;
};

}  // namespace

TEST_SUITE("evo") {

TEST_CASE("philox known answer") {
    const auto out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
    CHECK(out == Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    const auto ff = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                         {0xffffffffu, 0xffffffffu});
    CHECK(ff == Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
}

TEST_CASE("sbx examples") {
    const std::vector<double> p1{0.0}, p2{1.0};
    const auto b = box(1, 0, 1);
    Scripted s{{0.0, 0.216}};
    const auto [c1, c2] = sbx_crossover(p1, p2, 2.0, b, s);
    CHECK(c1[0] == doctest::Approx(0.1220).epsilon(1e-3));
    CHECK(c2[0] == doctest::Approx(0.8780).epsilon(1e-3));
    CHECK(std::pow(0.432, 1.0 / 3.0) == doctest::Approx(0.7560).epsilon(1e-4));

    Scripted half{{0.0, 0.5}};
    const auto [d1, d2] = sbx_crossover(p1, p2, 2.0, b, half);
    CHECK(d1[0] == 0.0);
    CHECK(d2[0] == 1.0);

    StreamRng rng(1, 1);
    const std::vector<double> same{0.3, 0.6};
    for (int i = 0; i < 20; ++i) {
        const auto [e1, e2] = sbx_crossover(same, same, 15.0, box(2, 0, 1), rng);
        CHECK(e1 == same);
        CHECK(e2 == same);
    }
    CHECK_THROWS_AS(sbx_crossover(p1, same, 2.0, b, rng), std::invalid_argument);
}

TEST_CASE("polynomial mutation examples") {
    const std::vector<double> g{0.5};
    const auto b = box(1, 0, 1);
    Scripted s{{0.0, 0.9}};
    const auto out = polynomial_mutation(g, 20.0, 1.0, b, s);
    CHECK(out[0] == doctest::Approx(0.5 + 1.0 - std::pow(0.2, 1.0 / 21.0)).epsilon(1e-12));
    CHECK(out[0] == doctest::Approx(0.5738).epsilon(1e-3));

    Scripted mid{{0.0, 0.5}};
    CHECK(polynomial_mutation(g, 20.0, 1.0, b, mid) == g);

    StreamRng rng(2, 2);
    const std::vector<double> many{0.1, 0.2, 0.3};
    CHECK(polynomial_mutation(many, 20.0, 0.0, box(3, 0, 1), rng) == many);
}

TEST_CASE("operators stay within bounds") {
    StreamRng rng(4, 4);
    const Bounds b{{-1, 1}, {0, 0.2}, {5, 9}};
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> p1(3), p2(3);
        for (std::size_t k = 0; k < 3; ++k) {
            p1[k] = b[k].lo + rng.uniform() * b[k].width();
            p2[k] = b[k].lo + rng.uniform() * b[k].width();
        }
        const auto [c1, c2] = sbx_crossover(p1, p2, 1.0, b, rng);
        REQUIRE(within(c1, b));
        REQUIRE(within(c2, b));
        REQUIRE(within(polynomial_mutation(c1, 5.0, 1.0, b, rng), b));
    }
}

TEST_CASE("non-dominated sort examples") {
    const std::vector<std::vector<double>> pts{{1, 1}, {2, 2}, {1, 3}, {3, 1}};
    const auto fronts = fast_nondominated_sort(pts);
    REQUIRE(fronts.size() == 2);
    CHECK(fronts[0] == std::vector<std::size_t>{0});
    CHECK(fronts[1] == std::vector<std::size_t>{1, 2, 3});

    CHECK(fast_nondominated_sort(std::vector<std::vector<double>>{{4, 2}}).size() == 1);
    const auto dup = fast_nondominated_sort(std::vector<std::vector<double>>{{1, 1}, {1, 1}});
    REQUIRE(dup.size() == 1);
    CHECK(dup[0].size() == 2);
    CHECK_THROWS_AS(fast_nondominated_sort(std::vector<std::vector<double>>{{1, 1}, {1}}), std::invalid_argument);
}

TEST_CASE("non-dominated sort matches the brute-force oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        StreamRng rng(seed, 99);
        const std::size_t m = 2 + rng.below(3);
        const auto pts = random_points(rng, 100, m, seed % 2 == 0);
        REQUIRE(fast_nondominated_sort(pts) == reference::nondominated_sort(pts));
    }
}

TEST_CASE("crowding distance examples") {
    const double inf = std::numeric_limits<double>::infinity();
    const auto two = crowding_distance(std::vector<std::vector<double>>{{1, 2}, {3, 4}});
    CHECK(two == std::vector<double>{inf, inf});
    const auto three = crowding_distance(std::vector<std::vector<double>>{{1, 3}, {2, 2}, {3, 1}});
    CHECK(three[0] == inf);
    CHECK(three[1] == doctest::Approx(2.0));
    CHECK(three[2] == inf);
    const auto same = crowding_distance(std::vector<std::vector<double>>{{1, 1}, {1, 1}, {1, 1}, {1, 1}});
    int finite = 0;
    for (double d : same) {
        if (std::isfinite(d)) {
            CHECK(d == 0.0);
            ++finite;
        }
    }
    CHECK(finite == 2);
}

TEST_CASE("ga converges on the sphere") {
    FunctionProblem p(box(5, -1, 1), 1, sphere);
    EvoParams params;
    params.pop_size = 50;
    params.generations = 100;
    params.seed = 7;
    const auto r = run_ga(p, params);
    REQUIRE(r.front.size() == 1);
    CHECK(r.front[0].objectives[0] <= 1e-2);
    for (std::size_t g = 1; g < r.history.size(); ++g) CHECK(r.history[g].best[0] <= r.history[g - 1].best[0]);
}

TEST_CASE("de converges on the sphere") {
    FunctionProblem p(box(5, -1, 1), 1, sphere);
    EvoParams params;
    params.pop_size = 50;
    params.generations = 100;
    params.seed = 7;
    const auto r = run_de(p, params);
    CHECK(r.front[0].objectives[0] <= 1e-2);
    for (std::size_t g = 1; g < r.history.size(); ++g) CHECK(r.history[g].best[0] <= r.history[g - 1].best[0]);
}

TEST_CASE("ga without variation keeps the initial fitness") {
    FunctionProblem p(box(2, -1, 1), 1, sphere);
    EvoParams params;
    params.pop_size = 6;
    params.generations = 1;
    params.p_mut = 0.0;
    params.initial_population.assign(6, {0.3, -0.4});
    const auto r = run_ga(p, params);
    CHECK(r.front[0].objectives[0] == doctest::Approx(0.25));
    CHECK(r.front[0].genotype == std::vector<double>{0.3, -0.4});
}

TEST_CASE("default parameters give 200 evaluations") {
    int calls = 0;
    FunctionProblem p(box(2, 0, 1), 1, [&](std::span<const double> x) {
        ++calls;
        return sphere(x);
    }, false);
    EvoParams params;  // 25 x 7
    const auto r = run_ga(p, params);
    CHECK(r.evaluations == 200);
    CHECK(calls == 200);

    params.generations = 0;
    calls = 0;
    CHECK(run_ga(p, params).evaluations == 25);
    CHECK(calls == 25);
}

TEST_CASE("de degenerate cases") {
    const auto b = box(4, -5, 5);
    std::vector<std::vector<double>> pop{{0, 0, 0, 0}, {1, 1, 1, 1}, {2, 2, 2, 2}, {3, 3, 3, 3}, {4, 4, 4, 4}};
    StreamRng rng(6, 6);
    for (int i = 0; i < 50; ++i) {
        const auto trial = de_trial<StreamRng>(pop, 0, 0.0, 0.0, b, rng);
        int changed = 0;
        for (double v : trial) changed += v != 0.0;
        CHECK(changed == 1);
        for (double v : trial) CHECK((v == 0.0 || v == 1.0 || v == 2.0 || v == 3.0 || v == 4.0));
    }
    std::vector<std::vector<double>> same(5, std::vector<double>{0.5, -0.5, 1, 2});
    for (int i = 0; i < 20; ++i) CHECK(de_trial<StreamRng>(same, 2, 0.8, 0.9, b, rng) == same[2]);

    FunctionProblem p(box(2, -1, 1), 1, sphere);
    EvoParams params;
    params.pop_size = 4;
    params.generations = 3;
    params.initial_population.assign(4, {0.2, 0.2});
    const auto r = run_de(p, params);
    for (const auto& ind : r.population) CHECK(ind.genotype == std::vector<double>{0.2, 0.2});
    std::vector<std::vector<double>> three(3, std::vector<double>{0.0});
    CHECK_THROWS_AS(de_trial<StreamRng>(three, 0, 0.5, 0.5, box(1, 0, 1), rng), std::invalid_argument);
    params.pop_size = 3;
    params.initial_population.clear();
    CHECK_THROWS_AS(run_de(p, params), std::invalid_argument);
}

TEST_CASE("nsga2 recovers the Pareto set of the Schaffer problem") {
    WatchedProblem p(box(1, -2, 4), 2, [](std::span<const double> x) {
        return std::vector<double>{x[0] * x[0], (x[0] - 2) * (x[0] - 2)};
    });
    EvoParams params;
    params.pop_size = 24;
    params.generations = 30;
    params.seed = 3;
    const auto r = run_nsga2(p, params);
    CHECK(r.front.size() >= 10);
    for (const auto& ind : r.front) {
        CHECK(ind.genotype[0] >= -0.05);
        CHECK(ind.genotype[0] <= 2.05);
    }
    CHECK(p.violations == 0);
    CHECK(p.generations == 31);
}

TEST_CASE("nsga2 front is mutually non-dominated after one generation") {
    FunctionProblem p(box(3, 0, 1), 2, [](std::span<const double> x) {
        return std::vector<double>{x[0] + x[1], 1 - x[0] + x[2]};
    });
    EvoParams params;
    params.generations = 1;
    params.seed = 11;
    const auto r = run_nsga2(p, params);
    for (const auto& a : r.front) {
        for (const auto& b : r.front) CHECK_FALSE(dominates(a.objectives, b.objectives));
    }
    params.generations = 7;  // the default budget
    CHECK(run_nsga2(p, params).evaluations == 200);
}

TEST_CASE("arity and parameter errors") {
    FunctionProblem two(box(2, 0, 1), 2, [](std::span<const double> x) { return std::vector<double>{x[0], x[1]}; });
    FunctionProblem one(box(2, 0, 1), 1, sphere);
    EvoParams params;
    CHECK_THROWS_AS(run_ga(two, params), std::invalid_argument);
    CHECK_THROWS_AS(run_nsga2(one, params), std::invalid_argument);
    params.pop_size = 2;
    CHECK_THROWS_AS(run_ga(one, params), std::invalid_argument);
    params.pop_size = 25;
    params.p_mut = 1.5;
    CHECK_THROWS_AS(validate_params(params, Algorithm::ga), std::invalid_argument);
}

TEST_CASE("evaluation errors carry the genotype") {
    FunctionProblem p(box(2, 0, 1), 1, [](std::span<const double>) -> std::vector<double> {
        throw std::runtime_error("boom");
    });
    EvoParams params;
    try {
        run_ga(p, params);
        FAIL("expected an error");
    } catch (const EvaluationError& e) {
        CHECK(e.genotype().size() == 2);
        CHECK(std::string(e.what()).find("boom") != std::string::npos);
    }
}

TEST_CASE("runs are deterministic and independent of evaluation mode") {
    auto fn = [](std::span<const double> x) {
        return std::vector<double>{std::sin(3 * x[0]) + x[1] * x[1], std::cos(x[0]) + x[2]};
    };
    for (auto algo : {Algorithm::ga, Algorithm::de, Algorithm::nsga2}) {
        const bool multi = algo == Algorithm::nsga2;
        auto f1 = [&](std::span<const double> x) {
            auto v = fn(x);
            if (!multi) v.resize(1);
            return v;
        };
        FunctionProblem serial(box(3, -1, 1), multi ? 2 : 1, f1, false);
        FunctionProblem parallel(box(3, -1, 1), multi ? 2 : 1, f1, true);
        EvoParams params;
        params.seed = 123;
        params.generations = 5;
        const auto a = run_algorithm(algo, serial, params);
        const auto b = run_algorithm(algo, parallel, params);
        const auto c = run_algorithm(algo, serial, params);
        REQUIRE(a.front.size() == b.front.size());
        for (std::size_t i = 0; i < a.front.size(); ++i) {
            CHECK(a.front[i].genotype == b.front[i].genotype);
            CHECK(a.front[i].genotype == c.front[i].genotype);
        }
        for (const auto& ind : a.population) CHECK(within(ind.genotype, serial.bounds()));
    }
}

TEST_CASE("algorithm names") {
    for (auto a : {Algorithm::ga, Algorithm::de, Algorithm::nsga2}) CHECK(parse_algorithm(to_string(a)) == a);
    CHECK_FALSE(parse_algorithm("cmaes").has_value());
}

}  // TEST_SUITE
