#include <doctest.h>

#include <cmath>
#include <string>

#include "evomerge/merge.hpp"
#include "evomerge/reference.hpp"
#include "support.hpp"

using namespace evomerge;
using testsupport::single;
using testsupport::values;

namespace {

std::vector<const TensorMap*> refs(std::initializer_list<const TensorMap*> xs) { return xs; }

void check_abs(const std::vector<double>& got, const std::vector<double>& want, double tol) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        INFO("element " << i);
        CHECK(std::abs(got[i] - want[i]) <= tol);
    }
}

}  // namespace

TEST_SUITE("merge") {

TEST_CASE("lerp examples") {
    const auto a = single("x", {1, 0});
    const auto b = single("x", {0, 1});
    check_abs(values(lerp_merge(refs({&a, &b}), std::vector<double>{3, 1}), "x"), {0.75, 0.25}, 1e-12);
    check_abs(values(lerp_merge(refs({&a}), std::vector<double>{1}), "x"), {1, 0}, 0);
    const auto two = single("x", {2, 2});
    const auto zero = single("x", {0, 0});
    check_abs(values(lerp_merge(refs({&two, &zero}), std::vector<double>{1, 1}), "x"), {1, 1}, 0);
    CHECK_THROWS_AS(lerp_merge(refs({&a, &b}), std::vector<double>{0, 0}), std::invalid_argument);
    const auto c = single("y", {0, 1});
    CHECK_THROWS_AS(lerp_merge(refs({&a, &c}), std::vector<double>{1, 1}), CompatError);
}

TEST_CASE("slerp examples") {
    const auto a = single("x", {1, 0});
    const auto b = single("x", {0, 1});
    const double h = std::sqrt(0.5);
    check_abs(values(slerp_merge(a, b, 0.5), "x"), {h, h}, 1e-12);
    check_abs(values(slerp_merge(a, b, 0.0), "x"), {1, 0}, 0);
    check_abs(values(slerp_merge(a, b, 1.0), "x"), {0, 1}, 1e-15);
    CHECK_THROWS_AS(slerp_merge(a, b, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(slerp_merge(a, b, -0.1), std::invalid_argument);
    // parallel vectors fall back to lerp
    const auto a2 = single("x", {2, 0});
    check_abs(values(slerp_merge(a, a2, 0.25), "x"), {1.25, 0}, 1e-12);
}

TEST_CASE("slerp keeps unit norm") {
    StreamRng rng(5, 5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> u(16), v(16);
        double nu = 0, nv = 0;
        for (std::size_t i = 0; i < 16; ++i) {
            u[i] = testsupport::normal(rng);
            v[i] = testsupport::normal(rng);
            nu += u[i] * u[i];
            nv += v[i] * v[i];
        }
        for (std::size_t i = 0; i < 16; ++i) {
            u[i] /= std::sqrt(nu);
            v[i] /= std::sqrt(nv);
        }
        const double t = rng.uniform();
        const auto out = values(slerp_merge(single("x", u), single("x", v), t), "x");
        double n = 0;
        for (double x : out) n += x * x;
        CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-5);
    }
}

TEST_CASE("task arithmetic examples") {
    const auto base = single("x", {0, 0});
    const auto e1 = single("x", {1, 0});
    const auto e2 = single("x", {0, 2});
    check_abs(values(task_arithmetic_merge(base, refs({&e1, &e2}), std::vector<double>{0.5, 0.25}), "x"), {0.5, 0.5},
              1e-12);
    const auto b2 = single("x", {3, -1});
    CHECK(task_arithmetic_merge(b2, refs({&e1, &e2}), std::vector<double>{0, 0}) == b2);
    CHECK(task_arithmetic_merge(b2, refs({&e1}), std::vector<double>{1}) == e1);
    CHECK_THROWS_AS(task_arithmetic_merge(base, refs({&e1, &e2}), std::vector<double>{1}), std::invalid_argument);
}

TEST_CASE("convexity of lerp and task arithmetic") {
    StreamRng rng(9, 9);
    for (int trial = 0; trial < 100; ++trial) {
        const auto base = testsupport::random_model(rng, {{3, 2}, {4}});
        const auto e1 = testsupport::random_model(rng, {{3, 2}, {4}});
        const auto e2 = testsupport::random_model(rng, {{3, 2}, {4}});
        const double l = rng.uniform();
        const std::vector<double> w{l, 1 - l};
        const auto ta = task_arithmetic_merge(base, refs({&e1, &e2}), w);
        const auto li = lerp_merge(refs({&e1, &e2}), w);
        for (const auto& [name, t] : ta.entries) {
            const auto x1 = values(e1, name), x2 = values(e2, name);
            const auto y = t.to_f64(), z = li.at(name).to_f64();
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double lo = std::min(x1[i], x2[i]) - 1e-6, hi = std::max(x1[i], x2[i]) + 1e-6;
                REQUIRE(y[i] >= lo);
                REQUIRE(y[i] <= hi);
                REQUIRE(z[i] >= lo);
                REQUIRE(z[i] <= hi);
            }
        }
    }
}

TEST_CASE("ties examples") {
    const auto base = single("x", {0});
    const auto p1 = single("x", {1});
    const auto p3 = single("x", {3});
    const auto m3 = single("x", {-3});
    const std::vector<double> w{1, 1};
    check_abs(values(ties_merge(base, refs({&p1, &p3}), w, 1.0), "x"), {2}, 1e-12);
    check_abs(values(ties_merge(base, refs({&p1, &m3}), w, 1.0), "x"), {-3}, 1e-12);
    // single endpoint at full density reproduces it
    const auto e = single("x", {0.5, -2, 7});
    const auto b = single("x", {1, 1, 1});
    check_abs(values(ties_merge(b, refs({&e}), std::vector<double>{1}, 1.0), "x"), {0.5, -2, 7}, 1e-12);
    // exact zero sum elects +
    const auto m1 = single("x", {-1});
    check_abs(values(ties_merge(base, refs({&p1, &m1}), w, 1.0), "x"), {1}, 1e-12);
}

TEST_CASE("trim keeps ceil(density n) entries, lower index first on ties") {
    CHECK(ties_keep_count(10, 0.25) == 3);
    CHECK(ties_keep_count(4, 1.0) == 4);
    CHECK(ties_keep_count(7, 0.01) == 1);
    std::vector<double> v{1, -2, 2, 0.5};
    kernels::trim_top_k(v, 0.5);
    CHECK(v == std::vector<double>{0, -2, 2, 0});
    std::vector<double> same{1, 1, 1, 1};
    kernels::trim_top_k(same, 0.5);
    CHECK(same == std::vector<double>{1, 1, 0, 0});
}

TEST_CASE("ties matches the per-element oracle on random tensors") {
    StreamRng rng(77, 1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 1 + rng.below(4);
        const std::vector<Shape> shapes{{1 + rng.below(5), 1 + rng.below(5)}, {1 + rng.below(9)}};
        const auto base = testsupport::random_model(rng, shapes);
        std::vector<TensorMap> eps;
        for (std::size_t i = 0; i < k; ++i) eps.push_back(testsupport::random_model(rng, shapes));
        std::vector<const TensorMap*> ptrs;
        for (const auto& e : eps) ptrs.push_back(&e);
        std::vector<double> w(k);
        for (auto& x : w) x = 0.05 + rng.uniform();
        const double density = 0.1 + 0.9 * rng.uniform();
        std::optional<DarePreprocess> pre;
        if (rng.below(2)) pre = DarePreprocess{0.3, rng()};
        const auto got = ties_merge(base, ptrs, w, density, pre);
        const auto want = reference::ties(base, ptrs, w, density, pre);
        for (const auto& [name, t] : want.entries) {
            const auto g = got.at(name).to_f64(), r = t.to_f64();
            for (std::size_t i = 0; i < g.size(); ++i) REQUIRE(std::abs(g[i] - r[i]) <= 1e-6);
        }
    }
}

TEST_CASE("parallel kernels agree with the serial reference") {
    StreamRng rng(3, 3);
    for (std::size_t n : {0u, 1u, 7u, 1000u, 70000u}) {
        std::vector<double> a(n), b(n);
        for (auto& x : a) x = testsupport::normal(rng);
        for (auto& x : b) x = testsupport::normal(rng);
        CHECK(kernels::dot(a, b) == doctest::Approx(reference::dot(a, b)).epsilon(1e-12));
        auto trimmed = a;
        kernels::trim_top_k(trimmed, 0.3);
        if (n <= 1000) CHECK(trimmed == reference::trim_top_k(a, 0.3));
        auto masked = a;
        kernels::dare_mask(masked, 0.4, 11, 22);
        CHECK(masked == reference::dare_mask(a, 0.4, 11, 22));
    }
    const auto base = testsupport::random_model(rng, {{8, 8}, {8}});
    const auto e1 = testsupport::random_model(rng, {{8, 8}, {8}});
    const auto e2 = testsupport::random_model(rng, {{8, 8}, {8}});
    const std::vector<double> w{0.3, 0.9};
    CHECK(lerp_merge(refs({&e1, &e2}), w) == reference::lerp(refs({&e1, &e2}), w));
    CHECK(slerp_merge(e1, e2, 0.3) == reference::slerp(e1, e2, 0.3));
    CHECK(task_arithmetic_merge(base, refs({&e1, &e2}), w) == reference::task_arithmetic(base, refs({&e1, &e2}), w));
    CHECK(dare_linear_merge(base, refs({&e1, &e2}), w, {0.5, 4}) ==
          reference::dare_linear(base, refs({&e1, &e2}), w, {0.5, 4}));
}

TEST_CASE("dare examples") {
    const auto tau = single("x", {1, -2, 3});
    CHECK(values(dare_sparsify(tau, 0.0, 1, "s"), "x") == std::vector<double>{1, -2, 3});
    CHECK(dare_sparsify(tau, 0.5, 1, "s") == dare_sparsify(tau, 0.5, 1, "s"));
    CHECK_THROWS_AS(dare_sparsify(tau, 1.0, 1, "s"), std::invalid_argument);

    const auto ones = single("x", std::vector<double>(100000, 1.0));
    const auto out = values(dare_sparsify(ones, 0.5, 42, "big"), "x");
    double mean = 0;
    for (double x : out) {
        REQUIRE((x == 0.0 || x == 2.0));
        mean += x;
    }
    mean /= static_cast<double>(out.size());
    CHECK(mean >= 0.98);
    CHECK(mean <= 1.02);
}

TEST_CASE("dare is unbiased across streams") {
    const std::vector<double> tau{0.5, -1.0, 2.0, 0.1};
    const double p = 0.3;
    const int streams = 10000;
    std::vector<double> sum(tau.size(), 0.0);
    const auto t = single("x", tau);
    for (int s = 0; s < streams; ++s) {
        const auto out = values(dare_sparsify(t, p, 7, "stream-" + std::to_string(s)), "x");
        for (std::size_t i = 0; i < tau.size(); ++i) sum[i] += out[i];
    }
    for (std::size_t i = 0; i < tau.size(); ++i) {
        const double sigma = std::abs(tau[i]) * std::sqrt(p / (1 - p)) / std::sqrt(double(streams));
        CHECK(std::abs(sum[i] / streams - tau[i]) <= 3 * sigma);
    }
}

TEST_CASE("merged dtype follows the inputs") {
    const auto base = single("x", {0, 0}, DType::bf16);
    const auto e = single("x", {1, 0.5}, DType::bf16);
    const auto m = task_arithmetic_merge(base, refs({&e}), std::vector<double>{0.5});
    CHECK(m.at("x").dtype == DType::bf16);
    check_abs(values(m, "x"), {0.5, 0.25}, 0);
}

TEST_CASE("merges are pure") {
    StreamRng rng(1, 2);
    const auto base = testsupport::random_model(rng, {{4, 4}});
    const auto e1 = testsupport::random_model(rng, {{4, 4}});
    const auto e2 = testsupport::random_model(rng, {{4, 4}});
    for (auto method : kAllMergeMethods) {
        MergeRecipe r;
        r.method = method;
        r.weights = method == MergeMethod::slerp ? std::vector<double>{0.4} : std::vector<double>{0.4, 0.7};
        r.seed = 9;
        const auto ptrs = refs({&e1, &e2});
        const auto a = apply_recipe(r, &base, ptrs);
        const auto b = apply_recipe(r, &base, ptrs);
        CHECK(checkpoint_hash(a) == checkpoint_hash(b));
    }
    MergeRecipe r;
    r.method = MergeMethod::ties;
    r.weights = {1, 1};
    CHECK_THROWS_AS(apply_recipe(r, nullptr, refs({&e1, &e2})), std::invalid_argument);
}

TEST_CASE("decode genotype") {
    GenotypeSpec ta;
    ta.method = MergeMethod::task_arithmetic;
    ta.n_endpoints = 2;
    ta.bounds = {{0, 1}, {0, 1}};
    const std::vector<double> g1{0.3, 0.7};
    CHECK(decode_genotype(g1, ta).weights == g1);

    GenotypeSpec sl;
    sl.method = MergeMethod::slerp;
    sl.n_endpoints = 2;
    sl.bounds = {{0, 1}};
    CHECK(decode_genotype(std::vector<double>{0.25}, sl).weights == std::vector<double>{0.25});

    GenotypeSpec ti;
    ti.method = MergeMethod::ties;
    ti.n_endpoints = 2;
    ti.evolve_density = true;
    ti.bounds = {{0, 1}, {0, 1}, {0.1, 1}};
    const auto r = decode_genotype(std::vector<double>{0.4, 0.6, 0.5}, ti);
    CHECK(r.weights == std::vector<double>{0.4, 0.6});
    CHECK(r.density == 0.5);
    CHECK(r.drop_rate == kDefaultDropRate);

    ti.evolve_drop_rate = true;
    ti.bounds.push_back({0, 0.9});
    const auto r2 = decode_genotype(std::vector<double>{0.4, 0.6, 0.5, 0.2}, ti);
    CHECK(r2.drop_rate == 0.2);
    CHECK_THROWS_AS(decode_genotype(std::vector<double>{0.4}, ta), std::invalid_argument);
}

TEST_CASE("method names") {
    for (auto m : kAllMergeMethods) CHECK(parse_merge_method(to_string(m)) == m);
    CHECK_FALSE(parse_merge_method("model_soup").has_value());
    CHECK(needs_base(MergeMethod::ties));
    CHECK_FALSE(needs_base(MergeMethod::slerp));
}

}  // TEST_SUITE
