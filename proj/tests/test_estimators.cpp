#include <doctest.h>

#include <cmath>

#include "evomerge/estimators.hpp"
#include "support.hpp"

using namespace evomerge;
using testsupport::IrtWorld;

namespace {

double recover_theta(double theta_star, std::uint64_t seed) {
    StreamRng rng(seed, 17);
    std::vector<ItemResponse> rs;
    for (int i = 0; i < 300; ++i) {
        IrtItem item{0.5 + 1.5 * rng.uniform(), -2.0 + 4.0 * rng.uniform()};
        rs.push_back({item, rng.uniform() < irt_prob(theta_star, item)});
    }
    return fit_theta(rs).theta;
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("irt_prob examples") {
    CHECK(irt_prob(0.3, {1.7, 0.3}) == doctest::Approx(0.5));
    CHECK(std::abs(irt_prob(5.0, {1e-9, -2.0}) - 0.5) <= 1e-6);
    CHECK(irt_prob(1.5, {2.0, 0.5}) == doctest::Approx(0.880797).epsilon(1e-6));
    StreamRng rng(1, 1);
    for (int i = 0; i < 500; ++i) {
        const IrtItem item{0.01 + 5 * rng.uniform(), -6 + 12 * rng.uniform()};
        const double t = -6 + 12 * rng.uniform();
        const double p = irt_prob(t, item);
        REQUIRE(p > 0.0);
        REQUIRE(p < 1.0);
        REQUIRE(irt_prob(t + 0.1, item) >= p);
    }
}

TEST_CASE("fit_theta examples") {
    const std::vector<ItemResponse> one{{{1.0, 0.0}, true}};
    const auto e = fit_theta(one);
    CHECK(e.theta == kThetaMax);
    CHECK(e.n_observed == 1);
    const std::vector<ItemResponse> wrong{{{1.0, 0.0}, false}, {{2.0, 1.0}, false}};
    CHECK(fit_theta(wrong).theta == kThetaMin);
    CHECK(std::abs(recover_theta(0.7, 1) - 0.7) <= 0.15);
    CHECK(std::abs(recover_theta(-1.2, 2) + 1.2) <= 0.15);

    ItemBank bank;
    bank.items["x"] = {1, 0};
    bank.anchor_ids = {"x"};
    CHECK_THROWS_AS(fit_theta(std::map<std::string, bool>{{"y", true}}, bank), ConfigError);
}

TEST_CASE("fit_theta lands on the likelihood maximum") {
    // one right, one wrong on symmetric items: maximum at theta = 0
    const std::vector<ItemResponse> rs{{{1.0, -1.0}, true}, {{1.0, 1.0}, false}};
    CHECK(std::abs(fit_theta(rs).theta) <= 1e-3);
}

TEST_CASE("pirt examples") {
    const auto w = testsupport::make_irt_world(200, 20, 4);
    StreamRng rng(4, 4);
    const auto bits = testsupport::sample_responses(w, 0.3, rng);

    auto full = w;
    full.bank.anchor_ids = w.ids;
    const auto all = testsupport::full_record(w, bits);
    CHECK(estimate_pirt(all, full.bank) == doctest::Approx(testsupport::mean(bits)).epsilon(1e-15));

    std::vector<bool> yes(w.ids.size(), true);
    const auto anchors_yes = testsupport::anchor_record(w, yes);
    const double est = estimate_pirt(anchors_yes, w.bank);
    CHECK(est <= 1.0);
    CHECK(est >= 20.0 / 200.0);

    EvalRecord empty;
    CHECK_THROWS(estimate_pirt(empty, w.bank));
}

TEST_CASE("pirt recovers full accuracy in a 2PL world") {
    const auto w = testsupport::make_irt_world(500, 50, 11);
    StreamRng rng(11, 5);
    const auto bits = testsupport::sample_responses(w, 0.5, rng);
    const double est = estimate_pirt(testsupport::anchor_record(w, bits), w.bank);
    CHECK(std::abs(est - testsupport::mean(bits)) <= 0.05);
}

TEST_CASE("gpirt examples") {
    const auto w = testsupport::make_irt_world(100, 10, 2);
    StreamRng rng(2, 2);
    const auto bits = testsupport::sample_responses(w, -0.4, rng);
    const auto obs = testsupport::anchor_record(w, bits);
    CHECK(estimate_gpirt(obs, w.bank, 0.0) == estimate_pirt(obs, w.bank));
    CHECK(estimate_gpirt(obs, w.bank, 1.0) == doctest::Approx(obs.accuracy));
    CHECK(estimate_gpirt(obs, w.bank, 0.5) ==
          doctest::Approx(0.5 * obs.accuracy + 0.5 * estimate_pirt(obs, w.bank)));
    CHECK_THROWS(estimate_gpirt(obs, w.bank, 1.5));
    CHECK_THROWS(estimate_gpirt(obs, w.bank, -0.1));
}

TEST_CASE("mpirt examples") {
    const auto w = testsupport::make_irt_world(300, 30, 3);
    StreamRng rng(3, 3);
    const auto bits = testsupport::sample_responses(w, 0.0, rng);
    const auto obs = testsupport::anchor_record(w, bits);
    // w = [1]: theta_m = theta_1
    CHECK(estimate_mpirt(std::vector<double>{0.8}, std::vector<double>{1}, obs, w.bank) ==
          doctest::Approx(extrapolate_accuracy(obs, w.bank, 0.8)));
    CHECK(estimate_mpirt(std::vector<double>{0.8}, std::vector<double>{3}, obs, w.bank) ==
          doctest::Approx(extrapolate_accuracy(obs, w.bank, 0.8)));
    // symmetric pair averages to 0
    CHECK(estimate_mpirt(std::vector<double>{-1, 1}, std::vector<double>{1, 1}, obs, w.bank) ==
          doctest::Approx(extrapolate_accuracy(obs, w.bank, 0.0)));
    CHECK_THROWS(estimate_mpirt(std::vector<double>{-1, 1}, std::vector<double>{1}, obs, w.bank));
    CHECK_THROWS(estimate_mpirt(std::vector<double>{-1, 1}, std::vector<double>{0, 0}, obs, w.bank));
    CHECK_THROWS(estimate_mpirt(std::vector<double>{-1, 1}, std::vector<double>{-1, 2}, obs, w.bank));
}

TEST_CASE("mpirt in a self-consistent world") {
    const auto w = testsupport::make_irt_world(500, 50, 13);
    StreamRng rng(13, 1);
    const std::vector<double> true_thetas{-0.8, 1.4};
    std::vector<double> fitted;
    for (double t : true_thetas) {
        const auto bits = testsupport::sample_responses(w, t, rng);
        fitted.push_back(fit_theta(testsupport::anchor_record(w, bits), w.bank).theta);
    }
    const std::vector<double> weights{0.35, 0.65};
    const double theta_m = 0.35 * true_thetas[0] + 0.65 * true_thetas[1];
    const auto merged = testsupport::sample_responses(w, theta_m, rng);
    const double est = estimate_mpirt(fitted, weights, testsupport::anchor_record(w, merged), w.bank);
    CHECK(std::abs(est - testsupport::mean(merged)) <= 0.05);
}

TEST_CASE("gmpirt examples and alpha fit") {
    CHECK(estimate_gmpirt(0.6, 0.8, 1.0) == 0.6);
    CHECK(estimate_gmpirt(0.6, 0.8, 0.0) == 0.8);
    CHECK(estimate_gmpirt(0.6, 0.8, 0.5) == doctest::Approx(0.7));
    CHECK(estimate_gmpirt(0.6, 0.8, 3.0) == 0.6);  // clipped

    GmpirtAlpha a;
    CHECK(a.alpha() == 0.5);
    // measured = 0.25 * mpirt + 0.75 * observed
    const double pts[][2] = {{0.2, 0.6}, {0.9, 0.1}, {0.5, 0.5}, {0.3, 0.8}};
    for (auto& p : pts) a.add(p[0], p[1], 0.25 * p[0] + 0.75 * p[1]);
    CHECK(a.alpha() == 0.5);  // fewer than five samples
    a.add(0.7, 0.2, 0.25 * 0.7 + 0.75 * 0.2);
    CHECK(a.alpha() == doctest::Approx(0.25));

    GmpirtAlpha clipped;
    for (int i = 0; i < 6; ++i) clipped.add(0.2 + 0.1 * i, 0.9, 0.2 + 0.1 * i - 2.0 * (0.9 - 0.2 - 0.1 * i));
    CHECK(clipped.alpha() == 1.0);
}

TEST_CASE("random estimator") {
    Dataset d;
    for (int i = 0; i < 50; ++i) d.push_back({"r" + std::to_string(i), "p", i < 20 ? "A" : "B", {}, {}});
    const auto eval = [](const Dataset& items) {
        std::vector<std::string> ids;
        std::vector<bool> bits;
        for (const auto& it : items) {
            ids.push_back(it.id);
            bits.push_back(it.gold == "A");
        }
        return EvalRecord::from_bits(ids, bits);
    };
    CHECK(estimate_random(d, 50, 1, eval) == doctest::Approx(0.4));
    const double one = estimate_random(d, 1, 9, eval);
    CHECK((one == 0.0 || one == 1.0));
    CHECK(estimate_random(d, 10, 5, eval) == estimate_random(d, 10, 5, eval));
    CHECK_THROWS(estimate_random(d, 51, 5, eval));
}

TEST_CASE("anchors equal to the bank make every IRT estimator exact") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto w = testsupport::make_irt_world(120, 10, seed);
        w.bank.anchor_ids = w.ids;
        StreamRng rng(seed, 8);
        const auto bits = testsupport::sample_responses(w, 0.2 * double(seed) - 0.5, rng);
        const auto obs = testsupport::full_record(w, bits);
        const double acc = testsupport::mean(bits);
        CHECK(estimate_pirt(obs, w.bank) == acc);
        CHECK(estimate_gpirt(obs, w.bank, 0.3) == doctest::Approx(acc).epsilon(1e-15));
        CHECK(estimate_mpirt(std::vector<double>{-2, 3}, std::vector<double>{0.4, 0.6}, obs, w.bank) == acc);
    }
}

TEST_CASE("item bank files") {
    const auto w = testsupport::make_irt_world(30, 5, 1);
    testsupport::TempDir dir;
    save_item_bank(w.bank, dir / "bank.json");
    const auto back = load_item_bank(dir / "bank.json");
    CHECK(back.anchor_ids == w.bank.anchor_ids);
    REQUIRE(back.items.size() == w.bank.items.size());
    for (const auto& [id, item] : w.bank.items) {
        CHECK(back.items.at(id).a == item.a);
        CHECK(back.items.at(id).b == item.b);
    }
    ItemBank bad = w.bank;
    bad.anchor_ids.push_back("nope");
    CHECK_THROWS(bad.validate());
    ItemBank none;
    CHECK_THROWS(none.validate());
}

TEST_CASE("calibration recovers difficulties") {
    StreamRng rng(31, 31);
    std::vector<IrtItem> truth(200);
    std::vector<double> thetas(50);
    for (auto& it : truth) it = {0.7 + 1.3 * rng.uniform(), -2.0 + 4.0 * rng.uniform()};
    for (auto& t : thetas) t = testsupport::normal(rng);
    ResponseMatrix m;
    for (std::size_t j = 0; j < truth.size(); ++j) m.item_ids.push_back("c" + std::to_string(j));
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        m.model_names.push_back("m" + std::to_string(i));
        std::vector<bool> row;
        for (const auto& it : truth) row.push_back(rng.uniform() < irt_prob(thetas[i], it));
        m.correct.push_back(row);
    }
    const auto result = calibrate(m);
    std::vector<double> err;
    for (std::size_t j = 0; j < truth.size(); ++j) {
        err.push_back(std::abs(result.bank.items.at(m.item_ids[j]).b - truth[j].b));
    }
    std::nth_element(err.begin(), err.begin() + 100, err.end());
    CHECK(err[100] <= 0.5);
    CHECK(result.bank.anchor_ids.size() == 50);
    CHECK(result.rounds <= 10);
    for (const auto& [id, it] : result.bank.items) {
        CHECK(it.a > 0);
        CHECK(it.a <= kDiscriminationMax);
        CHECK(it.b >= kThetaMin);
        CHECK(it.b <= kThetaMax);
    }
}

TEST_CASE("calibration edge cases") {
    ResponseMatrix m;
    for (int j = 0; j < 12; ++j) m.item_ids.push_back("e" + std::to_string(j));
    StreamRng rng(2, 2);
    for (int i = 0; i < 6; ++i) {
        m.model_names.push_back("m" + std::to_string(i));
        std::vector<bool> row;
        for (int j = 0; j < 12; ++j) row.push_back(j == 0 ? true : rng.uniform() < 0.5);
        m.correct.push_back(row);
    }
    CalibrationOptions opts;
    opts.n_anchors = 4;
    const auto bank = calibrate_item_bank(m, opts);
    CHECK(bank.items.at("e0").b == kThetaMin);

    auto two = m;
    two.model_names.resize(2);
    two.correct.resize(2);
    CHECK_THROWS_AS(calibrate(two), CalibrationError);

    auto same = m;
    for (auto& row : same.correct) row = same.correct[0];
    CHECK_THROWS_AS(calibrate(same), CalibrationError);

    testsupport::TempDir dir;
    write_response_csv(m, dir / "r.csv");
    const auto back = read_response_csv(dir / "r.csv");
    CHECK(back.correct == m.correct);
    CHECK(back.item_ids == m.item_ids);
}

TEST_CASE("estimator names") {
    for (auto k : {EstimatorKind::full, EstimatorKind::random, EstimatorKind::pirt, EstimatorKind::gpirt,
                   EstimatorKind::mpirt, EstimatorKind::gmpirt}) {
        CHECK(parse_estimator_kind(to_string(k)) == k);
    }
    CHECK(is_irt(EstimatorKind::gmpirt));
    CHECK_FALSE(is_irt(EstimatorKind::random));
}

}  // TEST_SUITE
