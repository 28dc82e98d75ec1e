#include <doctest.h>

#include "ddreg/rng.hpp"
#include "ddreg/weighting.hpp"

using namespace ddreg;

TEST_SUITE_BEGIN("weighting");

TEST_CASE("init: 3 losses + 1 regularizer at 5e-3 splits the remainder equally") {
    WeightState s = init_weights({LossKind::NCC, LossKind::SSIM, LossKind::DSC}, 1, 5e-3);
    std::vector<double> w = s.weights();
    REQUIRE(w.size() == 4);
    for (int i = 0; i < 3; ++i) CHECK(w[i] == doctest::Approx(0.995 / 3).epsilon(1e-12));
    CHECK(w[3] == doctest::Approx(0.005).epsilon(1e-12));
}

TEST_CASE("init: two losses and no regularizer split evenly") {
    WeightState s = init_weights({LossKind::NCC, LossKind::SSIM}, 0, 0.5);
    std::vector<double> w = s.weights();
    REQUIRE(w.size() == 2);
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("solved logits recover the target weights within 1e-12") {
    WeightState s = init_weights({LossKind::NCC, LossKind::SSIM, LossKind::DSC, LossKind::HD}, 1, 5e-3);
    std::vector<double> w = s.weights();
    double sum = 0;
    for (double x : w) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(w[i] - 0.995 / 4) <= 1e-12);
    CHECK(std::abs(w[4] - 5e-3) <= 1e-12);
}

TEST_CASE("infeasible regularizer weights are rejected") {
    CHECK_THROWS_AS(init_weights({LossKind::NCC}, 1, 0.0), ValidationError);
    CHECK_THROWS_AS(init_weights({LossKind::NCC}, 1, 1.0), ValidationError);
    CHECK_THROWS_AS(init_weights({}, 1, 0.5), ValidationError);
}

TEST_CASE("combine: equal logits average; reference arithmetic case") {
    WeightState s = init_weights({LossKind::NCC, LossKind::SSIM}, 0, 0.5);
    CHECK(combine({1.0, 1.0}, s, false).value == doctest::Approx(1.0).epsilon(1e-15));

    WeightState s2 = init_weights({LossKind::NCC, LossKind::SSIM, LossKind::DSC}, 1, 5e-3);
    // weights (0.995/3 x3, 0.005), terms (1,1,1,10) -> 0.995 + 0.05
    CHECK(combine({1.0, 1.0, 1.0, 10.0}, s2, false).value == doctest::Approx(1.045).epsilon(1e-12));
}

TEST_CASE("combine gradients: w_i to terms, softmax-coupled to logits") {
    WeightState s = init_weights({LossKind::NCC, LossKind::DSC}, 1, 0.01);
    std::vector<double> terms = {0.4, 0.9, 0.02};
    CombineResult r = combine(terms, s);
    std::vector<double> w = s.weights();
    for (int i = 0; i < 3; ++i) {
        CHECK(r.dterms[i] == doctest::Approx(w[i]).epsilon(1e-15));
        CHECK(r.dlogits[i] == doctest::Approx(w[i] * (terms[i] - r.value)).epsilon(1e-12));
    }
}

TEST_CASE("combine rejects non-finite terms with the term name") {
    WeightState s = init_weights({LossKind::NCC, LossKind::SSIM}, 1, 0.1);
    try {
        combine({1.0, std::numeric_limits<double>::quiet_NaN(), 0.0}, s, false);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("ssim") != std::string::npos);
    }
}

TEST_CASE("weights stay on the open simplex for wild logit values") {
    WeightState s = init_weights({LossKind::NCC, LossKind::SSIM, LossKind::DSC}, 1, 5e-3);
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        for (auto& l : s.logits) l = rng.uniform(-40, 40);
        std::vector<double> w = s.weights();
        double sum = 0;
        for (double x : w) {
            CHECK(x > 0.0);
            sum += x;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("combine is invariant under a common logit shift") {
    WeightState s = init_weights({LossKind::NCC, LossKind::SSIM}, 1, 0.02);
    std::vector<double> terms = {0.7, 0.1, 0.05};
    double base = combine(terms, s, false).value;
    for (auto& l : s.logits) l += 7.5;
    CHECK(combine(terms, s, false).value == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("record_weights keeps simplex rows and starts at the init weights") {
    WeightState s = init_weights({LossKind::NCC, LossKind::SSIM, LossKind::DSC}, 1, 5e-3);
    WeightHistory h;
    record_weights(s, 1, h);
    s.logits[0] += 0.5;
    record_weights(s, 2, h);
    REQUIRE(h.rows.size() == 2);
    CHECK(h.rows[0].weights[3] == doctest::Approx(5e-3).epsilon(1e-12));
    for (const auto& row : h.rows) {
        double sum = 0;
        for (double w : row.weights) sum += w;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    std::string csv = h.to_csv(s);
    CHECK(csv.find("epoch,w_ncc,w_ssim,w_dsc,w_hd,lambda_reg") == 0);
}

TEST_SUITE_END();
