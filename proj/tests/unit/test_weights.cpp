#include <gtest/gtest.h>

#include <cmath>

#include "evscale/errors.hpp"
#include "evscale/simulator.hpp"
#include "evscale/weights.hpp"

using namespace evscale;

namespace {

Path simple_path(std::optional<int> a0) {
    Path p;
    p.tau = 3.0;
    p.a0 = a0;
    p.l0 = 0.4;
    p.jumps = {{0.5, Mark::z()}, {2.5, Mark::outcome_j(1)}};
    return p;
}

}  // namespace

TEST(TreatmentCensoring, NoCensoring) {
    const auto p = simple_path(1);
    EXPECT_DOUBLE_EQ(treatment_censoring_weight(Propensity::constant(0.5), IntensityModel{0.0, 1.0}, p, 2.0, 1), 2.0);
}

TEST(TreatmentCensoring, ArmMismatch) {
    const auto p = simple_path(0);
    EXPECT_EQ(treatment_censoring_weight(Propensity::constant(0.5), IntensityModel{0.1, 1.0}, p, 2.0, 1), 0.0);
}

TEST(TreatmentCensoring, ExponentialCensoring) {
    const auto p = simple_path(1);
    EXPECT_NEAR(treatment_censoring_weight(Propensity::constant(0.5), IntensityModel{0.1, 1.0}, p, 2.0, 1),
                2.0 * std::exp(0.2), 1e-12);
}

TEST(TreatmentCensoring, PositivityViolation) {
    const auto p = simple_path(1);
    Propensity pi = Propensity::logistic(-800.0, 0.0);
    EXPECT_THROW((void)treatment_censoring_weight(pi, IntensityModel{0.1, 1.0}, p, 2.0, 1), PositivityError);
}

TEST(TreatmentCensoring, NoArmNoTreatmentFactor) {
    const auto p = simple_path(std::nullopt);
    EXPECT_DOUBLE_EQ(treatment_censoring_weight(std::nullopt, IntensityModel{0.0, 1.0}, p, 2.0, std::nullopt), 1.0);
}

TEST(AlphaWeight, OneIsExact) {
    const auto sc = build_scenario(preset_config("example1"));
    const auto cohort = sample_cohort(sc, std::nullopt, 200, 1);
    const IntensityModel z{0.37, 1.4, 0.2, 0.1, 0.0, 1.1};
    for (const auto& p : cohort.paths) {
        for (double t : {0.1, 1.0, 2.9}) EXPECT_EQ(alpha_weight(z, p, t, 1.0), 1.0);
        WeightTrace w(p, std::nullopt, IntensityModel{0.0, 1.0}, z, std::nullopt, 1.0);
        EXPECT_EQ(w.at(1.5), 1.0);
    }
}

TEST(AlphaWeight, PreventedEvent) {
    const auto p = simple_path(std::nullopt);
    EXPECT_EQ(alpha_weight(IntensityModel{0.3, 1.0}, p, 1.0, 0.0), 0.0);
}

TEST(AlphaWeight, ClosedForm) {
    // Lambda^z over [0, 1] with the z jump at 0.5: 0.6 * 0.5 = 0.3 before the jump, none after
    const auto p = simple_path(std::nullopt);
    EXPECT_NEAR(alpha_weight(IntensityModel{0.6, 1.0}, p, 1.0, 2.0), 2.0 * std::exp(-0.3), 1e-12);
}

TEST(WeightTrace, MatchesProductOfFactors) {
    const auto p = simple_path(1);
    const IntensityModel c{0.2, 1.3};
    const IntensityModel z{0.4, 0.8};
    const auto pi = Propensity::constant(0.3);
    WeightTrace w(p, pi, c, z, 1, 1.7);
    for (double t : {0.2, 0.5, 0.51, 1.3, 2.5}) {
        EXPECT_NEAR(w.at(t),
                    treatment_censoring_weight(pi, c, p, t, 1) * alpha_weight(z, p, t, 1.7), 1e-12)
            << t;
    }
    EXPECT_GE(w.max(), w.at(2.5));
}
