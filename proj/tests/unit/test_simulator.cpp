#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "../support/forward_ode.hpp"
#include "evscale/errors.hpp"
#include "evscale/simulator.hpp"
#include "test_helpers.hpp"

using namespace evscale;
using evscale::test_support::expect_same_path;

TEST(HazardInversion, EqualShapesClosedForm) {
    const std::vector<HazardTerm> terms{{0.5, 2.0}, {0.25, 2.0}};
    const double t = invert_total_hazard(terms, 0.5, 1.2);
    EXPECT_NEAR(total_cumulative_hazard(terms, 0.5, t), 1.2, 1e-12);
}

TEST(HazardInversion, MixedShapes) {
    const std::vector<HazardTerm> terms{{0.3, 0.6}, {0.2, 1.8}, {0.1, 1.0}};
    for (double target : {1e-6, 0.01, 0.7, 5.0, 40.0}) {
        const double t = invert_total_hazard(terms, 0.2, target);
        EXPECT_NEAR(total_cumulative_hazard(terms, 0.2, t), target, 1e-10 * std::max(1.0, target));
    }
}

TEST(Simulate, ZeroAlphaNeverProducesZ) {
    const auto sc = build_scenario(preset_config("example1"));
    const auto cohort = sample_cohort(sc, InterventionSpec{std::nullopt, 0.0}, 5000, 3);
    for (const auto& p : cohort.paths) {
        EXPECT_EQ(p.count(Mark::z()), 0);
        EXPECT_EQ(p.count(Mark::censor()), 0);
    }
}

TEST(Simulate, ExponentialSurvival) {
    const double tau = 1.3;
    const auto sc = build_scenario(test_support::single_outcome(1.0, tau));
    const std::size_t reps = 100000;
    const auto cohort = sample_cohort(sc, std::nullopt, reps, 11);
    double events = 0.0;
    for (const auto& p : cohort.paths) events += p.count(Mark::outcome_j(1));
    const double phat = events / reps;
    const double p = 1.0 - std::exp(-tau);
    EXPECT_NEAR(phat, p, 3.0 * std::sqrt(p * (1.0 - p) / reps));
}

TEST(Simulate, Example1ZProbabilityMatchesForwardEquations) {
    const auto config = preset_config("example1");
    const auto sc = build_scenario(config);
    const auto oracle = test_support::forward_psi(config, std::nullopt, 1.0);
    const std::size_t reps = 100000;
    const auto cohort = sample_cohort(sc, InterventionSpec{std::nullopt, 1.0}, reps, 5);
    double nz = 0.0;
    for (const auto& p : cohort.paths) nz += p.count(Mark::z());
    const double phat = nz / reps;
    const double se = std::sqrt(oracle.psi_z * (1.0 - oracle.psi_z) / reps);
    EXPECT_NEAR(phat, oracle.psi_z, 3.0 * se);
}

TEST(Simulate, EmptyCohortRejected) {
    const auto sc = build_scenario(preset_config("example1"));
    EXPECT_THROW((void)sample_cohort(sc, std::nullopt, 0, 1), std::invalid_argument);
}

TEST(Simulate, SameSeedIsBitIdentical) {
    const auto sc = build_scenario(preset_config("example3"));
    const auto a = sample_cohort(sc, std::nullopt, 500, 42);
    const auto b = sample_cohort(sc, std::nullopt, 500, 42);
    for (std::size_t i = 0; i < a.paths.size(); ++i) expect_same_path(a.paths[i], b.paths[i]);
}

TEST(Simulate, SubstreamsConcatenate) {
    const auto sc = build_scenario(preset_config("example2"));
    const auto whole = sample_cohort(sc, std::nullopt, 100, 9);
    const auto first = sample_cohort(sc, std::nullopt, 50, 9, 0);
    const auto second = sample_cohort(sc, std::nullopt, 50, 9, 50);
    for (std::size_t i = 0; i < 50; ++i) {
        expect_same_path(whole.paths[i], first.paths[i]);
        expect_same_path(whole.paths[50 + i], second.paths[i]);
    }
}

TEST(Simulate, PathsAreValid) {
    for (const auto& name : preset_names()) {
        const auto sc = build_scenario(preset_config(name));
        for (const auto& p : sample_cohort(sc, std::nullopt, 2000, 1).paths) EXPECT_NO_THROW(p.validate());
    }
}

TEST(Simulate, InterventionFixesArm) {
    const auto sc = build_scenario(preset_config("example2"));
    for (const auto& p : sample_cohort(sc, InterventionSpec{0, 1.0}, 300, 1).paths) EXPECT_EQ(p.a0, 0);
}

TEST(CohortCsv, RoundTrip) {
    const auto sc = build_scenario(preset_config("example3"));
    const auto cohort = sample_cohort(sc, std::nullopt, 300, 17);
    std::stringstream ss;
    write_cohort_csv(ss, cohort.paths);
    const auto back = read_cohort_csv(ss);
    EXPECT_TRUE(back.warnings.empty());
    ASSERT_EQ(back.paths.size(), cohort.paths.size());
    for (std::size_t i = 0; i < back.paths.size(); ++i) expect_same_path(back.paths[i], cohort.paths[i]);
}

TEST(CohortCsv, Errors) {
    std::stringstream bad_header("a,b,c\n");
    EXPECT_THROW((void)read_cohort_csv(bad_header), ConfigError);
    std::stringstream bad_mark("id,l0,a0,time,mark\n1,0.5,NA,1.0,death\n");
    EXPECT_THROW((void)read_cohort_csv(bad_mark), ConfigError);
}

TEST(CohortCsv, TiedTimesArePerturbed) {
    std::stringstream in("id,l0,a0,time,mark\n1,0.5,NA,1.0,ell\n1,0.5,NA,1.0,z\n1,0.5,NA,3,end\n");
    const auto r = read_cohort_csv(in);
    ASSERT_EQ(r.paths.size(), 1u);
    EXPECT_FALSE(r.warnings.empty());
    EXPECT_GT(r.paths[0].jumps[1].time, r.paths[0].jumps[0].time);
}
