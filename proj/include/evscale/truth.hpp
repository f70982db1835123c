#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "evscale/event_model.hpp"
#include "evscale/markov_engine.hpp"

namespace evscale {

struct CurvePoint {
    double alpha{1.0};
    double psi1{0.0};
    double psi_z{0.0};
    double mc_se_1{0.0};
    double mc_se_z{0.0};
    std::size_t reps{0};
};

/// Per-replicate counts N^1(tau), N^z(tau) of intervened paths drawn with
/// the substreams (seed, 0..reps-1).
struct McSample {
    std::vector<double> n1;
    std::vector<double> nz;
};

[[nodiscard]] McSample mc_sample(const ValidatedScenario& scenario, const InterventionSpec& intervention,
                                 std::size_t reps, std::uint64_t seed);

struct McEstimate {
    double value{0.0};
    double se{0.0};
    std::size_t reps{0};
};

/// Sample mean of N^x(tau) under the intervention with binomial standard error.
[[nodiscard]] McEstimate mc_psi(const ValidatedScenario& scenario, const InterventionSpec& intervention, Target x,
                                std::size_t reps, std::uint64_t seed);

[[nodiscard]] CurvePoint mc_point(const ValidatedScenario& scenario, const InterventionSpec& intervention,
                                  std::size_t reps, std::uint64_t seed);

/// One point per alpha. Every alpha reuses the same subject substreams
/// (common random numbers), so differences along the curve are smooth.
[[nodiscard]] std::vector<CurvePoint> mc_curve(const ValidatedScenario& scenario, std::optional<int> arm,
                                               const std::vector<double>& alphas, std::size_t reps,
                                               std::uint64_t seed);

enum class ContrastKind {
    /// Psi_1^{1} - Psi_1^{alpha} without fixing an arm
    overall,
    /// Psi_1^{a,1} - Psi_1^{a,alpha}
    fixed_arm,
    /// Psi_1^{1,alpha} - Psi_1^{0,alpha}
    between_arm,
    /// Psi_1^{1,1} - Psi_1^{0,alpha} split into the z-modification part and the arm part
    total_joint,
};

struct ContrastSpec {
    ContrastKind kind{ContrastKind::overall};
    std::optional<int> arm{};
    double alpha{1.0};
};

struct Contrast {
    double total{0.0};
    double total_se{0.0};
    /// total_joint only: indirect = Psi_1^{1,1} - Psi_1^{1,alpha}, direct = Psi_1^{1,alpha} - Psi_1^{0,alpha}
    std::optional<double> indirect;
    std::optional<double> indirect_se;
    std::optional<double> direct;
    std::optional<double> direct_se;
};

[[nodiscard]] Contrast mc_contrast(const ValidatedScenario& scenario, const ContrastSpec& spec, std::size_t reps,
                                   std::uint64_t seed);

}  // namespace evscale
