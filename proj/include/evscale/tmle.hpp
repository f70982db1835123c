#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "evscale/event_model.hpp"
#include "evscale/markov_engine.hpp"
#include "evscale/nuisance.hpp"

namespace evscale {

/// Per-subject efficient influence curve split by mark family.
struct EICComponents {
    std::vector<double> outcomes;  // marks 1..J
    double ell{0.0};
    double z{0.0};
    double baseline{0.0};
    double total{0.0};
};

/// Observed-jump and compensator parts of the weighted martingale terms,
/// indexed like ModelSet::event_marks().
struct MartingaleParts {
    std::vector<double> jump;
    std::vector<double> compensator;
    double g0{0.0};
    double max_weight{0.0};
    bool truncated{false};
};

struct EicOptions {
    double quad_tolerance{1e-8};
    /// Weights above this value are capped; 0 disables truncation.
    double weight_cap{0.0};
};

[[nodiscard]] MartingaleParts martingale_parts(const Path& path, const ModelSet& models,
                                               const std::optional<Propensity>& propensity, const ValueTable& table,
                                               const InterventionSpec& intervention, Target x,
                                               const EicOptions& options = {});

[[nodiscard]] EICComponents eic_value(const Path& path, const ModelSet& models,
                                      const std::optional<Propensity>& propensity, const ValueTable& table,
                                      const InterventionSpec& intervention, Target x, double psi_ref,
                                      const EicOptions& options = {});

struct WeightDiagnostics {
    double max_weight{0.0};
    double mean_max_weight{0.0};
    std::size_t truncated_subjects{0};
};

struct EstimateReport {
    std::string target;
    InterventionSpec intervention{};
    std::size_t n{0};
    double psi_hat{0.0};
    double se{0.0};
    double ci_lo{0.0};
    double ci_hi{0.0};
    double psi_initial{0.0};
    double eic_residual{0.0};
    double stopping_threshold{0.0};
    int iterations{0};
    bool converged{false};
    std::vector<std::string> skipped_components;
    WeightDiagnostics weights{};
    /// Per-subject EIC at the targeted fit, psi_ref = psi_hat.
    std::vector<double> eic;
};

struct TmleOptions {
    EngineOptions engine{200, Interpolation::linear, 1e-4};
    EicOptions eic{};
    int max_sweeps{50};
    /// Replaces s_n as the stopping threshold when set.
    std::optional<double> residual_tolerance{};
    /// Keep the initial value tables for every sweep (one-step experiments).
    bool frozen_tables{false};
};

struct TmleResult {
    ModelSet targeted;
    EstimateReport report;
};

/// Iterative intercept-submodel targeting. Throws NonConvergence when the
/// stopping rule is not met within max_sweeps.
[[nodiscard]] TmleResult target(const std::vector<Path>& paths, const NuisanceSet& nuisances,
                                const InterventionSpec& intervention, Target x, double tau,
                                const TmleOptions& options = {});

struct EstimateConfig {
    NuisanceOptions nuisance{};
    TmleOptions tmle{};
};

[[nodiscard]] EstimateReport estimate_alpha_fixed(const std::vector<Path>& paths, const InterventionSpec& intervention,
                                                  Target x, double tau, const EstimateConfig& config = {});

}  // namespace evscale
