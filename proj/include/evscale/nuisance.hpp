#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evscale/event_model.hpp"

namespace evscale {

/// Which covariates enter a Weibull-Cox fit. Dropping a covariate that the
/// data-generating model uses gives a deliberately misspecified fit.
struct CovariateSpec {
    bool a0{true};
    bool l0{true};
    bool n_z{true};
    bool n_ell{true};
    /// Fix nu = 1 (exponential baseline).
    bool fix_shape{false};

    [[nodiscard]] bool drops_any() const { return !a0 || !l0 || !n_z || !n_ell || fix_shape; }
};

struct FitOptions {
    int max_iter{100};
    /// Per event: the score norm must fall below gradient_tolerance * max(1, events).
    double gradient_tolerance{1e-8};
};

struct IntensityFit {
    IntensityModel model{};
    double loglik{0.0};
    double loglik_init{0.0};
    double gradient_norm{0.0};
    int iterations{0};
    int events{0};
    /// Covariates removed because they do not vary over the at-risk data.
    std::vector<std::string> dropped;
    std::vector<std::string> warnings;
};

/// Parameter vector (log eta, log nu, beta_a0, beta_l0, beta_z, beta_ell).
struct LogLikelihood {
    double value{0.0};
    std::vector<double> gradient;
    std::vector<std::vector<double>> hessian;
};

/// Exact parametric log-likelihood of one mark's intensity and its
/// derivatives with respect to the full parameter vector.
[[nodiscard]] LogLikelihood intensity_loglik(const std::vector<Path>& paths, const Mark& mark,
                                             const std::vector<double>& theta, bool derivatives = true);

[[nodiscard]] IntensityFit fit_intensity(const std::vector<Path>& paths, const Mark& mark,
                                         const CovariateSpec& spec = {}, const FitOptions& options = {});

enum class PropensityForm { constant, logistic };

/// Empty when the cohort carries no A0. Throws ConfigError for a single arm.
[[nodiscard]] std::optional<Propensity> fit_propensity(const std::vector<Path>& paths,
                                                       PropensityForm form = PropensityForm::constant);

struct NuisanceOptions {
    /// Per-mark covariate choices keyed by mark name ("outcome1", "ell", "z", "censor").
    std::map<std::string, CovariateSpec> covariates;
    PropensityForm propensity{PropensityForm::constant};
    /// Apply fix_shape to every mark.
    bool fix_shape{false};
    /// Number of outcome marks; 0 means the largest index seen in the data (at least 1).
    int num_outcomes{0};
    FitOptions fit{};
};

struct NuisanceSet {
    ModelSet models{};
    std::optional<Propensity> propensity{};
    /// Components fitted with user-requested covariate removal.
    std::map<std::string, bool> misspecified;
    std::map<std::string, IntensityFit> fits;
    std::vector<std::string> warnings;
};

[[nodiscard]] NuisanceSet fit_nuisance(const std::vector<Path>& paths, const NuisanceOptions& options = {});

}  // namespace evscale
