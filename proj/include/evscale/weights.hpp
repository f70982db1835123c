#pragma once

#include <optional>
#include <vector>

#include "evscale/event_model.hpp"

namespace evscale {

/// delta_a(A0) / (pi(A0|L0) * exp(-Lambda^c(t-))). Without an arm the
/// treatment factor is 1.
[[nodiscard]] double treatment_censoring_weight(const std::optional<Propensity>& pi_hat,
                                                const IntensityModel& censor_model, const Path& path, double t,
                                                std::optional<int> arm);

/// alpha^{N^z(t-)} exp(-(alpha - 1) Lambda^z(t)) with the observed-law z model.
[[nodiscard]] double alpha_weight(const IntensityModel& z_model, const Path& path, double t, double alpha);

/// The product weight w^a_t w^alpha_t along one path. On each segment the
/// weight is base * exp(Lambda^c(a,t) - (alpha - 1) Lambda^z(a,t)).
class WeightTrace {
public:
    WeightTrace(const Path& path, const std::optional<Propensity>& pi_hat, const IntensityModel& censor_model,
                const IntensityModel& z_model, std::optional<int> arm, double alpha);

    /// Weight at t (left limit in the path state) for t inside segment `seg`.
    [[nodiscard]] double at(std::size_t seg, double t) const;
    [[nodiscard]] double at(double t) const;
    [[nodiscard]] bool identically_zero() const { return zero_; }
    /// Largest value over [0, end of follow-up].
    [[nodiscard]] double max() const;
    [[nodiscard]] const std::vector<Segment>& segments() const { return segments_; }

private:
    std::vector<Segment> segments_;
    std::vector<double> base_;
    IntensityModel censor_;
    IntensityModel z_;
    std::optional<int> a0_;
    double l0_{0.0};
    double alpha_{1.0};
    bool zero_{false};
};

}  // namespace evscale
