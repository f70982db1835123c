#include "evscale/weights.hpp"

#include <algorithm>
#include <cmath>

#include "evscale/errors.hpp"

namespace evscale {

namespace {

double arm_factor(const std::optional<Propensity>& pi_hat, const Path& path, std::optional<int> arm) {
    if (!arm) return 1.0;
    if (!path.a0 || *path.a0 != *arm) return 0.0;
    const double p = pi_hat ? pi_hat->prob(*arm, path.l0) : 1.0;
    if (!(p > 0.0)) throw PositivityError("estimated P(A0 = " + std::to_string(*arm) + " | L0) is zero");
    return 1.0 / p;
}

}  // namespace

double treatment_censoring_weight(const std::optional<Propensity>& pi_hat, const IntensityModel& censor_model,
                                  const Path& path, double t, std::optional<int> arm) {
    const double f = arm_factor(pi_hat, path, arm);
    if (f == 0.0) return 0.0;
    return f * std::exp(path_cumulative_hazard(censor_model, Mark::censor(), path, t));
}

double alpha_weight(const IntensityModel& z_model, const Path& path, double t, double alpha) {
    if (alpha == 1.0) return 1.0;
    const int nz = path.state_before(t).n_z;
    const double lz = path_cumulative_hazard(z_model, Mark::z(), path, t);
    if (alpha == 0.0) return nz == 1 ? 0.0 : std::exp(lz);
    return std::pow(alpha, nz) * std::exp(-(alpha - 1.0) * lz);
}

WeightTrace::WeightTrace(const Path& path, const std::optional<Propensity>& pi_hat, const IntensityModel& censor_model,
                         const IntensityModel& z_model, std::optional<int> arm, double alpha)
    : segments_(evscale::segments(path)), censor_(censor_model), z_(z_model), a0_(path.a0), l0_(path.l0),
      alpha_(alpha) {
    const double f = arm_factor(pi_hat, path, arm);
    zero_ = f == 0.0;
    base_.resize(segments_.size());
    double lc = 0.0;
    double lz = 0.0;
    for (std::size_t k = 0; k < segments_.size(); ++k) {
        const auto& seg = segments_[k];
        double w = f * std::exp(lc);
        if (alpha != 1.0) w *= std::pow(alpha, seg.state.n_z) * std::exp(-(alpha - 1.0) * lz);
        base_[k] = w;
        lc += cumulative_hazard(censor_, Mark::censor(), seg.start, seg.end, seg.state, a0_, l0_);
        lz += cumulative_hazard(z_, Mark::z(), seg.start, seg.end, seg.state, a0_, l0_);
    }
}

double WeightTrace::at(std::size_t seg, double t) const {
    const auto& s = segments_[seg];
    if (base_[seg] == 0.0) return 0.0;
    double e = cumulative_hazard(censor_, Mark::censor(), s.start, t, s.state, a0_, l0_);
    if (alpha_ != 1.0) e -= (alpha_ - 1.0) * cumulative_hazard(z_, Mark::z(), s.start, t, s.state, a0_, l0_);
    return base_[seg] * std::exp(e);
}

double WeightTrace::at(double t) const {
    for (std::size_t k = 0; k < segments_.size(); ++k) {
        if (t <= segments_[k].end) return at(k, std::max(t, segments_[k].start));
    }
    return segments_.empty() ? 0.0 : at(segments_.size() - 1, segments_.back().end);
}

double WeightTrace::max() const {
    double m = 0.0;
    for (std::size_t k = 0; k < segments_.size(); ++k) {
        m = std::max({m, at(k, segments_[k].start), at(k, segments_[k].end)});
    }
    return m;
}

}  // namespace evscale
