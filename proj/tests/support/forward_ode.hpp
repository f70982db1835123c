#pragma once

// Forward Kolmogorov equations of the intervened four-state chain, integrated
// with classical RK4. Used as an oracle independent of the backward solver.

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "evscale/event_model.hpp"

namespace evscale::test_support {

struct ForwardResult {
    double psi1{0.0};
    double psi_z{0.0};
};

inline double weibull_rate(const IntensityModel& m, double t, int n_ell, int n_z, int a0, double l0) {
    if (m.eta == 0.0) return 0.0;
    const double lp = m.beta_a0 * a0 + m.beta_l0 * l0 + m.beta_z * n_z + m.beta_ell * n_ell;
    return m.eta * m.nu * std::pow(t, m.nu - 1.0) * std::exp(lp);
}

/// Expected N^1(tau) and N^z(tau) for one (a0, l0) with the z intensity scaled by alpha.
inline ForwardResult forward_counts(const ModelSet& models, double alpha, double tau, int a0, double l0,
                                    int steps = 20000) {
    // y[0..3]: occupation of 00, ell, z, both; y[4] = E N^1; y[5] = E N^z.
    // Integrated in u with t = u^p, p = 1 / min(nu, 1), so shapes below one stay bounded at the origin.
    double nu_min = 1.0;
    for (const auto& o : models.outcomes) nu_min = std::min(nu_min, o.nu);
    nu_min = std::min({nu_min, models.ell.nu, models.z.nu});
    const double p = 1.0 / nu_min;
    using Vec = std::array<double, 6>;
    auto deriv = [&](double u, const Vec& y) {
        Vec d{};
        const double tt = std::pow(u, p);
        const double jac = p == 1.0 ? 1.0 : p * std::pow(u, p - 1.0);
        for (int s = 0; s < 4; ++s) {
            const int n_ell = s & 1;
            const int n_z = (s >> 1) & 1;
            double out = 0.0;
            for (const auto& o : models.outcomes) out += weibull_rate(o, tt, n_ell, n_z, a0, l0);
            d[4] += weibull_rate(models.outcomes[0], tt, n_ell, n_z, a0, l0) * y[s];
            if (n_ell == 0) {
                const double r = weibull_rate(models.ell, tt, n_ell, n_z, a0, l0);
                out += r;
                d[s + 1] += r * y[s];
            }
            if (n_z == 0) {
                const double r = alpha * weibull_rate(models.z, tt, n_ell, n_z, a0, l0);
                out += r;
                d[s + 2] += r * y[s];
                d[5] += r * y[s];
            }
            d[s] -= out * y[s];
        }
        for (double& v : d) v *= jac;
        return d;
    };
    // rates times the Jacobian are finite at u = 0 except for the removable 0 * inf
    auto safe = [&](double u, const Vec& y) { return deriv(std::max(u, 1e-12), y); };
    Vec y{1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    const double h = std::pow(tau, 1.0 / p) / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = k * h;
        const Vec k1 = safe(t, y);
        Vec tmp;
        for (int i = 0; i < 6; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        const Vec k2 = safe(t + 0.5 * h, tmp);
        for (int i = 0; i < 6; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        const Vec k3 = safe(t + 0.5 * h, tmp);
        for (int i = 0; i < 6; ++i) tmp[i] = y[i] + h * k3[i];
        const Vec k4 = safe(t + h, tmp);
        for (int i = 0; i < 6; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return {y[4], y[5]};
}

/// Averages forward_counts over the scenario's L0 law and, without a fixed
/// arm, over the propensity.
inline ForwardResult forward_psi(const ScenarioConfig& sc, std::optional<int> arm, double alpha, int steps = 20000,
                                 std::size_t l0_nodes = 100) {
    bool uses_l0 = sc.models.ell.beta_l0 != 0.0 || sc.models.z.beta_l0 != 0.0;
    for (const auto& o : sc.models.outcomes) uses_l0 = uses_l0 || o.beta_l0 != 0.0;
    if (sc.propensity && sc.propensity->form == Propensity::Form::logistic && sc.propensity->slope != 0.0 && !arm) {
        uses_l0 = true;
    }
    const std::vector<double> nodes = uses_l0 ? sc.l0.nodes(l0_nodes) : std::vector<double>{0.5};
    ForwardResult acc;
    for (double l0 : nodes) {
        std::vector<std::pair<int, double>> arms;
        if (arm) arms.push_back({*arm, 1.0});
        else if (sc.propensity) arms = {{0, sc.propensity->prob(0, l0)}, {1, sc.propensity->prob(1, l0)}};
        else arms.push_back({0, 1.0});
        for (const auto& [a, w] : arms) {
            const auto r = forward_counts(sc.models, alpha, sc.tau, a, l0, steps);
            acc.psi1 += w * r.psi1;
            acc.psi_z += w * r.psi_z;
        }
    }
    acc.psi1 /= static_cast<double>(nodes.size());
    acc.psi_z /= static_cast<double>(nodes.size());
    return acc;
}

}  // namespace evscale::test_support
