#include "evscale/truth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "evscale/errors.hpp"
#include "evscale/parallel.hpp"
#include "evscale/simulator.hpp"

namespace evscale {

McSample mc_sample(const ValidatedScenario& scenario, const InterventionSpec& intervention, std::size_t reps,
                   std::uint64_t seed) {
    if (reps == 0) throw std::invalid_argument("truth: reps must be at least 1");
    scenario.check_intervention(intervention);
    McSample s;
    s.n1.resize(reps);
    s.nz.resize(reps);
    const std::optional<InterventionSpec> iv = intervention;
    parallel_for(reps, [&](std::size_t i) {
        SubjectStream rng(seed, i);
        const Path p = sample_path(scenario, iv, rng);
        s.n1[i] = p.count(Mark::outcome_j(1));
        s.nz[i] = p.count(Mark::z());
    });
    return s;
}

namespace {

McEstimate binomial(const std::vector<double>& v) {
    const double p = mean(v);
    const double n = static_cast<double>(v.size());
    return {p, std::sqrt(std::max(0.0, p * (1.0 - p)) / n), v.size()};
}

double paired_se(const std::vector<double>& a, const std::vector<double>& b, double sign_b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] + sign_b * b[i];
    const double m = mean(d);
    for (auto& v : d) v = (v - m) * (v - m);
    const double n = static_cast<double>(a.size());
    return std::sqrt(pairwise_sum(d) / std::max(1.0, n - 1.0) / n);
}

}  // namespace

McEstimate mc_psi(const ValidatedScenario& scenario, const InterventionSpec& intervention, Target x, std::size_t reps,
                  std::uint64_t seed) {
    const auto s = mc_sample(scenario, intervention, reps, seed);
    return binomial(x == Target::outcome1 ? s.n1 : s.nz);
}

CurvePoint mc_point(const ValidatedScenario& scenario, const InterventionSpec& intervention, std::size_t reps,
                    std::uint64_t seed) {
    const auto s = mc_sample(scenario, intervention, reps, seed);
    const auto e1 = binomial(s.n1);
    const auto ez = binomial(s.nz);
    return {intervention.alpha, e1.value, ez.value, e1.se, ez.se, reps};
}

std::vector<CurvePoint> mc_curve(const ValidatedScenario& scenario, std::optional<int> arm,
                                 const std::vector<double>& alphas, std::size_t reps, std::uint64_t seed) {
    if (alphas.empty()) throw std::invalid_argument("truth: alpha grid is empty");
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        if (!(alphas[k] >= 0.0)) throw std::invalid_argument("truth: alpha grid must be nonnegative");
        if (k > 0 && alphas[k] < alphas[k - 1]) throw std::invalid_argument("truth: alpha grid must be sorted");
    }
    std::vector<CurvePoint> out;
    out.reserve(alphas.size());
    for (double a : alphas) out.push_back(mc_point(scenario, InterventionSpec{arm, a}, reps, seed));
    return out;
}

Contrast mc_contrast(const ValidatedScenario& scenario, const ContrastSpec& spec, std::size_t reps,
                     std::uint64_t seed) {
    const bool needs_arm = spec.kind != ContrastKind::overall;
    if (needs_arm && !scenario.has_arm()) {
        throw ConfigError("truth", "contrast references an arm but the scenario has no baseline treatment");
    }
    if (spec.kind == ContrastKind::fixed_arm && !spec.arm) throw ConfigError("truth", "fixed_arm contrast needs an arm");
    auto n1 = [&](std::optional<int> arm, double alpha) {
        return mc_sample(scenario, InterventionSpec{arm, alpha}, reps, seed).n1;
    };
    Contrast c;
    switch (spec.kind) {
        case ContrastKind::overall:
        case ContrastKind::fixed_arm: {
            const auto arm = spec.kind == ContrastKind::overall ? std::optional<int>{} : spec.arm;
            const auto a = n1(arm, 1.0);
            const auto b = n1(arm, spec.alpha);
            c.total = mean(a) - mean(b);
            c.total_se = paired_se(a, b, -1.0);
            break;
        }
        case ContrastKind::between_arm: {
            const auto a = n1(1, spec.alpha);
            const auto b = n1(0, spec.alpha);
            c.total = mean(a) - mean(b);
            c.total_se = paired_se(a, b, -1.0);
            break;
        }
        case ContrastKind::total_joint: {
            const auto p11 = n1(1, 1.0);
            const auto p1a = n1(1, spec.alpha);
            const auto p0a = n1(0, spec.alpha);
            const double m11 = mean(p11);
            const double m1a = mean(p1a);
            const double m0a = mean(p0a);
            c.indirect = m11 - m1a;
            c.direct = m1a - m0a;
            c.total = *c.indirect + *c.direct;
            c.indirect_se = paired_se(p11, p1a, -1.0);
            c.direct_se = paired_se(p1a, p0a, -1.0);
            c.total_se = paired_se(p11, p0a, -1.0);
            break;
        }
    }
    return c;
}

}  // namespace evscale
