#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <utility>

namespace evscale {

/// Adaptive Simpson for a vector-valued integrand f(t) -> std::array<double, N>,
/// using the first `used` components for the error test. Accepts a panel when
/// max_k |S2 - S1| <= 15 tol, with Richardson correction. Panels are also
/// accepted once the difference is at round-off of the panel, or once the
/// evaluation budget is spent.
template <std::size_t N, class F>
class AdaptiveSimpson {
public:
    using Vec = std::array<double, N>;

    AdaptiveSimpson(F f, std::size_t used, double tol, int max_depth = 40, std::size_t max_evals = 200000)
        : f_(std::move(f)), used_(used), tol_(tol), max_depth_(max_depth), max_evals_(max_evals) {}

    Vec integrate(double a, double b) {
        Vec out{};
        if (!(b > a)) return out;
        evals_ = 3;
        const Vec fa = f_(a);
        const Vec fb = f_(b);
        const double m = 0.5 * (a + b);
        const Vec fm = f_(m);
        const Vec whole = simpson(a, b, fa, fm, fb);
        return recurse(a, b, fa, fm, fb, whole, tol_, max_depth_);
    }

private:
    Vec simpson(double a, double b, const Vec& fa, const Vec& fm, const Vec& fb) const {
        Vec s{};
        const double w = (b - a) / 6.0;
        for (std::size_t k = 0; k < used_; ++k) s[k] = w * (fa[k] + 4.0 * fm[k] + fb[k]);
        return s;
    }

    Vec recurse(double a, double b, const Vec& fa, const Vec& fm, const Vec& fb, const Vec& whole, double tol,
                int depth) {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m);
        const double rm = 0.5 * (m + b);
        const Vec flm = f_(lm);
        const Vec frm = f_(rm);
        evals_ += 2;
        const Vec left = simpson(a, m, fa, flm, fm);
        const Vec right = simpson(m, b, fm, frm, fb);
        double err = 0.0;
        double scale = 0.0;
        Vec sum{};
        for (std::size_t k = 0; k < used_; ++k) {
            sum[k] = left[k] + right[k];
            err = std::max(err, std::abs(sum[k] - whole[k]));
            scale = std::max(scale, (b - a) * std::max({std::abs(fa[k]), std::abs(fm[k]), std::abs(fb[k]),
                                                        std::abs(flm[k]), std::abs(frm[k])}));
        }
        const bool roundoff = err <= 1e-13 * scale;
        if (depth <= 0 || err <= 15.0 * tol || roundoff || evals_ >= max_evals_ || !std::isfinite(err)) {
            for (std::size_t k = 0; k < used_; ++k) sum[k] += (sum[k] - whole[k]) / 15.0;
            return sum;
        }
        const Vec l = recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
        const Vec r = recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
        for (std::size_t k = 0; k < used_; ++k) sum[k] = l[k] + r[k];
        return sum;
    }

    F f_;
    std::size_t used_;
    double tol_;
    int max_depth_;
    std::size_t max_evals_;
    std::size_t evals_{0};
};

template <std::size_t N, class F>
std::array<double, N> adaptive_simpson(F f, std::size_t used, double a, double b, double tol) {
    return AdaptiveSimpson<N, F>(std::move(f), used, tol).integrate(a, b);
}

}  // namespace evscale
