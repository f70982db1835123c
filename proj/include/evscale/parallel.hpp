#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace evscale {

/// Worker count used by parallel_for. Defaults to EVSCALE_THREADS when set,
/// otherwise the hardware concurrency.
[[nodiscard]] int num_threads();
void set_num_threads(int n);

/// Calls fn(i) for i in [0, n). Each index is visited exactly once; callers
/// write results to slot i so output never depends on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Pairwise (cascade) summation.
[[nodiscard]] double pairwise_sum(const double* x, std::size_t n);
[[nodiscard]] inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }
[[nodiscard]] inline double mean(const std::vector<double>& x) {
    return x.empty() ? 0.0 : pairwise_sum(x) / static_cast<double>(x.size());
}

}  // namespace evscale
