#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "evscale/event_model.hpp"
#include "evscale/rng.hpp"

namespace evscale {

struct Cohort {
    std::vector<Path> paths;
    std::uint64_t seed{0};
    std::uint64_t first_index{0};
    ScenarioConfig scenario{};
    std::optional<InterventionSpec> intervention{};
};

/// c * (t^nu - s^nu) contribution of one active mark to the total hazard.
struct HazardTerm {
    double c{0.0};
    double nu{1.0};
};

[[nodiscard]] double total_cumulative_hazard(const std::vector<HazardTerm>& terms, double s, double t);

/// Solves sum_m c_m (t^nu_m - s^nu_m) = target for t > s.
[[nodiscard]] double invert_total_hazard(const std::vector<HazardTerm>& terms, double s, double target);

/// Draws one path from P (no intervention) or from the intervened law.
[[nodiscard]] Path sample_path(const ValidatedScenario& scenario, const std::optional<InterventionSpec>& intervention,
                               SubjectStream& rng);

/// Subject i of the cohort uses the stream (seed, first_index + i), so runs
/// split over index ranges concatenate to the single run.
[[nodiscard]] Cohort sample_cohort(const ValidatedScenario& scenario,
                                   const std::optional<InterventionSpec>& intervention, std::size_t n,
                                   std::uint64_t seed, std::uint64_t first_index = 0);

/// One row per jump (id,l0,a0,time,mark); paths reaching tau without a
/// terminal event get a final "end" row at tau.
void write_cohort_csv(std::ostream& out, const std::vector<Path>& paths);

struct CsvImport {
    std::vector<Path> paths;
    std::vector<std::string> warnings;
};

/// Reads the CSV written by write_cohort_csv. When tau is not given it is
/// taken from the largest "end" row (or the largest event time).
[[nodiscard]] CsvImport read_cohort_csv(std::istream& in, std::optional<double> tau = std::nullopt);

[[nodiscard]] std::string format_double(double v);

}  // namespace evscale
