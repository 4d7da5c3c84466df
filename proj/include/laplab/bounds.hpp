#ifndef LAPLAB_BOUNDS_HPP
#define LAPLAB_BOUNDS_HPP

#include <cstdint>
#include <string>

#include "laplab/data.hpp"
#include "laplab/network.hpp"
#include "laplab/perturb.hpp"

namespace laplab {

struct BoundReport {
    double empirical_loss = 0.0;
    double worst_case_gap = 0.0;
    double complexity_term = 0.0;
    double total_bound = 0.0;
    std::size_t n = 0;
    double delta = 0.0;
    double kl_proxy = 0.0;
    // Informational: the same quantities measured with cross-entropy.
    double empirical_ce = 0.0;
    double worst_case_gap_ce = 0.0;

    std::string to_json() const;
};

// sum_l 1 / (2 lambda_l^2). Throws InvalidArgument naming the first ordinal
// whose lambda is zero.
double kl_proxy(const PerturbSchedule& schedule);

// complexity = 4 sqrt((kl_proxy + ln(2n / delta)) / n);
// total = emp_loss + worst_gap + complexity.
BoundReport lap_bound(double emp_loss, double worst_gap, const PerturbSchedule& schedule, std::size_t n, double delta);

enum class GapLoss { ZeroOne, CrossEntropy };

// Mean loss of `net` over `data`.
double dataset_loss(const Network& net, const Dataset& data, GapLoss loss);

// Approximates max_nu loss(w + nu) - loss(w) by the best of the
// gradient-direction nu from compute_nu and (tries - 1) random directions with
// the same per-layer norms. Never negative.
double measure_worst_gap(const Network& net, const Dataset& data, const PerturbSchedule& schedule, std::size_t tries,
                         std::uint64_t seed, GapLoss loss = GapLoss::ZeroOne);

}  // namespace laplab

#endif  // LAPLAB_BOUNDS_HPP
