#pragma once

#include <span>
#include <vector>

namespace alignsim {

struct TransportResult {
    double cost = 0.0;
    int iterations = 0;
    // max(0, -min reduced cost) * total supply at termination: an upper bound
    // on the duality gap of the returned plan.
    double dual_gap = 0.0;
    std::vector<double> flow;  // n x m row-major optimal plan
};

// Exact solver for the balanced transportation problem
//   min sum_ij cost[i*m+j] f_ij,  f >= 0,
//   sum_j f_ij = supply[i], sum_i f_ij = demand[j],
// with sum supply == sum demand (checked to 1e-9 relative). Deterministic
// network simplex: northwest-corner start, most-negative entering arc with
// index tie-breaks, smallest-index leaving arc. Sizes here are small (the
// callers cap n*m), so the dense entering scan is fine.
TransportResult solve_transport(std::span<const double> supply,
                                std::span<const double> demand,
                                std::span<const double> cost);

}  // namespace alignsim
