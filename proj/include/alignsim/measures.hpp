#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alignsim/common.hpp"

namespace alignsim {

// Finite nonnegative atomic measure sum_i w_i delta_{x_i} in R^dim.
// points is row-major n x dim; weights w_i >= 0.
struct AtomicMeasure {
    int dim = 1;
    std::vector<double> points;
    std::vector<double> weights;

    int size() const { return static_cast<int>(weights.size()); }
    std::span<const double> point(int i) const {
        return {points.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
    double total_mass() const;
};

// Merges atoms whose positions coincide within merge_tol (Euclidean), summing
// weights; the surviving position is the first occurrence, so the result is
// deterministic under input order. Zero-weight atoms are kept (they carry
// support information for signed differences).
AtomicMeasure canonicalize(const AtomicMeasure& mu, double merge_tol = 1e-12);

bool is_probability(const AtomicMeasure& mu, double tol = 1e-10);

// sum_i w_i |x_i|^order for order in {1, 2}.
double moment(const AtomicMeasure& mu, int order);
// sum_i w_i |x_i| |v_i| with a per-atom vector field v (n x dim): the first
// moment of the momentum magnitude. order must be 1.
double moment(const AtomicMeasure& mu, int order, std::span<const double> field);

// Total variation norm ||mu - nu||_TV = sum over the merged canonical support
// of |mu_i - nu_i|. Disjoint unit deltas give 2.
double total_variation(const AtomicMeasure& mu, const AtomicMeasure& nu);
// || |x|^2 (mu - nu) ||_TV, the second-moment-weighted variant.
double total_variation_weighted_sq(const AtomicMeasure& mu, const AtomicMeasure& nu);

enum class MetricMethod { quantile_1d, lp_exact, closed_form };

struct LpStatus {
    int iterations = 0;
    // Upper bound on the duality gap at termination; <= 1e-9 for lp_exact.
    double optimality_gap = 0.0;
    // Flat metric only: true iff the optimum puts flow on the mass
    // creation/destruction arcs, i.e. the ||phi||_inf <= 1 box binds.
    bool sup_bound_active = false;
};

struct MetricReport {
    double value = 0.0;
    MetricMethod method = MetricMethod::closed_form;
    LpStatus lp;
};

// Flat (bounded-Lipschitz) distance between finite nonnegative measures:
//   sup { integral phi d(mu - nu) : ||phi||_inf <= 1, Lip(phi) <= 1 }.
// On atomic measures the sup is attained by node values phi_i on the merged
// support subject to |phi_i| <= 1 and |phi_i - phi_j| <= |x_i - x_j|: any
// admissible node vector extends to all of R^d with the same sup norm and
// Lipschitz constant (McShane extension clipped to [-1, 1]), so the finite LP
// loses nothing. Solved exactly via the LP's transportation dual.
// Requires mu.dim == nu.dim and merged support size <= 512.
MetricReport flat_metric(const AtomicMeasure& mu, const AtomicMeasure& nu);

// p-Wasserstein distance, p in {1, 2}, between probability measures
// (total mass 1 +- 1e-10 each). dim == 1 uses the exact quantile coupling;
// dim >= 2 solves the n x m transportation problem exactly (n*m <= 65536).
MetricReport wasserstein(const AtomicMeasure& mu, const AtomicMeasure& nu, int p);

// Serialization. Floats use shortest round-trip decimal representation, so a
// write/read cycle is bit-exact.
nlohmann::json measure_to_json(const AtomicMeasure& mu);
AtomicMeasure measure_from_json(const nlohmann::json& j);
std::string measure_to_csv(const AtomicMeasure& mu);
AtomicMeasure measure_from_csv(const std::string& csv);

}  // namespace alignsim
