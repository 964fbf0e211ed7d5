#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "alignsim/measures.hpp"

namespace alignsim {

/// Communication kernel K together with its first two derivatives and the
/// metadata the solvers rely on. The Hessian is the object that actually
/// drives the dynamics; K and grad K feed the conservative reformulation.
struct Kernel {
    int dim = 1;
    std::function<double(std::span<const double>)> value;
    // Writes grad K(x) into out (dim entries).
    std::function<void(std::span<const double>, std::span<double>)> grad;
    // Writes D2K(x) into out, row-major dim x dim. Always symmetric.
    std::function<void(std::span<const double>, std::span<double>)> hess;

    double hess_sup_norm = 0.0;   // declared sup_x ||D2K(x)|| (spectral)
    double hess_lipschitz = 0.0;  // declared Lipschitz bound for x -> D2K(x)
    bool even = true;             // D2K(-x) == D2K(x)
    bool psd = true;              // D2K(x) positive semi-definite for all x
    std::string id;               // catalogue name, recorded in manifests
};

// Catalogue families:
//   "quadratic"      params []            K = |x|^2/2, D2K = I
//   "smoothed_norm"  params [eps]         K = sqrt(eps^2 + |x|^2)
//   "gaussian_bump"  params [sigma]       K = -exp(-|x|^2 / (2 sigma^2))
//   "custom_table"   dim 1 only; tabulated K'' with cubic interpolation.
//       Even layout:       [xmax, v_0 .. v_{k-1}]        nodes on [0, xmax],
//                          mirrored to x < 0.
//       Full-range layout: [xmin, xmax, v_0 .. v_{k-1}]  xmin < 0 < xmax,
//                          not necessarily even.
//       Outside the table K'' continues with its end value.
// Unknown name or invalid params throw ConfigError.
Kernel make_builtin(const std::string& name, const std::vector<double>& params, int dim);

struct PropertyCheck {
    std::string property;
    bool pass = true;
    double worst = 0.0;           // largest violation encountered (0 if none)
    std::vector<double> witness;  // sample point of the worst violation
};

struct ValidationReport {
    std::vector<PropertyCheck> checks;
    bool all_pass() const;
};

struct SampleBox {
    std::vector<double> lo, hi;  // dim entries each
};

// Seeded Monte-Carlo check of the kernel invariants: Hessian symmetry,
// evenness (if flagged), PSD (if flagged), finite-difference consistency of
// grad vs hess, declared sup-norm bound, and the linear gradient growth bound
// |grad K(x)| <= C (1 + |x|) with C = max(|grad K(0)|, hess_sup_norm).
ValidationReport validate(const Kernel& k, const SampleBox& box, int n_samples,
                          std::uint64_t seed);

// (grad K * mu)(x) = sum_j w_j grad K(x - x_j). Terms are summed in a canonical
// support order (lexicographic by position, then weight), so the result is
// bitwise invariant under atom relabeling.
void conv_grad(const Kernel& k, const AtomicMeasure& mu, std::span<const double> x,
               std::span<double> out);
std::vector<double> conv_grad(const Kernel& k, const AtomicMeasure& mu,
                              std::span<const double> x);

// sum_j w_j D2K(x - x_j) (u_x - u_j): the alignment force integrand at (x, u_x)
// against the discrete momentum field (mu, velocities). velocities is n x dim.
// Same canonical-order summation contract as conv_grad (velocity breaks ties).
void conv_hess_pair(const Kernel& k, const AtomicMeasure& mu,
                    std::span<const double> velocities, std::span<const double> x,
                    std::span<const double> u_x, std::span<double> out);

// Spectral norm of a symmetric d x d matrix (row-major), via cyclic Jacobi.
double sym_spectral_norm(std::span<const double> m, int d);

}  // namespace alignsim
