#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "alignsim/kernels.hpp"
#include "alignsim/particles.hpp"

namespace alignsim {

// Closed-form strong solution of the 1D system with D2K = I (quadratic
// kernel). Characteristics:
//   X(t, X0) = X0 + mbar t + (v0(X0) - mbar)(1 - e^-t)
//   v(t, X(t, X0)) = mbar + (v0(X0) - mbar) e^-t
// with mbar the (conserved) mean momentum of the quantile sample. Valid while
// the characteristic map stays increasing, which inf v0' > -1 guarantees.
struct StrongSolution {
    enum class Kind { quadratic_exact, fine_particle_reference };
    Kind kind = Kind::quadratic_exact;

    std::function<double(double)> r0_quantile;  // [0,1] -> R, nondecreasing
    std::function<double(double)> v0;           // globally defined velocity field
    int n_eval = 0;
    double mean_momentum = 0.0;
    // Velocity interpolation uses characteristic samples extended past the
    // quantile range by pad_fraction * support width per side; the velocity
    // field of the closed form is global, so those samples are exact.
    double pad_fraction = 0.25;
    std::vector<double> x0_atoms;  // quantile points, n_eval entries
    std::vector<double> x0_pad;    // padded sample ladder (atoms + pads)

    double v_sup = 0.0;  // sup |v0| over the padded range
    double v_lip = 0.0;  // bound on sup_t |d_x v(t, .)| from the closed form
};

// Builds the closed form from a quantile function and a velocity field,
// checking inf v0' > -1 by sampling (ConfigError with a witness otherwise).
StrongSolution make_quadratic_strong(std::function<double(double)> r0_quantile,
                                     std::function<double(double)> v0, int n_eval,
                                     double pad_fraction = 0.25);

// Pushes the n_eval quantile atoms of r0 along the characteristics: atoms with
// exact masses 1/n_eval, positions X(t, .), velocities v(t, X). Throws
// NumericalError with a witness if the characteristic map is not increasing.
void exact_strong_solution(const StrongSolution& s, double t, AtomicMeasure& out_measure,
                           std::vector<double>& out_velocities);

struct StabilityRow {
    double time = 0.0;
    double velocity_error = 0.0;  // sum m_i |v(t, x_i) - u_i|^2
    double w2_sq = 0.0;           // W2^2(solution measure, strong measure)
    double trace_mu = 0.0;        // 0 for atomic solutions
    double gronwall_rhs = 0.0;    // filled by gronwall_check
    double margin = 0.0;          // gronwall_rhs - lhs
};

// Relative-entropy ingredients of one state against the strong solution at the
// same time. v is evaluated at atom positions by monotone cubic interpolation
// of the characteristic samples; querying beyond the padded sample range is an
// error (reported with the atom position and range; never clamped silently).
StabilityRow relative_entropy(const ParticleState& sol, const StrongSolution& strong);

struct InitialTerms {
    double vel_err0 = 0.0;   // velocity error at t = 0
    double tv0 = 0.0;        // ||rho_0 - r_0||_TV
    double tv_moment0 = 0.0; // || |x|^2 (rho_0 - r_0) ||_TV
    double sum() const { return vel_err0 + tv0 + tv_moment0; }
};

struct GronwallResult {
    bool pass = true;
    double c_star = 0.0;
    double min_margin = 0.0;
    std::vector<StabilityRow> rows;  // input rows with rhs and margin filled
};

// Checks velocity_error + trace_mu + w2_sq <= e^{c_star t} * initial.sum() at
// every row.
GronwallResult gronwall_check(std::span<const StabilityRow> rows, double c_star,
                              const InitialTerms& initial);

// Default stability constant c0 (1 + ||D2K||_{W^1,inf}) (1 + ||v||_{W^1,inf}),
// with the kernel norm rolled up as hess_sup_norm + hess_lipschitz and the
// velocity norm as v_sup + v_lip.
double default_c_star(const Kernel& k, const StrongSolution& s, double c0 = 16.0);

struct FigalliKangResult {
    bool pass = true;
    double min_margin = 0.0;
    // TV terms between an atomic cloud and a mutually singular reference are
    // mass sums; flagged so callers do not read the bound as informative.
    bool tv_uninformative = false;
    std::vector<double> margins;
};

// Checks W2^2(t) <= C_v e^T velocity_error(t) + C_T tv0 + C_m tv_moment0 at
// every row, with T the last recorded time.
FigalliKangResult figalli_kang_check(std::span<const StabilityRow> rows,
                                     const InitialTerms& initial, double C_v,
                                     double C_T, double C_m);

// Halves c0 until gronwall_check first fails; returns the smallest passing c0
// (logged in study summaries, never asserted).
double empirical_minimal_c0(std::span<const StabilityRow> rows, const Kernel& k,
                            const StrongSolution& s, const InitialTerms& initial,
                            double c0_start = 16.0);

// Monotonicity-preserving piecewise-cubic interpolant (Fritsch-Carlson
// limited slopes) on strictly increasing nodes.
struct Pchip {
    std::vector<double> x, y, slope;
    void build(std::span<const double> xs, std::span<const double> ys);
    double eval(double q) const;  // q must lie in [x.front(), x.back()]
};

}  // namespace alignsim
