#pragma once

#include <string>
#include <vector>

#include "alignsim/kernels.hpp"
#include "alignsim/measures.hpp"
#include "alignsim/particles.hpp"

namespace alignsim {

// 1D periodic finite-volume state for the viscous system with viscosity
// inv_N = 1/N. Cell centers x_i = (i + 1/2) dx, dx = L / M. rho_floor is an
// absolute density floor used only when reconstructing u = mom / rho; it never
// modifies the conserved fields.
struct GridState {
    double L = 1.0;
    int M = 0;
    double dx = 0.0;
    double inv_N = 0.0;
    double time = 0.0;
    double rho_floor = 0.0;
    std::vector<double> rho, mom;

    double cell_center(int i) const { return (i + 0.5) * dx; }
};

enum class GridProfile { constant, gaussian_bump_density, two_bumps };

GridProfile grid_profile_from_string(const std::string& s);

// Unnormalized continuum density and velocity of a profile, exposed so tests
// can quadrature the same functions the initializer samples.
double profile_density(GridProfile p, const std::vector<double>& params, double L, double x);
double profile_velocity(GridProfile p, const std::vector<double>& params, double L, double x);

// Samples the profile at cell centers, renormalizes the density to unit mass
// exactly (midpoint rule), and sets mom = rho * u. rho_floor_rel scales the
// floor off max(rho_0). Profiles must come out strictly positive.
GridState init_grid(GridProfile profile, const std::vector<double>& params, double L,
                    int M, double inv_N, double rho_floor_rel = 1e-10);

// kappa_L(x) = sum_{|k| <= k_max} kappa(x + kL), tabulated on grid offsets.
// kappa is the kernel's 1D Hessian. Shells are added while they still change
// the sum (relative tail below 1e-12 stops it); a kernel whose Hessian does
// not decay (e.g. the quadratic one, kappa == 1) keeps only the minimal-image
// term, i.e. the torus truncation of kappa.
struct WrappedKernel1D {
    double L = 0.0;
    int M = 0;
    int shells = 0;            // k_max actually used
    bool even = true;
    bool psd = true;
    std::vector<double> table;  // M entries, index (i - j) mod M
    std::string id;
};

WrappedKernel1D wrap_kernel(const Kernel& k, double L, int M);

// Largest admissible dt at the current state:
//   0.4 * min( dx / (max|u| + eps),  N dx^2 / (2 R) )
// where R is the worst face/cell density ratio entering the discrete
// diffusion (faces are arithmetic means, cells floored by rho_floor).
double cfl_dt(const GridState& g);

// One step: Rusanov (local Lax-Friedrichs) fluxes for (rho, mom), central
// diffusion (1/N) d_x(rho d_x u), alignment source in the difference form
//   -rho_i sum_j kappa_L(x_i - x_j) (u_i - u_j) rho_j dx
// (identical to rho u (kappa*rho) - rho (kappa*(rho u)); cancels exactly for
// uniform u), advanced with Heun's RK2. dt must satisfy cfl_dt; a negative
// density cell or non-finite value raises NumericalError with the cell index.
GridState grid_step(const GridState& g, const WrappedKernel1D& k, double dt);

std::vector<double> grid_velocity(const GridState& g);

DiagnosticsRecord grid_diagnostics(const GridState& g, const WrappedKernel1D& k);

// One atom per cell at the cell center, weight rho_i dx, velocity u_i.
struct AtomizedGrid {
    AtomicMeasure measure;
    std::vector<double> velocities;
};
AtomizedGrid atomize(const GridState& g);

enum class StudyReference { largest_n, particles };

struct StudyRow {
    int N = 0;
    double flat = 0.0;
    double w2 = 0.0;
    double energy = 0.0;
    double defect = 0.0;  // E_grid - E_atomized; ~0 by construction, kept as
                          // the energy-defect slot of the interface
};

struct StudyResult {
    std::vector<StudyRow> rows;  // ascending N
    std::string reference;       // "largest_n" or "particles"
    double t_probe = 0.0;
    double dt = 0.0;             // shared step used for every run
    int M = 0;
    double L = 0.0;
    std::string kernel_id;
};

// Runs the viscous solver once per N in N_list (non-empty, increasing),
// identical grid, profile and dt (chosen from the stiffest run), and compares
// the final states to the reference in flat and W2 metrics. The particle
// reference quantile-samples rho_0 into n_ref atoms and integrates the
// inviscid atomic dynamics with the same kernel. SIM_THREADS caps the number
// of concurrent per-N solves.
StudyResult vanishing_viscosity_study(GridProfile profile,
                                      const std::vector<double>& params, double L,
                                      int M, const Kernel& kernel,
                                      const std::vector<int>& N_list, double t_probe,
                                      StudyReference reference, int n_ref = 128,
                                      double rho_floor_rel = 1e-10);

}  // namespace alignsim
