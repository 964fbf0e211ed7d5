#pragma once

#include <span>
#include <vector>

#include "alignsim/kernels.hpp"
#include "alignsim/measures.hpp"

namespace alignsim {

// Empirical-measure state: atoms carry fixed masses, positions live in the
// measure, velocities are row-major n x dim alongside.
struct ParticleState {
    double time = 0.0;
    AtomicMeasure measure;
    std::vector<double> velocities;

    int size() const { return measure.size(); }
    int dim() const { return measure.dim; }
};

// One record of the scalar diagnostics. Produced by both the particle and the
// viscous-grid solvers so the stability formulas can consume either; fields a
// producer has nothing to say about stay 0 (e.g. viscous_dissipation for
// particles, w_drift for the grid). trace_mu is identically 0 for atomic
// solutions at finite N and is recorded explicitly to keep the interface
// uniform with the concentration-defect bookkeeping.
struct DiagnosticsRecord {
    double time = 0.0;
    double mass = 0.0;
    double energy = 0.0;                // 1/2 sum m_i |u_i|^2
    double dissipation = 0.0;           // 1/2 sum_ij m_i m_j (u_i-u_j)^T D2K (u_i-u_j)
    double viscous_dissipation = 0.0;   // grid only
    double bd_functional = 0.0;         // grid only: sum (d_x sqrt(rho))^2 dx
    std::vector<double> momentum;       // sum m_i u_i, dim entries
    double second_moment = 0.0;         // sum m_i |x_i|^2
    double first_moment_m = 0.0;        // sum m_i |x_i| |u_i|
    double mv_functional = 0.0;         // sum m_i F(|u_i|)
    double w_drift = 0.0;               // max_i |w_i(t) - w_i(0)|
    double trace_mu = 0.0;
};

// F(z) = ((1+z^2)/2) ln(1+z^2): the higher-integrability weight.
double mv_entropy(double z);

// w_i = u_i + (grad K * mu)(x_i): the transported offset variable. Returns
// n x dim.
std::vector<double> offsets(const ParticleState& s, const Kernel& k);

// Alignment accelerations du_i/dt = -sum_j m_j D2K(x_i - x_j)(u_i - u_j),
// fixed summation order, self term included (it vanishes identically).
std::vector<double> rhs_u(const ParticleState& s, const Kernel& k);

enum class Scheme { rk4, euler };
enum class Formulation { velocity_u, offset_w };

// One fixed step of the coupled (x, u) system. Requires
// 0 < dt <= 0.5 / hess_sup_norm; throws NumericalError naming the first atom
// that turns non-finite.
ParticleState step(const ParticleState& s, const Kernel& k, double dt, Scheme scheme);

DiagnosticsRecord diagnostics(const ParticleState& s, const Kernel& k,
                              std::span<const double> reference_offsets);

struct Trajectory {
    std::vector<ParticleState> states;
    std::vector<DiagnosticsRecord> records;
    double dt = 0.0;
    int record_every = 1;
    Formulation formulation = Formulation::velocity_u;
};

// Integrates to t_end (= round(t_end/dt) steps of exactly dt) recording every
// record_every steps, step 0 included. offset_w transports the offsets w as
// Lagrangian invariants and reconstructs u = w - grad K * mu at every stage;
// velocity_u integrates (x, u) directly. Diagnostics reference the t = 0
// offsets so w_drift measures the invariance of w along the run.
Trajectory simulate(const ParticleState& initial, const Kernel& k, double t_end,
                    double dt, Formulation formulation, int record_every,
                    Scheme scheme = Scheme::rk4);

// |dE/dt + D| at interior record times by central differences on the recorded
// energies. Requires >= 3 records at uniform spacing. Vanishes (to quadrature
// accuracy) exactly when the kernel is even.
std::vector<double> energy_identity_residual(const Trajectory& traj);

}  // namespace alignsim
