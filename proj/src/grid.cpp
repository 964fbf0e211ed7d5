#include "alignsim/grid.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "alignsim/common.hpp"

namespace alignsim {

int thread_cap();

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double periodic_offset(double x, double c, double L) {
    return std::remainder(x - c, L);
}

void check_params(GridProfile p, const std::vector<double>& params) {
    switch (p) {
        case GridProfile::constant:
            if (params.size() > 1) throw ConfigError("constant profile takes at most 1 param (u0)");
            break;
        case GridProfile::gaussian_bump_density:
            if (params.size() < 2 || params.size() > 5)
                throw ConfigError(
                    "gaussian_bump_density takes params [center_frac, sigma, u0?, u_sin?, base?]");
            if (!(params[1] > 0.0)) throw ConfigError("gaussian_bump_density: sigma must be > 0");
            if (params.size() >= 5 && params[4] < 0.0)
                throw ConfigError("gaussian_bump_density: base must be >= 0");
            break;
        case GridProfile::two_bumps:
            if (params.size() < 3 || params.size() > 4)
                throw ConfigError("two_bumps takes params [separation, sigma, u_amp, base?]");
            if (!(params[0] > 0.0)) throw ConfigError("two_bumps: separation must be > 0");
            if (!(params[1] > 0.0)) throw ConfigError("two_bumps: sigma must be > 0");
            if (params.size() >= 4 && params[3] < 0.0) throw ConfigError("two_bumps: base must be >= 0");
            break;
    }
    for (double v : params)
        if (!std::isfinite(v)) throw ConfigError("grid profile: non-finite parameter");
}

struct Rhs {
    std::vector<double> drho, dmom;
};

void reconstruct_u(const GridState& g, std::vector<double>& u) {
    u.resize(g.M);
    for (int i = 0; i < g.M; ++i) u[i] = g.mom[i] / std::max(g.rho[i], g.rho_floor);
}

void compute_rhs(const GridState& g, const WrappedKernel1D& k, Rhs& out) {
    const int M = g.M;
    const double dx = g.dx;
    static thread_local std::vector<double> u, frho, fmom;
    reconstruct_u(g, u);
    frho.resize(M);
    fmom.resize(M);
    // face i sits between cells i and i+1 (periodic)
    for (int i = 0; i < M; ++i) {
        int ip = (i + 1) % M;
        double a = std::max(std::abs(u[i]), std::abs(u[ip]));
        frho[i] = 0.5 * (g.rho[i] * u[i] + g.rho[ip] * u[ip]) - 0.5 * a * (g.rho[ip] - g.rho[i]);
        fmom[i] = 0.5 * (g.rho[i] * u[i] * u[i] + g.rho[ip] * u[ip] * u[ip]) -
                  0.5 * a * (g.mom[ip] - g.mom[i]);
    }
    bool has_kernel = false;
    for (double v : k.table)
        if (v != 0.0) { has_kernel = true; break; }
    out.drho.resize(M);
    out.dmom.resize(M);
    for (int i = 0; i < M; ++i) {
        int im = (i - 1 + M) % M;
        int ip = (i + 1) % M;
        out.drho[i] = -(frho[i] - frho[im]) / dx;
        double dmom = -(fmom[i] - fmom[im]) / dx;
        if (g.inv_N != 0.0) {
            double rf_p = 0.5 * (g.rho[i] + g.rho[ip]);
            double rf_m = 0.5 * (g.rho[im] + g.rho[i]);
            dmom += g.inv_N * (rf_p * (u[ip] - u[i]) - rf_m * (u[i] - u[im])) / (dx * dx);
        }
        if (has_kernel) {
            // difference form: vanishes bitwise for uniform u
            double s = 0.0;
            for (int j = 0; j < M; ++j) {
                int r = i - j;
                if (r < 0) r += M;
                s += k.table[r] * (u[i] - u[j]) * g.rho[j];
            }
            dmom -= g.rho[i] * s * dx;
        }
        out.dmom[i] = dmom;
    }
}

}  // namespace

GridProfile grid_profile_from_string(const std::string& s) {
    if (s == "constant") return GridProfile::constant;
    if (s == "gaussian_bump_density") return GridProfile::gaussian_bump_density;
    if (s == "two_bumps") return GridProfile::two_bumps;
    throw ConfigError("unknown grid profile '" + s + "'");
}

double profile_density(GridProfile p, const std::vector<double>& params, double L, double x) {
    check_params(p, params);
    switch (p) {
        case GridProfile::constant:
            return 1.0;
        case GridProfile::gaussian_bump_density: {
            double c = params[0] * L;
            double sigma = params[1];
            double base = params.size() >= 5 ? params[4] : 0.2;
            double d = periodic_offset(x, c, L);
            return base + std::exp(-d * d / (2 * sigma * sigma));
        }
        case GridProfile::two_bumps: {
            double sep = params[0];
            double sigma = params[1];
            double base = params.size() >= 4 ? params[3] : 0.2;
            double d1 = periodic_offset(x, 0.5 * L - 0.5 * sep, L);
            double d2 = periodic_offset(x, 0.5 * L + 0.5 * sep, L);
            return base + std::exp(-d1 * d1 / (2 * sigma * sigma)) +
                   std::exp(-d2 * d2 / (2 * sigma * sigma));
        }
    }
    throw ConfigError("unreachable profile");
}

double profile_velocity(GridProfile p, const std::vector<double>& params, double L, double x) {
    check_params(p, params);
    switch (p) {
        case GridProfile::constant:
            return params.empty() ? 0.0 : params[0];
        case GridProfile::gaussian_bump_density: {
            double c = params[0] * L;
            double u0 = params.size() >= 3 ? params[2] : 0.0;
            double u_sin = params.size() >= 4 ? params[3] : 0.0;
            return u0 + u_sin * std::sin(kTwoPi * (x - c) / L);
        }
        case GridProfile::two_bumps: {
            double u_amp = params[2];
            return -u_amp * std::sin(kTwoPi * (x - 0.5 * L) / L);
        }
    }
    throw ConfigError("unreachable profile");
}

GridState init_grid(GridProfile profile, const std::vector<double>& params, double L, int M,
                    double inv_N, double rho_floor_rel) {
    if (!(L > 0.0)) throw ConfigError("init_grid: L must be > 0");
    if (M < 16) throw ConfigError("init_grid: M must be >= 16");
    if (inv_N < 0.0) throw ConfigError("init_grid: inv_N must be >= 0");
    if (!(rho_floor_rel > 0.0)) throw ConfigError("init_grid: rho_floor_rel must be > 0");
    GridState g;
    g.L = L;
    g.M = M;
    g.dx = L / M;
    g.inv_N = inv_N;
    g.time = 0.0;
    g.rho.resize(M);
    g.mom.resize(M);
    std::vector<double> u(M);
    double raw_mass = 0.0;
    for (int i = 0; i < M; ++i) {
        double x = g.cell_center(i);
        double r = profile_density(profile, params, L, x);
        if (!(r > 0.0))
            throw ConfigError("init_grid: profile density nonpositive at cell " + std::to_string(i));
        g.rho[i] = r;
        u[i] = profile_velocity(profile, params, L, x);
        raw_mass += r * g.dx;
    }
    if (!(raw_mass > 0.0) || !std::isfinite(raw_mass))
        throw ConfigError("init_grid: mass normalization failure");
    double scale = 1.0 / raw_mass;
    double rho_max = 0.0;
    for (int i = 0; i < M; ++i) {
        g.rho[i] *= scale;
        rho_max = std::max(rho_max, g.rho[i]);
    }
    g.rho_floor = rho_floor_rel * rho_max;
    for (int i = 0; i < M; ++i) {
        if (g.rho[i] < g.rho_floor)
            throw ConfigError("init_grid: profile not strictly positive above the floor at cell " +
                              std::to_string(i));
        g.mom[i] = g.rho[i] * u[i];
    }
    return g;
}

WrappedKernel1D wrap_kernel(const Kernel& k, double L, int M) {
    if (k.dim != 1) throw ConfigError("wrap_kernel: kernel must be 1D");
    if (!(L > 0.0) || M < 1) throw ConfigError("wrap_kernel: bad domain");
    WrappedKernel1D w;
    w.L = L;
    w.M = M;
    w.even = k.even;
    w.psd = k.psd;
    w.id = k.id;
    double dx = L / M;
    auto kappa = [&](double s) {
        double h = 0.0;
        k.hess(std::span<const double>(&s, 1), std::span<double>(&h, 1));
        return h;
    };
    // minimal-image representative of each grid offset
    std::vector<double> srep(M);
    for (int r = 0; r < M; ++r) {
        double s = r * dx;
        if (s >= 0.5 * L) s -= L;
        srep[r] = s;
    }
    w.table.resize(M);
    double base_max = 0.0;
    for (int r = 0; r < M; ++r) {
        w.table[r] = kappa(srep[r]);
        base_max = std::max(base_max, std::abs(w.table[r]));
    }
    w.shells = 0;
    double prev = base_max;
    std::vector<double> contrib(M);
    const int shell_cap = 200000;
    for (int shell = 1; shell <= shell_cap; ++shell) {
        double cmax = 0.0;
        for (int r = 0; r < M; ++r) {
            contrib[r] = kappa(srep[r] + shell * L) + kappa(srep[r] - shell * L);
            cmax = std::max(cmax, std::abs(contrib[r]));
        }
        if (shell == 1 && cmax >= 0.999 * std::max(base_max, 1e-300)) {
            // Hessian does not decay across one period: keep the torus
            // truncation (minimal image) only.
            return w;
        }
        if (cmax <= 1e-12 * std::max(base_max, 1e-300)) {
            w.shells = shell - 1;
            return w;
        }
        for (int r = 0; r < M; ++r) w.table[r] += contrib[r];
        w.shells = shell;
        if (shell > 1 && cmax >= prev) return w;  // stopped decaying, accept truncation
        prev = cmax;
    }
    return w;
}

double cfl_dt(const GridState& g) {
    std::vector<double> u;
    reconstruct_u(g, u);
    double umax = 0.0;
    for (double v : u) umax = std::max(umax, std::abs(v));
    double dt_conv = g.dx / (umax + 1e-12);
    double dt = dt_conv;
    if (g.inv_N > 0.0) {
        // R bounds the face/cell density ratio entering the diffusion stencil
        double R = 0.0;
        for (int i = 0; i < g.M; ++i) {
            int ip = (i + 1) % g.M;
            double face = 0.5 * (g.rho[i] + g.rho[ip]);
            R = std::max(R, face / std::max(g.rho[i], g.rho_floor));
            R = std::max(R, face / std::max(g.rho[ip], g.rho_floor));
        }
        double dt_diff = g.dx * g.dx / (2.0 * g.inv_N * std::max(R, 1e-300));
        dt = std::min(dt, dt_diff);
    }
    return 0.4 * dt;
}

GridState grid_step(const GridState& g, const WrappedKernel1D& k, double dt) {
    if (g.M != k.M || std::abs(g.L - k.L) > 1e-12 * g.L)
        throw ConfigError("grid_step: state/kernel grid mismatch");
    if (!(dt > 0.0)) throw ConfigError("grid_step: dt must be > 0");
    double cap = cfl_dt(g);
    if (dt > cap * (1.0 + 1e-12))
        throw ConfigError("grid_step: dt " + std::to_string(dt) + " exceeds CFL bound " +
                          std::to_string(cap));
    Rhs r1, r2;
    compute_rhs(g, k, r1);
    GridState s1 = g;
    for (int i = 0; i < g.M; ++i) {
        s1.rho[i] += dt * r1.drho[i];
        s1.mom[i] += dt * r1.dmom[i];
    }
    compute_rhs(s1, k, r2);
    GridState out = g;
    for (int i = 0; i < g.M; ++i) {
        out.rho[i] += 0.5 * dt * (r1.drho[i] + r2.drho[i]);
        out.mom[i] += 0.5 * dt * (r1.dmom[i] + r2.dmom[i]);
    }
    out.time = g.time + dt;
    for (int i = 0; i < g.M; ++i) {
        if (!std::isfinite(out.rho[i]) || !std::isfinite(out.mom[i]))
            throw NumericalError("grid_step: non-finite value at cell " + std::to_string(i) +
                                 ", t = " + std::to_string(out.time));
        if (out.rho[i] < 0.0)
            throw NumericalError("grid_step: negative density at cell " + std::to_string(i) +
                                 ", t = " + std::to_string(out.time));
    }
    return out;
}

std::vector<double> grid_velocity(const GridState& g) {
    std::vector<double> u;
    reconstruct_u(g, u);
    return u;
}

DiagnosticsRecord grid_diagnostics(const GridState& g, const WrappedKernel1D& k) {
    if (g.M != k.M) throw ConfigError("grid_diagnostics: state/kernel grid mismatch");
    const int M = g.M;
    const double dx = g.dx;
    std::vector<double> u;
    reconstruct_u(g, u);
    DiagnosticsRecord r;
    r.time = g.time;
    r.momentum.assign(1, 0.0);
    for (int i = 0; i < M; ++i) {
        r.mass += g.rho[i] * dx;
        r.momentum[0] += g.mom[i] * dx;
        r.energy += 0.5 * g.rho[i] * u[i] * u[i] * dx;
        r.mv_functional += g.rho[i] * mv_entropy(std::abs(u[i])) * dx;
        double xc = g.cell_center(i) - 0.5 * g.L;
        r.second_moment += g.rho[i] * xc * xc * dx;
        r.first_moment_m += g.rho[i] * std::abs(xc) * std::abs(u[i]) * dx;
    }
    if (g.inv_N > 0.0) {
        for (int i = 0; i < M; ++i) {
            int ip = (i + 1) % M;
            int im = (i - 1 + M) % M;
            double du = (u[ip] - u[im]) / (2 * dx);
            r.viscous_dissipation += g.inv_N * g.rho[i] * du * du * dx;
        }
    }
    double diss = 0.0;
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < M; ++j) {
            int off = i - j;
            if (off < 0) off += M;
            double duij = u[i] - u[j];
            diss += g.rho[i] * g.rho[j] * k.table[off] * duij * duij;
        }
    }
    r.dissipation = 0.5 * diss * dx * dx;
    for (int i = 0; i < M; ++i) {
        int ip = (i + 1) % M;
        int im = (i - 1 + M) % M;
        double ds = (std::sqrt(g.rho[ip]) - std::sqrt(g.rho[im])) / (2 * dx);
        r.bd_functional += ds * ds * dx;
    }
    r.w_drift = 0.0;
    r.trace_mu = 0.0;
    return r;
}

AtomizedGrid atomize(const GridState& g) {
    AtomizedGrid out;
    out.measure.dim = 1;
    out.measure.points.resize(g.M);
    out.measure.weights.resize(g.M);
    out.velocities.resize(g.M);
    std::vector<double> u;
    reconstruct_u(g, u);
    for (int i = 0; i < g.M; ++i) {
        out.measure.points[i] = g.cell_center(i);
        out.measure.weights[i] = g.rho[i] * g.dx;
        out.velocities[i] = u[i];
    }
    return out;
}

namespace {

// quantile sampling of the initial cell-averaged density (piecewise-linear CDF)
ParticleState quantile_particles(const GridState& g0, GridProfile profile,
                                 const std::vector<double>& params, int n_ref) {
    double mass = 0.0;
    for (double r : g0.rho) mass += r * g0.dx;
    ParticleState p;
    p.time = 0.0;
    p.measure.dim = 1;
    p.measure.points.resize(n_ref);
    p.measure.weights.assign(n_ref, 1.0 / n_ref);
    p.velocities.resize(n_ref);
    int cell = 0;
    double cdf_left = 0.0;  // CDF at left edge of `cell`, normalized
    for (int k = 0; k < n_ref; ++k) {
        double q = (k + 0.5) / n_ref;
        while (cell < g0.M - 1 && cdf_left + g0.rho[cell] * g0.dx / mass < q) {
            cdf_left += g0.rho[cell] * g0.dx / mass;
            ++cell;
        }
        double pc = g0.rho[cell] * g0.dx / mass;
        double frac = std::clamp((q - cdf_left) / std::max(pc, 1e-300), 0.0, 1.0);
        double x = cell * g0.dx + frac * g0.dx;
        p.measure.points[k] = x;
        p.velocities[k] = profile_velocity(profile, params, g0.L, x);
    }
    return p;
}

}  // namespace

StudyResult vanishing_viscosity_study(GridProfile profile, const std::vector<double>& params,
                                      double L, int M, const Kernel& kernel,
                                      const std::vector<int>& N_list, double t_probe,
                                      StudyReference reference, int n_ref,
                                      double rho_floor_rel) {
    if (N_list.empty()) throw ConfigError("study: N_list must be non-empty");
    for (std::size_t i = 0; i < N_list.size(); ++i) {
        if (N_list[i] < 1) throw ConfigError("study: N must be >= 1");
        if (i > 0 && N_list[i] <= N_list[i - 1])
            throw ConfigError("study: N_list must be strictly increasing");
    }
    if (!(t_probe > 0.0)) throw ConfigError("study: t_probe must be > 0");

    WrappedKernel1D wk = wrap_kernel(kernel, L, M);
    std::vector<GridState> inits;
    inits.reserve(N_list.size());
    double dt_shared = std::numeric_limits<double>::infinity();
    for (int N : N_list) {
        inits.push_back(init_grid(profile, params, L, M, 1.0 / N, rho_floor_rel));
        dt_shared = std::min(dt_shared, cfl_dt(inits.back()));
    }
    dt_shared *= 0.5;  // margin against CFL tightening as the state evolves
    long steps = static_cast<long>(std::ceil(t_probe / dt_shared));
    steps = std::max<long>(steps, 1);
    double dt = t_probe / steps;

    std::vector<GridState> finals(N_list.size());
    std::vector<std::exception_ptr> errors(N_list.size());
    auto run_one = [&](std::size_t idx) {
        try {
            GridState g = inits[idx];
            for (long s = 0; s < steps; ++s) g = grid_step(g, wk, dt);
            finals[idx] = std::move(g);
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    };
    int workers = std::min<int>(thread_cap(), static_cast<int>(N_list.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < N_list.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < N_list.size(); i += workers) run_one(i);
            });
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < N_list.size(); ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const NumericalError& e) {
            throw NumericalError("study run N=" + std::to_string(N_list[i]) + ": " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError("study run N=" + std::to_string(N_list[i]) + ": " + e.what());
        }
    }

    AtomicMeasure ref_measure;
    if (reference == StudyReference::largest_n) {
        ref_measure = atomize(finals.back()).measure;
    } else {
        if (n_ref < 2) throw ConfigError("study: n_ref must be >= 2");
        ParticleState p0 = quantile_particles(inits.front(), profile, params, n_ref);
        double pdt = std::min(1e-3, 0.4 / std::max(1.0, kernel.hess_sup_norm));
        long psteps = std::max<long>(1, std::lround(std::ceil(t_probe / pdt)));
        pdt = t_probe / psteps;
        Trajectory traj = simulate(p0, kernel, t_probe, pdt, Formulation::velocity_u,
                                   static_cast<int>(psteps));
        ref_measure = traj.states.back().measure;
    }

    StudyResult res;
    res.reference = reference == StudyReference::largest_n ? "largest_n" : "particles";
    res.t_probe = t_probe;
    res.dt = dt;
    res.M = M;
    res.L = L;
    res.kernel_id = kernel.id;
    for (std::size_t i = 0; i < N_list.size(); ++i) {
        AtomizedGrid a = atomize(finals[i]);
        StudyRow row;
        row.N = N_list[i];
        row.flat = flat_metric(a.measure, ref_measure).value;
        row.w2 = wasserstein(a.measure, ref_measure, 2).value;
        DiagnosticsRecord d = grid_diagnostics(finals[i], wk);
        row.energy = d.energy;
        double e_at = 0.0;
        for (int j = 0; j < a.measure.size(); ++j)
            e_at += 0.5 * a.measure.weights[j] * a.velocities[j] * a.velocities[j];
        row.defect = d.energy - e_at;
        res.rows.push_back(row);
    }
    return res;
}

}  // namespace alignsim
