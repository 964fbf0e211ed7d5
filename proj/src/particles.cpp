#include "alignsim/particles.hpp"

#include <algorithm>
#include <cmath>

#include "alignsim/common.hpp"

namespace alignsim {

namespace {

void check_state(const ParticleState& s, const Kernel& k, const char* who) {
    if (s.measure.dim != k.dim) throw ConfigError(std::string(who) + ": state/kernel dim mismatch");
    if (s.velocities.size() != s.measure.points.size())
        throw ConfigError(std::string(who) + ": velocity field length mismatch");
}

void check_dt(const Kernel& k, double dt, const char* who) {
    double cap = 0.5 / std::max(k.hess_sup_norm, 1e-300);
    if (!(dt > 0.0) || dt > cap)
        throw ConfigError(std::string(who) + ": dt must lie in (0, 0.5/||D2K||] = (0, " +
                          std::to_string(cap) + "]");
}

void check_finite(const ParticleState& s, const char* who) {
    const int d = s.dim();
    for (int i = 0; i < s.size(); ++i) {
        for (int c = 0; c < d; ++c) {
            if (!std::isfinite(s.measure.points[i * d + c]) || !std::isfinite(s.velocities[i * d + c]))
                throw NumericalError(std::string(who) + ": non-finite value at atom " +
                                     std::to_string(i) + ", t = " + std::to_string(s.time));
        }
    }
}

// du/dt for a (positions, velocities) pair that may differ from the state's.
void accel_into(const Kernel& k, const AtomicMeasure& mu, const std::vector<double>& vel,
                std::vector<double>& out) {
    const int d = k.dim;
    const int n = mu.size();
    out.assign(static_cast<std::size_t>(n) * d, 0.0);
    std::vector<double> diff(d), H(static_cast<std::size_t>(d) * d), du(d);
    for (int i = 0; i < n; ++i) {
        auto xi = mu.point(i);
        for (int j = 0; j < n; ++j) {
            auto xj = mu.point(j);
            for (int c = 0; c < d; ++c) {
                diff[c] = xi[c] - xj[c];
                du[c] = vel[i * d + c] - vel[j * d + c];
            }
            k.hess(diff, H);
            double w = mu.weights[j];
            for (int r = 0; r < d; ++r) {
                double acc = 0.0;
                for (int c = 0; c < d; ++c) acc += H[r * d + c] * du[c];
                out[i * d + r] -= w * acc;
            }
        }
    }
}

struct Deriv {
    std::vector<double> dx, du;
};

Deriv rhs_xu(const Kernel& k, const AtomicMeasure& mu, const std::vector<double>& vel) {
    Deriv out;
    out.dx = vel;
    accel_into(k, mu, vel, out.du);
    return out;
}

ParticleState advance(const ParticleState& s, const Deriv& d, double h) {
    ParticleState out = s;
    for (std::size_t i = 0; i < out.measure.points.size(); ++i) {
        out.measure.points[i] += h * d.dx[i];
        out.velocities[i] += h * d.du[i];
    }
    return out;
}

ParticleState step_xu(const ParticleState& s, const Kernel& k, double dt, Scheme scheme) {
    ParticleState out = s;
    if (scheme == Scheme::euler) {
        Deriv d1 = rhs_xu(k, s.measure, s.velocities);
        out = advance(s, d1, dt);
    } else {
        Deriv d1 = rhs_xu(k, s.measure, s.velocities);
        ParticleState s2 = advance(s, d1, dt / 2);
        Deriv d2 = rhs_xu(k, s2.measure, s2.velocities);
        ParticleState s3 = advance(s, d2, dt / 2);
        Deriv d3 = rhs_xu(k, s3.measure, s3.velocities);
        ParticleState s4 = advance(s, d3, dt);
        Deriv d4 = rhs_xu(k, s4.measure, s4.velocities);
        for (std::size_t i = 0; i < out.measure.points.size(); ++i) {
            out.measure.points[i] +=
                dt / 6 * (d1.dx[i] + 2 * d2.dx[i] + 2 * d3.dx[i] + d4.dx[i]);
            out.velocities[i] += dt / 6 * (d1.du[i] + 2 * d2.du[i] + 2 * d3.du[i] + d4.du[i]);
        }
    }
    out.time = s.time + dt;
    check_finite(out, "step");
    return out;
}

// offset_w form: w is frozen per atom, u(x) = w - (grad K * mu)(x) is
// recomputed at every stage, and only positions move.
std::vector<double> velocities_from_offsets(const Kernel& k, const AtomicMeasure& mu,
                                            const std::vector<double>& w) {
    const int d = k.dim;
    std::vector<double> u(w.size());
    std::vector<double> g(d);
    for (int i = 0; i < mu.size(); ++i) {
        conv_grad(k, mu, mu.point(i), g);
        for (int c = 0; c < d; ++c) u[i * d + c] = w[i * d + c] - g[c];
    }
    return u;
}

AtomicMeasure advance_positions(const AtomicMeasure& mu, const std::vector<double>& v, double h) {
    AtomicMeasure out = mu;
    for (std::size_t i = 0; i < out.points.size(); ++i) out.points[i] += h * v[i];
    return out;
}

ParticleState step_w(const ParticleState& s, const Kernel& k, const std::vector<double>& w,
                     double dt, Scheme scheme) {
    ParticleState out = s;
    std::vector<double> v1 = velocities_from_offsets(k, s.measure, w);
    if (scheme == Scheme::euler) {
        out.measure = advance_positions(s.measure, v1, dt);
        out.velocities = velocities_from_offsets(k, out.measure, w);
        out.time = s.time + dt;
        check_finite(out, "step(offset_w)");
        return out;
    }
    {
        AtomicMeasure m2 = advance_positions(s.measure, v1, dt / 2);
        std::vector<double> v2 = velocities_from_offsets(k, m2, w);
        AtomicMeasure m3 = advance_positions(s.measure, v2, dt / 2);
        std::vector<double> v3 = velocities_from_offsets(k, m3, w);
        AtomicMeasure m4 = advance_positions(s.measure, v3, dt);
        std::vector<double> v4 = velocities_from_offsets(k, m4, w);
        out.measure = s.measure;
        for (std::size_t i = 0; i < out.measure.points.size(); ++i)
            out.measure.points[i] += dt / 6 * (v1[i] + 2 * v2[i] + 2 * v3[i] + v4[i]);
    }
    out.velocities = velocities_from_offsets(k, out.measure, w);
    out.time = s.time + dt;
    check_finite(out, "step(offset_w)");
    return out;
}

}  // namespace

double mv_entropy(double z) {
    double z2 = z * z;
    return 0.5 * (1 + z2) * std::log1p(z2);
}

std::vector<double> offsets(const ParticleState& s, const Kernel& k) {
    check_state(s, k, "offsets");
    const int d = k.dim;
    std::vector<double> w(s.velocities.size());
    std::vector<double> g(d);
    for (int i = 0; i < s.size(); ++i) {
        conv_grad(k, s.measure, s.measure.point(i), g);
        for (int c = 0; c < d; ++c) w[i * d + c] = s.velocities[i * d + c] + g[c];
    }
    return w;
}

std::vector<double> rhs_u(const ParticleState& s, const Kernel& k) {
    check_state(s, k, "rhs_u");
    std::vector<double> out;
    accel_into(k, s.measure, s.velocities, out);
    return out;
}

ParticleState step(const ParticleState& s, const Kernel& k, double dt, Scheme scheme) {
    check_state(s, k, "step");
    check_dt(k, dt, "step");
    return step_xu(s, k, dt, scheme);
}

DiagnosticsRecord diagnostics(const ParticleState& s, const Kernel& k,
                              std::span<const double> reference_offsets) {
    check_state(s, k, "diagnostics");
    const int d = s.dim();
    const int n = s.size();
    DiagnosticsRecord r;
    r.time = s.time;
    r.mass = s.measure.total_mass();
    r.momentum.assign(d, 0.0);
    for (int i = 0; i < n; ++i) {
        double m = s.measure.weights[i];
        double u2 = 0.0, x2 = 0.0;
        for (int c = 0; c < d; ++c) {
            double u = s.velocities[i * d + c];
            double x = s.measure.points[i * d + c];
            u2 += u * u;
            x2 += x * x;
            r.momentum[c] += m * u;
        }
        r.energy += 0.5 * m * u2;
        r.second_moment += m * x2;
        r.first_moment_m += m * std::sqrt(x2) * std::sqrt(u2);
        r.mv_functional += m * mv_entropy(std::sqrt(u2));
    }

    // D = 1/2 sum_ij m_i m_j (u_i - u_j)^T D2K(x_i - x_j) (u_i - u_j)
    std::vector<double> diff(d), H(static_cast<std::size_t>(d) * d), du(d);
    double diss = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int c = 0; c < d; ++c) {
                diff[c] = s.measure.points[i * d + c] - s.measure.points[j * d + c];
                du[c] = s.velocities[i * d + c] - s.velocities[j * d + c];
            }
            k.hess(diff, H);
            double q = 0.0;
            for (int r2 = 0; r2 < d; ++r2)
                for (int c = 0; c < d; ++c) q += du[r2] * H[r2 * d + c] * du[c];
            diss += s.measure.weights[i] * s.measure.weights[j] * q;
        }
    }
    r.dissipation = 0.5 * diss;

    if (!reference_offsets.empty()) {
        if (reference_offsets.size() != s.velocities.size())
            throw ConfigError("diagnostics: reference offsets length mismatch");
        std::vector<double> w = offsets(s, k);
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            double dsq = 0.0;
            for (int c = 0; c < d; ++c) {
                double dd = w[i * d + c] - reference_offsets[i * d + c];
                dsq += dd * dd;
            }
            worst = std::max(worst, std::sqrt(dsq));
        }
        r.w_drift = worst;
    }
    r.trace_mu = 0.0;
    return r;
}

Trajectory simulate(const ParticleState& initial, const Kernel& k, double t_end, double dt,
                    Formulation formulation, int record_every, Scheme scheme) {
    check_state(initial, k, "simulate");
    check_dt(k, dt, "simulate");
    if (record_every < 1) throw ConfigError("simulate: record_every must be >= 1");
    if (!(t_end >= 0.0)) throw ConfigError("simulate: t_end must be >= 0");

    long steps = std::lround(t_end / dt);
    if (steps < 0) steps = 0;

    Trajectory traj;
    traj.dt = dt;
    traj.record_every = record_every;
    traj.formulation = formulation;

    std::vector<double> w0 = offsets(initial, k);
    ParticleState s = initial;
    auto record = [&](const ParticleState& st) {
        traj.states.push_back(st);
        traj.records.push_back(diagnostics(st, k, w0));
    };
    record(s);
    for (long step_i = 1; step_i <= steps; ++step_i) {
        if (formulation == Formulation::velocity_u) s = step_xu(s, k, dt, scheme);
        else s = step_w(s, k, w0, dt, scheme);
        if (step_i % record_every == 0 || step_i == steps) record(s);
    }
    return traj;
}

std::vector<double> energy_identity_residual(const Trajectory& traj) {
    const auto& recs = traj.records;
    if (recs.size() < 3)
        throw ConfigError("energy_identity_residual: need >= 3 records");
    double h = recs[1].time - recs[0].time;
    for (std::size_t i = 1; i < recs.size(); ++i) {
        if (std::abs(recs[i].time - recs[i - 1].time - h) > 1e-9 * std::max(1.0, std::abs(h)))
            throw ConfigError("energy_identity_residual: records not uniformly spaced");
    }
    std::vector<double> res;
    res.reserve(recs.size() - 2);
    for (std::size_t i = 1; i + 1 < recs.size(); ++i) {
        double dEdt = (recs[i + 1].energy - recs[i - 1].energy) / (2 * h);
        res.push_back(std::abs(dEdt + recs[i].dissipation));
    }
    return res;
}

}  // namespace alignsim
