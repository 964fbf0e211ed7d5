#include "alignsim/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "alignsim/common.hpp"
#include "alignsim/measures.hpp"

namespace alignsim {

void Pchip::build(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw ConfigError("pchip: need >= 2 nodes");
    const std::size_t n = xs.size();
    for (std::size_t i = 1; i < n; ++i)
        if (!(xs[i] > xs[i - 1])) throw ConfigError("pchip: nodes must be strictly increasing");
    x.assign(xs.begin(), xs.end());
    y.assign(ys.begin(), ys.end());
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x[i + 1] - x[i];
        delta[i] = (y[i + 1] - y[i]) / h[i];
    }
    slope.assign(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            slope[i] = 0.0;
        } else {
            // Fritsch-Carlson weighted harmonic mean
            double w1 = 2 * h[i] + h[i - 1];
            double w2 = h[i] + 2 * h[i - 1];
            slope[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    auto end_slope = [](double d0, double d1, double h0, double h1) {
        double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (s * d0 <= 0.0) return 0.0;
        if (d0 * d1 < 0.0 && std::abs(s) > 3 * std::abs(d0)) return 3 * d0;
        return s;
    };
    if (n == 2) {
        slope[0] = slope[1] = delta[0];
    } else {
        slope[0] = end_slope(delta[0], delta[1], h[0], h[1]);
        slope[n - 1] = end_slope(delta[n - 2], delta[n - 3], h[n - 2], h[n - 3]);
    }
}

double Pchip::eval(double q) const {
    if (x.empty()) throw ConfigError("pchip: not built");
    if (q < x.front() || q > x.back())
        throw NumericalError("pchip: query " + std::to_string(q) + " outside [" +
                             std::to_string(x.front()) + ", " + std::to_string(x.back()) + "]");
    auto it = std::upper_bound(x.begin(), x.end(), q);
    std::size_t i = it == x.begin() ? 0 : static_cast<std::size_t>(it - x.begin()) - 1;
    if (i >= x.size() - 1) i = x.size() - 2;
    double h = x[i + 1] - x[i];
    double t = (q - x[i]) / h;
    double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
    double h10 = t * (1 - t) * (1 - t);
    double h01 = t * t * (3 - 2 * t);
    double h11 = t * t * (t - 1);
    return h00 * y[i] + h10 * h * slope[i] + h01 * y[i + 1] + h11 * h * slope[i + 1];
}

namespace {

double characteristic(double x0, double v0x, double mbar, double t) {
    return x0 + mbar * t + (v0x - mbar) * (1.0 - std::exp(-t));
}

double characteristic_velocity(double v0x, double mbar, double t) {
    return mbar + (v0x - mbar) * std::exp(-t);
}

}  // namespace

StrongSolution make_quadratic_strong(std::function<double(double)> r0_quantile,
                                     std::function<double(double)> v0, int n_eval,
                                     double pad_fraction) {
    if (!r0_quantile || !v0) throw ConfigError("strong solution: missing quantile or velocity");
    if (n_eval < 2) throw ConfigError("strong solution: n_eval must be >= 2");
    if (!(pad_fraction >= 0.0)) throw ConfigError("strong solution: pad_fraction must be >= 0");
    StrongSolution s;
    s.kind = StrongSolution::Kind::quadratic_exact;
    s.r0_quantile = std::move(r0_quantile);
    s.v0 = std::move(v0);
    s.n_eval = n_eval;
    s.pad_fraction = pad_fraction;

    s.x0_atoms.resize(n_eval);
    double mbar = 0.0;
    for (int k = 0; k < n_eval; ++k) {
        double q = (k + 0.5) / n_eval;
        s.x0_atoms[k] = s.r0_quantile(q);
        if (k > 0 && s.x0_atoms[k] < s.x0_atoms[k - 1])
            throw ConfigError("strong solution: quantile function not nondecreasing at q = " +
                              std::to_string(q));
        mbar += s.v0(s.x0_atoms[k]) / n_eval;
    }
    s.mean_momentum = mbar;

    double lo = s.x0_atoms.front(), hi = s.x0_atoms.back();
    double width = std::max(hi - lo, 1e-12);
    double pad = pad_fraction * width;
    // padded sample ladder: extra exact samples outside the quantile range so
    // interpolation covers perturbed atoms near the support edges
    int n_pad = std::max(2, static_cast<int>(std::ceil(pad_fraction * n_eval)));
    std::vector<double> ladder;
    ladder.reserve(s.x0_atoms.size() + 2 * n_pad);
    for (int k = n_pad; k >= 1; --k) ladder.push_back(lo - pad * k / n_pad);
    for (double v : s.x0_atoms) ladder.push_back(v);
    for (int k = 1; k <= n_pad; ++k) ladder.push_back(hi + pad * k / n_pad);
    // drop duplicates from flat quantile stretches; interpolation nodes must
    // strictly increase
    std::vector<double> uniq;
    for (double v : ladder)
        if (uniq.empty() || v > uniq.back() + 1e-14 * (1.0 + std::abs(v))) uniq.push_back(v);
    s.x0_pad = std::move(uniq);
    if (s.x0_pad.size() < 2) throw ConfigError("strong solution: degenerate support");

    double inf_slope = std::numeric_limits<double>::infinity();
    double witness = 0.0;
    double vsup = 0.0, vlip = 0.0;
    for (std::size_t i = 0; i < s.x0_pad.size(); ++i) {
        double xi = s.x0_pad[i];
        vsup = std::max(vsup, std::abs(s.v0(xi)));
        if (i + 1 < s.x0_pad.size()) {
            double xj = s.x0_pad[i + 1];
            double sl = (s.v0(xj) - s.v0(xi)) / (xj - xi);
            vlip = std::max(vlip, std::abs(sl));
            if (sl < inf_slope) {
                inf_slope = sl;
                witness = 0.5 * (xi + xj);
            }
        }
    }
    if (!(inf_slope > -1.0))
        throw ConfigError("strong solution: v0' = " + std::to_string(inf_slope) +
                          " <= -1 near x = " + std::to_string(witness) +
                          "; characteristics would cross");
    s.v_sup = vsup;
    s.v_lip = vlip;
    return s;
}

void exact_strong_solution(const StrongSolution& s, double t, AtomicMeasure& out_measure,
                           std::vector<double>& out_velocities) {
    if (s.kind != StrongSolution::Kind::quadratic_exact)
        throw ConfigError("strong solution: only the closed form can be sampled directly");
    if (!(t >= 0.0)) throw ConfigError("strong solution: t must be >= 0");
    const int n = s.n_eval;
    out_measure.dim = 1;
    out_measure.points.resize(n);
    out_measure.weights.assign(n, 1.0 / n);
    out_velocities.resize(n);
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
        double x0 = s.x0_atoms[k];
        double v0x = s.v0(x0);
        double x = characteristic(x0, v0x, s.mean_momentum, t);
        if (x < prev)
            throw NumericalError("strong solution: characteristic map decreasing at atom " +
                                 std::to_string(k) + ", t = " + std::to_string(t));
        prev = x;
        out_measure.points[k] = x;
        out_velocities[k] = characteristic_velocity(v0x, s.mean_momentum, t);
    }
}

StabilityRow relative_entropy(const ParticleState& sol, const StrongSolution& strong) {
    if (sol.dim() != 1) throw ConfigError("relative_entropy: 1D states only");
    const double t = sol.time;

    // strong atoms for the W2 leg
    AtomicMeasure r_t;
    std::vector<double> v_t;
    exact_strong_solution(strong, t, r_t, v_t);

    // velocity field at time t, interpolated over the padded characteristic
    // samples (exact values, v0 is global)
    std::vector<double> xs(strong.x0_pad.size()), vs(strong.x0_pad.size());
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < strong.x0_pad.size(); ++i) {
        double x0 = strong.x0_pad[i];
        double v0x = strong.v0(x0);
        xs[i] = characteristic(x0, v0x, strong.mean_momentum, t);
        vs[i] = characteristic_velocity(v0x, strong.mean_momentum, t);
        if (xs[i] <= prev)
            throw NumericalError("relative_entropy: characteristic samples not increasing at t = " +
                                 std::to_string(t));
        prev = xs[i];
    }
    Pchip interp;
    interp.build(xs, vs);

    StabilityRow row;
    row.time = t;
    for (int i = 0; i < sol.size(); ++i) {
        double xi = sol.measure.points[i];
        if (xi < xs.front() || xi > xs.back())
            throw NumericalError("relative_entropy: atom " + std::to_string(i) + " at x = " +
                                 std::to_string(xi) + " outside the sampled strong support [" +
                                 std::to_string(xs.front()) + ", " + std::to_string(xs.back()) +
                                 "]");
        double dv = interp.eval(xi) - sol.velocities[i];
        row.velocity_error += sol.measure.weights[i] * dv * dv;
    }
    row.w2_sq = std::pow(wasserstein(sol.measure, r_t, 2).value, 2);
    row.trace_mu = 0.0;
    return row;
}

GronwallResult gronwall_check(std::span<const StabilityRow> rows, double c_star,
                              const InitialTerms& initial) {
    if (rows.empty()) throw ConfigError("gronwall_check: empty series");
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].time < rows[i - 1].time)
            throw ConfigError("gronwall_check: series not sorted in t");
    GronwallResult res;
    res.c_star = c_star;
    res.min_margin = std::numeric_limits<double>::infinity();
    for (const StabilityRow& in : rows) {
        StabilityRow r = in;
        double lhs = r.velocity_error + r.trace_mu + r.w2_sq;
        r.gronwall_rhs = std::exp(c_star * r.time) * initial.sum();
        r.margin = r.gronwall_rhs - lhs;
        res.min_margin = std::min(res.min_margin, r.margin);
        if (r.margin < 0.0) res.pass = false;
        res.rows.push_back(r);
    }
    return res;
}

double default_c_star(const Kernel& k, const StrongSolution& s, double c0) {
    double kernel_norm = k.hess_sup_norm + k.hess_lipschitz;
    double v_norm = s.v_sup + s.v_lip;
    return c0 * (1.0 + kernel_norm) * (1.0 + v_norm);
}

FigalliKangResult figalli_kang_check(std::span<const StabilityRow> rows,
                                     const InitialTerms& initial, double C_v, double C_T,
                                     double C_m) {
    if (rows.empty()) throw ConfigError("figalli_kang_check: empty trajectory");
    FigalliKangResult res;
    res.min_margin = std::numeric_limits<double>::infinity();
    double T = rows.back().time;
    // TV between mutually singular measures is a mass sum; the bound then
    // holds for free and says nothing
    res.tv_uninformative = initial.tv0 + initial.tv_moment0 > 1e-12;
    for (const StabilityRow& r : rows) {
        double rhs = C_v * std::exp(T) * r.velocity_error + C_T * initial.tv0 +
                     C_m * initial.tv_moment0;
        double margin = rhs - r.w2_sq;
        res.margins.push_back(margin);
        res.min_margin = std::min(res.min_margin, margin);
        if (margin < 0.0) res.pass = false;
    }
    return res;
}

double empirical_minimal_c0(std::span<const StabilityRow> rows, const Kernel& k,
                            const StrongSolution& s, const InitialTerms& initial,
                            double c0_start) {
    double c0 = c0_start;
    if (!gronwall_check(rows, default_c_star(k, s, c0), initial).pass) return c0;
    double last_pass = c0;
    for (int iter = 0; iter < 60; ++iter) {
        c0 *= 0.5;
        if (!gronwall_check(rows, default_c_star(k, s, c0), initial).pass) break;
        last_pass = c0;
    }
    return last_pass;
}

}  // namespace alignsim
