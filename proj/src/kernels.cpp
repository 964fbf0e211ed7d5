#include "alignsim/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "alignsim/common.hpp"
#include "alignsim/rng.hpp"

namespace alignsim {

namespace {

double sq_norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

// Tabulated K'' on uniform nodes with cubic Hermite segments. Slopes come
// from 4th-order centered stencils (one-sided near the ends), so the
// interpolant tracks a smooth source to O(h^4); K' and K are exact integrals
// of the piecewise cubic with K'(0) = K(0) = 0.
struct HessTable {
    double x0 = 0.0, h = 0.0;
    int n = 0;            // node count
    bool mirrored = false;  // even layout: table covers [0, xmax], reflected
    std::vector<double> v, d;    // node values and slopes
    std::vector<double> i1, i2;  // prefix integrals of K'' and of K' at nodes
    double ref1 = 0.0, ref2 = 0.0;  // I1(0), I2(0) for the full-range layout

    double xmax() const { return x0 + h * (n - 1); }

    void build(double x0_, double h_, std::vector<double> values, bool mirrored_) {
        x0 = x0_;
        h = h_;
        v = std::move(values);
        n = static_cast<int>(v.size());
        mirrored = mirrored_;
        d.assign(n, 0.0);
        for (int i = 0; i < n; ++i) {
            auto at = [&](int j) { return v[std::clamp(j, 0, n - 1)]; };
            if (i >= 2 && i <= n - 3) {
                d[i] = (-at(i + 2) + 8 * at(i + 1) - 8 * at(i - 1) + at(i - 2)) / (12 * h);
            } else if (i == 0) {
                d[i] = (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h);
            } else if (i == n - 1) {
                d[i] = (3 * at(n - 1) - 4 * at(n - 2) + at(n - 3)) / (2 * h);
            } else {
                d[i] = (at(i + 1) - at(i - 1)) / (2 * h);
            }
        }
        i1.assign(n, 0.0);
        i2.assign(n, 0.0);
        for (int s = 0; s + 1 < n; ++s) {
            i1[s + 1] = i1[s] + seg_int1(s, 1.0);
            i2[s + 1] = i2[s] + h * i1[s] + seg_int2(s, 1.0);
        }
        if (!mirrored) {
            double t0 = -x0 / h;  // position of x = 0 in node units
            int s = std::clamp(static_cast<int>(t0), 0, n - 2);
            double t = t0 - s;
            ref1 = i1[s] + seg_int1(s, t);
            ref2 = i2[s] + (t * h) * i1[s] + seg_int2(s, t);
        }
    }

    // Hermite cubic on segment s in local t in [0,1].
    double seg_val(int s, double t) const {
        double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
        double h10 = t * (1 - t) * (1 - t);
        double h01 = t * t * (3 - 2 * t);
        double h11 = t * t * (t - 1);
        return h00 * v[s] + h10 * h * d[s] + h01 * v[s + 1] + h11 * h * d[s + 1];
    }
    double seg_deriv(int s, double t) const {
        double g00 = 6 * t * t - 6 * t;
        double g10 = 3 * t * t - 4 * t + 1;
        double g01 = 6 * t - 6 * t * t;
        double g11 = 3 * t * t - 2 * t;
        return (g00 * v[s] + g01 * v[s + 1]) / h + g10 * d[s] + g11 * d[s + 1];
    }
    // integral of seg_val over [0, t], scaled by h (true x-integral)
    double seg_int1(int s, double t) const {
        double H00 = t - t * t * t + t * t * t * t / 2.0;
        double H10 = t * t / 2 - 2 * t * t * t / 3 + t * t * t * t / 4;
        double H01 = t * t * t - t * t * t * t / 2.0;
        double H11 = t * t * t * t / 4 - t * t * t / 3;
        return h * (H00 * v[s] + H10 * h * d[s] + H01 * v[s + 1] + H11 * h * d[s + 1]);
    }
    // double integral: integral over [0,t] of integral of seg_val, x-scaled
    double seg_int2(int s, double t) const {
        double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
        double G00 = t2 / 2 - t4 / 4 + t5 / 10;
        double G10 = t3 / 6 - t4 / 6 + t5 / 20;
        double G01 = t4 / 4 - t5 / 10;
        double G11 = t5 / 20 - t4 / 12;
        return h * h * (G00 * v[s] + G10 * h * d[s] + G01 * v[s + 1] + G11 * h * d[s + 1]);
    }

    // K'' at x >= x0 domain coordinate; clamps to end values outside range.
    double eval_raw(double x) const {
        if (x <= x0) return v[0];
        if (x >= xmax()) return v[n - 1];
        double t0 = (x - x0) / h;
        int s = std::min(static_cast<int>(t0), n - 2);
        return seg_val(s, t0 - s);
    }
    double deriv_raw(double x) const {
        if (x <= x0 || x >= xmax()) return 0.0;
        double t0 = (x - x0) / h;
        int s = std::min(static_cast<int>(t0), n - 2);
        return seg_deriv(s, t0 - s);
    }
    // integral of K'' from x0 to x (with end-value continuation)
    double int1_raw(double x) const {
        if (x <= x0) return v[0] * (x - x0);
        if (x >= xmax()) return i1[n - 1] + v[n - 1] * (x - xmax());
        double t0 = (x - x0) / h;
        int s = std::min(static_cast<int>(t0), n - 2);
        return i1[s] + seg_int1(s, t0 - s);
    }
    double int2_raw(double x) const {
        if (x <= x0) return v[0] * (x - x0) * (x - x0) / 2.0;
        if (x >= xmax()) {
            double e = x - xmax();
            return i2[n - 1] + e * i1[n - 1] + v[n - 1] * e * e / 2.0;
        }
        double t0 = (x - x0) / h;
        int s = std::min(static_cast<int>(t0), n - 2);
        double t = t0 - s;
        return i2[s] + (t * h) * i1[s] + seg_int2(s, t);
    }

    double hess(double x) const { return mirrored ? eval_raw(std::abs(x)) : eval_raw(x); }
    double hess_deriv(double x) const {
        if (!mirrored) return deriv_raw(x);
        return x >= 0 ? deriv_raw(x) : -deriv_raw(-x);
    }
    // K'(x) = integral_0^x K''
    double grad(double x) const {
        if (mirrored) {
            double g = int1_raw(std::abs(x));
            return x >= 0 ? g : -g;
        }
        return int1_raw(x) - ref1;
    }
    // K(x) = integral_0^x K' = (I2(x) - I2(0)) - I1(0) x with I1, I2 anchored
    // at x0
    double value(double x) const {
        if (mirrored) return int2_raw(std::abs(x));
        return int2_raw(x) - ref2 - ref1 * x;
    }
};

Kernel make_quadratic(int dim) {
    Kernel k;
    k.dim = dim;
    k.id = "quadratic";
    k.value = [](std::span<const double> x) { return 0.5 * sq_norm(x); };
    k.grad = [](std::span<const double> x, std::span<double> out) {
        std::copy(x.begin(), x.end(), out.begin());
    };
    k.hess = [dim](std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (int i = 0; i < dim; ++i) out[i * dim + i] = 1.0;
    };
    k.hess_sup_norm = 1.0;
    k.hess_lipschitz = 0.0;
    k.even = true;
    k.psd = true;
    return k;
}

Kernel make_smoothed_norm(double eps, int dim) {
    if (!(eps > 0.0)) throw ConfigError("smoothed_norm: eps must be > 0");
    Kernel k;
    k.dim = dim;
    k.id = "smoothed_norm";
    k.value = [eps](std::span<const double> x) { return std::sqrt(eps * eps + sq_norm(x)); };
    k.grad = [eps](std::span<const double> x, std::span<double> out) {
        double s = std::sqrt(eps * eps + sq_norm(x));
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / s;
    };
    k.hess = [eps, dim](std::span<const double> x, std::span<double> out) {
        double s2 = eps * eps + sq_norm(x);
        double s = std::sqrt(s2);
        double inv_s = 1.0 / s;
        double inv_s3 = inv_s / s2;
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
                out[i * dim + j] = (i == j ? inv_s : 0.0) - x[i] * x[j] * inv_s3;
    };
    // Eigenvalues of D2K are eps^2/s^3 (radial) and 1/s (transverse), both
    // maximal at x = 0: sup norm 1/eps. 3/eps^2 is a safe bound on the third
    // derivative tensor in any dimension (1D sharp constant ~0.86/eps^2).
    k.hess_sup_norm = 1.0 / eps;
    k.hess_lipschitz = 3.0 / (eps * eps);
    k.even = true;
    k.psd = true;
    return k;
}

Kernel make_gaussian_bump(double sigma, int dim) {
    if (!(sigma > 0.0)) throw ConfigError("gaussian_bump: sigma must be > 0");
    Kernel k;
    k.dim = dim;
    k.id = "gaussian_bump";
    double s2 = sigma * sigma;
    k.value = [s2](std::span<const double> x) { return -std::exp(-sq_norm(x) / (2 * s2)); };
    k.grad = [s2](std::span<const double> x, std::span<double> out) {
        double e = std::exp(-sq_norm(x) / (2 * s2));
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * e / s2;
    };
    k.hess = [s2, dim](std::span<const double> x, std::span<double> out) {
        double e = std::exp(-sq_norm(x) / (2 * s2));
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
                out[i * dim + j] = e * ((i == j ? 1.0 / s2 : 0.0) - x[i] * x[j] / (s2 * s2));
    };
    // Radial eigenvalue (1 - r^2/s^2) e^{...} / s^2 turns negative past r =
    // sigma: attractive-repulsive, not PSD. |eig| peaks at the origin.
    k.hess_sup_norm = 1.0 / s2;
    k.hess_lipschitz = 3.0 / (s2 * sigma);
    k.even = true;
    k.psd = false;
    return k;
}

Kernel make_custom_table(const std::vector<double>& params, int dim) {
    if (dim != 1) throw ConfigError("custom_table kernels are 1D only");
    if (params.size() < 4) throw ConfigError("custom_table: need range plus >= 2 values");
    auto table = std::make_shared<HessTable>();
    if (params[0] > 0.0) {
        double xmax = params[0];
        std::vector<double> vals(params.begin() + 1, params.end());
        double step = xmax / (static_cast<double>(vals.size()) - 1.0);
        table->build(0.0, step, std::move(vals), true);
    } else {
        double xmin = params[0], xmax = params[1];
        if (!(xmin < 0.0 && xmax > 0.0))
            throw ConfigError("custom_table: full-range layout needs xmin < 0 < xmax");
        std::vector<double> vals(params.begin() + 2, params.end());
        if (vals.size() < 2) throw ConfigError("custom_table: need >= 2 values");
        double step = (xmax - xmin) / (static_cast<double>(vals.size()) - 1.0);
        table->build(xmin, step, std::move(vals), false);
    }

    Kernel k;
    k.dim = 1;
    k.id = "custom_table";
    k.value = [table](std::span<const double> x) { return table->value(x[0]); };
    k.grad = [table](std::span<const double> x, std::span<double> out) {
        out[0] = table->grad(x[0]);
    };
    k.hess = [table](std::span<const double> x, std::span<double> out) {
        out[0] = table->hess(x[0]);
    };

    // Declared bounds and flags probed on a refinement of the node grid; the
    // interpolant is polynomial between probes so 8 subdivisions is ample.
    double sup = 0.0, lip = 0.0, vmin = 0.0;
    bool even = true;  // mirrored layout by construction; full range until falsified
    double lo = table->mirrored ? 0.0 : table->x0;
    double hi = table->xmax();
    int probes = (table->n - 1) * 8 + 1;
    for (int i = 0; i < probes; ++i) {
        double x = lo + (hi - lo) * i / (probes - 1);
        double hv = table->eval_raw(x);
        sup = std::max(sup, std::abs(hv));
        lip = std::max(lip, std::abs(table->deriv_raw(x)));
        vmin = std::min(vmin, hv);
        if (!table->mirrored) {
            double xm = -x;
            if (xm >= lo && xm <= hi && std::abs(table->hess(xm) - hv) > 1e-12 * (1 + std::abs(hv)))
                even = false;
        }
    }
    k.hess_sup_norm = sup;
    k.hess_lipschitz = lip * 1.0001 + 1e-300;  // probe grid can undershoot slightly
    k.even = even;
    k.psd = vmin >= -1e-12;
    return k;
}

}  // namespace

Kernel make_builtin(const std::string& name, const std::vector<double>& params, int dim) {
    if (dim < 1 || dim > 8) throw ConfigError("kernel dim out of range [1, 8]: " + std::to_string(dim));
    if (name == "quadratic") {
        if (!params.empty()) throw ConfigError("quadratic kernel takes no params");
        return make_quadratic(dim);
    }
    if (name == "smoothed_norm") {
        if (params.size() != 1) throw ConfigError("smoothed_norm: params = [eps]");
        return make_smoothed_norm(params[0], dim);
    }
    if (name == "gaussian_bump") {
        if (params.size() != 1) throw ConfigError("gaussian_bump: params = [sigma]");
        return make_gaussian_bump(params[0], dim);
    }
    if (name == "custom_table") return make_custom_table(params, dim);
    throw ConfigError("unknown kernel family: " + name);
}

bool ValidationReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const PropertyCheck& c) { return c.pass; });
}

double sym_spectral_norm(std::span<const double> m, int d) {
    if (d == 1) return std::abs(m[0]);
    std::vector<double> a(m.begin(), m.end());
    // cyclic Jacobi; matrices here are tiny, a fixed sweep count converges
    for (int sweep = 0; sweep < 30; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-30) break;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                double apq = a[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                double theta = (a[q * d + q] - a[p * d + p]) / (2 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1));
                double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
                for (int i = 0; i < d; ++i) {
                    double aip = a[i * d + p], aiq = a[i * d + q];
                    a[i * d + p] = c * aip - s * aiq;
                    a[i * d + q] = s * aip + c * aiq;
                }
                for (int i = 0; i < d; ++i) {
                    double api = a[p * d + i], aqi = a[q * d + i];
                    a[p * d + i] = c * api - s * aqi;
                    a[q * d + i] = s * api + c * aqi;
                }
            }
        }
    }
    double mx = 0.0;
    for (int i = 0; i < d; ++i) mx = std::max(mx, std::abs(a[i * d + i]));
    return mx;
}

ValidationReport validate(const Kernel& k, const SampleBox& box, int n_samples,
                          std::uint64_t seed) {
    const int d = k.dim;
    if (static_cast<int>(box.lo.size()) != d || static_cast<int>(box.hi.size()) != d)
        throw ConfigError("validate: box dimension mismatch");
    SplitMix64 rng(seed);

    PropertyCheck symmetry{"hessian_symmetry", true, 0.0, {}};
    PropertyCheck evenness{"evenness", true, 0.0, {}};
    PropertyCheck psd{"psd", true, 0.0, {}};
    PropertyCheck fd{"grad_hess_consistency", true, 0.0, {}};
    PropertyCheck supn{"hess_sup_norm_bound", true, 0.0, {}};
    PropertyCheck growth{"grad_growth_bound", true, 0.0, {}};

    std::vector<double> x(d), xm(d), xp(d), H(d * d), Hm(d * d), g1(d), g2(d), xi(d);
    std::vector<double> g0(d);
    std::vector<double> zero(d, 0.0);
    k.grad(zero, g0);
    double g0n = std::sqrt(sq_norm(g0));
    double growth_c = std::max(g0n, k.hess_sup_norm);

    auto record = [](PropertyCheck& c, double violation, std::span<const double> at) {
        if (violation > c.worst) {
            c.worst = violation;
            c.witness.assign(at.begin(), at.end());
        }
        if (violation > 0) c.pass = false;
    };

    const double fd_h = 1e-4, fd_tol = 1e-6;
    for (int s = 0; s < n_samples; ++s) {
        for (int i = 0; i < d; ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
        k.hess(x, H);
        double hnorm = sym_spectral_norm(H, d);

        double asym = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) asym = std::max(asym, std::abs(H[i * d + j] - H[j * d + i]));
        record(symmetry, asym - 1e-12 * std::max(hnorm, 1e-300), x);

        if (k.even) {
            for (int i = 0; i < d; ++i) xm[i] = -x[i];
            k.hess(xm, Hm);
            double diff = 0.0;
            for (int i = 0; i < d * d; ++i) diff = std::max(diff, std::abs(Hm[i] - H[i]));
            record(evenness, diff - 1e-10 * (1 + hnorm), x);
        }

        if (k.psd) {
            double nrm2 = 0.0;
            do {
                for (int i = 0; i < d; ++i) xi[i] = rng.uniform(-1.0, 1.0);
                nrm2 = sq_norm(xi);
            } while (nrm2 < 1e-8);
            double q = 0.0;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) q += xi[i] * H[i * d + j] * xi[j];
            record(psd, -q / nrm2 - 1e-10, x);
        }

        double fd_worst = 0.0;
        for (int j = 0; j < d; ++j) {
            std::copy(x.begin(), x.end(), xp.begin());
            std::copy(x.begin(), x.end(), xm.begin());
            xp[j] += fd_h;
            xm[j] -= fd_h;
            k.grad(xp, g1);
            k.grad(xm, g2);
            for (int i = 0; i < d; ++i)
                fd_worst = std::max(fd_worst, std::abs((g1[i] - g2[i]) / (2 * fd_h) - H[i * d + j]));
        }
        record(fd, fd_worst - fd_tol * (1 + hnorm), x);

        record(supn, hnorm - k.hess_sup_norm - 1e-10, x);

        k.grad(x, g1);
        double gn = std::sqrt(sq_norm(g1));
        record(growth, gn - growth_c * (1 + std::sqrt(sq_norm(x))) - 1e-10, x);
    }

    ValidationReport rep;
    rep.checks = {symmetry, evenness, psd, fd, supn, growth};
    return rep;
}

namespace {

// Atoms are visited in lexicographic (position, weight) order, not storage
// order, so relabeling the support cannot change the sum bitwise. Atoms tied
// on the full key contribute identical terms, so ties are harmless.
std::vector<int> support_order(const AtomicMeasure& mu) {
    std::vector<int> idx(mu.size());
    for (int j = 0; j < mu.size(); ++j) idx[j] = j;
    const int d = mu.dim;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        for (int c = 0; c < d; ++c) {
            double pa = mu.points[static_cast<std::size_t>(a) * d + c];
            double pb = mu.points[static_cast<std::size_t>(b) * d + c];
            if (pa != pb) return pa < pb;
        }
        return mu.weights[a] < mu.weights[b];
    });
    return idx;
}

}  // namespace

void conv_grad(const Kernel& k, const AtomicMeasure& mu, std::span<const double> x,
               std::span<double> out) {
    const int d = k.dim;
    if (mu.dim != d || static_cast<int>(x.size()) != d)
        throw ConfigError("conv_grad: dimension mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> diff(d), g(d);
    for (int j : support_order(mu)) {
        auto p = mu.point(j);
        for (int i = 0; i < d; ++i) diff[i] = x[i] - p[i];
        k.grad(diff, g);
        for (int i = 0; i < d; ++i) out[i] += mu.weights[j] * g[i];
    }
}

std::vector<double> conv_grad(const Kernel& k, const AtomicMeasure& mu,
                              std::span<const double> x) {
    std::vector<double> out(k.dim);
    conv_grad(k, mu, x, out);
    return out;
}

void conv_hess_pair(const Kernel& k, const AtomicMeasure& mu,
                    std::span<const double> velocities, std::span<const double> x,
                    std::span<const double> u_x, std::span<double> out) {
    const int d = k.dim;
    if (mu.dim != d || static_cast<int>(x.size()) != d || static_cast<int>(u_x.size()) != d)
        throw ConfigError("conv_hess_pair: dimension mismatch");
    if (static_cast<int>(velocities.size()) != mu.size() * d)
        throw ConfigError("conv_hess_pair: velocity field length mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<int> idx(mu.size());
    for (int j = 0; j < mu.size(); ++j) idx[j] = j;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        for (int c = 0; c < d; ++c) {
            double pa = mu.points[static_cast<std::size_t>(a) * d + c];
            double pb = mu.points[static_cast<std::size_t>(b) * d + c];
            if (pa != pb) return pa < pb;
        }
        if (mu.weights[a] != mu.weights[b]) return mu.weights[a] < mu.weights[b];
        for (int c = 0; c < d; ++c) {
            double va = velocities[static_cast<std::size_t>(a) * d + c];
            double vb = velocities[static_cast<std::size_t>(b) * d + c];
            if (va != vb) return va < vb;
        }
        return false;
    });
    std::vector<double> diff(d), H(d * d), du(d);
    for (int j : idx) {
        auto p = mu.point(j);
        for (int i = 0; i < d; ++i) {
            diff[i] = x[i] - p[i];
            du[i] = u_x[i] - velocities[j * d + i];
        }
        k.hess(diff, H);
        double w = mu.weights[j];
        for (int i = 0; i < d; ++i) {
            double acc = 0.0;
            for (int c = 0; c < d; ++c) acc += H[i * d + c] * du[c];
            out[i] += w * acc;
        }
    }
}

}  // namespace alignsim
