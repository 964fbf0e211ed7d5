#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "alignsim/particles.hpp"
#include "alignsim/rng.hpp"

using namespace alignsim;

namespace {

ParticleState make_state(int dim, std::vector<double> pos, std::vector<double> vel,
                         std::vector<double> w = {}) {
    ParticleState s;
    s.measure.dim = dim;
    s.measure.points = std::move(pos);
    s.velocities = std::move(vel);
    int n = static_cast<int>(s.measure.points.size()) / dim;
    if (w.empty()) w.assign(static_cast<std::size_t>(n), 1.0 / n);
    s.measure.weights = std::move(w);
    return s;
}

ParticleState random_state(SplitMix64& rng, int dim, int n) {
    std::vector<double> pos, vel, w;
    double tot = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int d = 0; d < dim; ++d) {
            pos.push_back(rng.uniform(-1.5, 1.5));
            vel.push_back(rng.uniform(-1.0, 1.0));
        }
        double m = rng.uniform(0.2, 1.0);
        w.push_back(m);
        tot += m;
    }
    for (double& m : w) m /= tot;
    return make_state(dim, pos, vel, w);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

double mean_velocity_1d(const ParticleState& s) {
    double m = 0.0;
    for (int i = 0; i < s.size(); ++i) m += s.measure.weights[i] * s.velocities[i];
    return m;
}

}  // namespace

TEST_CASE("flocked states have zero alignment force") {
    auto k = make_builtin("smoothed_norm", {0.5}, 2);
    SplitMix64 rng(71);
    auto s = random_state(rng, 2, 9);
    for (int i = 0; i < s.size(); ++i) {
        s.velocities[2 * i] = 0.7;
        s.velocities[2 * i + 1] = -0.2;
    }
    auto a = rhs_u(s, k);
    for (double v : a) CHECK(v == 0.0);
}

TEST_CASE("quadratic kernel force telescopes to mean reversion") {
    auto k = make_builtin("quadratic", {}, 1);
    SplitMix64 rng(72);
    auto s = random_state(rng, 1, 11);
    double ubar = mean_velocity_1d(s);
    auto a = rhs_u(s, k);
    for (int i = 0; i < s.size(); ++i)
        CHECK(std::abs(a[i] - (-(s.velocities[i] - ubar))) <= 1e-14);
}

TEST_CASE("two-body acceleration hand value") {
    auto k = make_builtin("quadratic", {}, 1);
    auto s = make_state(1, {-0.5, 0.5}, {1.0, -1.0}, {0.5, 0.5});
    auto a = rhs_u(s, k);
    CHECK(a[0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("offsets for the quadratic kernel are u + x - centre of mass") {
    auto k = make_builtin("quadratic", {}, 1);
    SplitMix64 rng(73);
    auto s = random_state(rng, 1, 7);
    double xbar = 0.0;
    for (int i = 0; i < s.size(); ++i) xbar += s.measure.weights[i] * s.measure.points[i];
    auto w = offsets(s, k);
    for (int i = 0; i < s.size(); ++i)
        CHECK(std::abs(w[i] - (s.velocities[i] + s.measure.points[i] - xbar)) <= 1e-14);
}

TEST_CASE("a flocked step translates rigidly") {
    auto k = make_builtin("smoothed_norm", {1.0}, 1);
    auto s = make_state(1, {-1.0, 0.0, 2.0}, {0.5, 0.5, 0.5});
    auto next = step(s, k, 0.25, Scheme::rk4);
    CHECK(next.time == doctest::Approx(0.25));
    for (int i = 0; i < 3; ++i) {
        CHECK(next.velocities[i] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(next.measure.points[i] ==
              doctest::Approx(s.measure.points[i] + 0.5 * 0.25).epsilon(1e-15));
        CHECK(next.measure.weights[i] == s.measure.weights[i]);
    }
}

TEST_CASE("a resting state stays put") {
    auto k = make_builtin("gaussian_bump", {1.0}, 2);
    auto s = make_state(2, {0.0, 0.0, 1.0, -1.0}, {0.0, 0.0, 0.0, 0.0});
    auto next = step(s, k, 0.1, Scheme::euler);
    CHECK(max_abs_diff(next.measure.points, s.measure.points) == 0.0);
    CHECK(max_abs_diff(next.velocities, s.velocities) == 0.0);
}

TEST_CASE("step rejects dt outside the stability window") {
    auto k = make_builtin("quadratic", {}, 1);  // hess sup norm 1
    auto s = make_state(1, {0.0, 1.0}, {1.0, -1.0});
    CHECK_THROWS_AS(step(s, k, 0.6, Scheme::rk4), ConfigError);
    CHECK_THROWS_AS(step(s, k, 0.0, Scheme::rk4), ConfigError);
    CHECK_THROWS_AS(step(s, k, -0.1, Scheme::euler), ConfigError);
    CHECK_NOTHROW(step(s, k, 0.5, Scheme::rk4));
}

TEST_CASE("non-finite states are reported with the offending atom") {
    auto k = make_builtin("quadratic", {}, 1);
    auto lone = make_state(1, {0.5}, {std::nan("")}, {1.0});
    try {
        step(lone, k, 0.1, Scheme::rk4);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("atom 0") != std::string::npos);
    }
    // A NaN anywhere poisons the coupled step; the scan names the first hit.
    auto s = make_state(1, {0.0, 1.0, 2.0}, {0.0, std::nan(""), 0.0});
    CHECK_THROWS_AS(step(s, k, 0.1, Scheme::rk4), NumericalError);
}

TEST_CASE("mismatched state shapes are rejected") {
    auto k1 = make_builtin("quadratic", {}, 1);
    auto k2 = make_builtin("quadratic", {}, 2);
    auto s = make_state(1, {0.0, 1.0}, {0.0, 0.0});
    CHECK_THROWS_AS(rhs_u(s, k2), ConfigError);
    s.velocities.push_back(0.0);
    CHECK_THROWS_AS(rhs_u(s, k1), ConfigError);
}

TEST_CASE("euler error shrinks linearly against rk4") {
    auto k = make_builtin("smoothed_norm", {0.5}, 1);
    SplitMix64 rng(74);
    auto s0 = random_state(rng, 1, 6);
    auto gap_at = [&](double dt) {
        auto a = simulate(s0, k, 0.5, dt, Formulation::velocity_u, 1 << 20, Scheme::euler);
        auto b = simulate(s0, k, 0.5, dt, Formulation::velocity_u, 1 << 20, Scheme::rk4);
        return max_abs_diff(a.states.back().velocities, b.states.back().velocities);
    };
    double g1 = gap_at(1e-2);
    double g2 = gap_at(5e-3);
    CHECK(g1 / g2 == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("a single atom moves in a straight line under both formulations") {
    auto k = make_builtin("gaussian_bump", {0.7}, 2);
    auto s = make_state(2, {0.25, -0.5}, {1.5, 0.5}, {1.0});
    for (auto form : {Formulation::velocity_u, Formulation::offset_w}) {
        auto traj = simulate(s, k, 1.0, 1e-3, form, 1000);
        const auto& fin = traj.states.back();
        CHECK(std::abs(fin.measure.points[0] - (0.25 + 1.5)) <= 1e-12);
        CHECK(std::abs(fin.measure.points[1] - (-0.5 + 0.5)) <= 1e-12);
        CHECK(std::abs(fin.velocities[0] - 1.5) <= 1e-12);
        CHECK(std::abs(fin.velocities[1] - 0.5) <= 1e-12);
    }
}

TEST_CASE("quadratic kernel relaxation matches the exponential closed form") {
    auto k = make_builtin("quadratic", {}, 1);
    SplitMix64 rng(75);
    auto s0 = random_state(rng, 1, 6);
    double ubar = mean_velocity_1d(s0);

    SUBCASE("velocities at t = 1") {
        auto traj = simulate(s0, k, 1.0, 1e-3, Formulation::velocity_u, 1000);
        const auto& fin = traj.states.back();
        for (int i = 0; i < fin.size(); ++i) {
            double expect = ubar + (s0.velocities[i] - ubar) * std::exp(-1.0);
            CHECK(std::abs(fin.velocities[i] - expect) <= 1e-10);
        }
    }

    SUBCASE("velocities at t = 5") {
        auto traj = simulate(s0, k, 5.0, 1e-3, Formulation::velocity_u, 5000);
        const auto& fin = traj.states.back();
        for (int i = 0; i < fin.size(); ++i) {
            double expect = ubar + (s0.velocities[i] - ubar) * std::exp(-5.0);
            CHECK(std::abs(fin.velocities[i] - expect) <= 1e-9);
        }
    }

    SUBCASE("positions integrate the relaxed velocity") {
        auto traj = simulate(s0, k, 1.0, 1e-3, Formulation::velocity_u, 1000);
        const auto& fin = traj.states.back();
        for (int i = 0; i < fin.size(); ++i) {
            double expect = s0.measure.points[i] + ubar +
                            (s0.velocities[i] - ubar) * (1.0 - std::exp(-1.0));
            CHECK(std::abs(fin.measure.points[i] - expect) <= 1e-9);
        }
    }
}

TEST_CASE("offset transport reproduces the direct velocity integration") {
    auto k = make_builtin("quadratic", {}, 1);
    SplitMix64 rng(76);
    auto s0 = random_state(rng, 1, 8);
    auto u_run = simulate(s0, k, 1.0, 1e-3, Formulation::velocity_u, 1000);
    auto w_run = simulate(s0, k, 1.0, 1e-3, Formulation::offset_w, 1000);
    CHECK(max_abs_diff(u_run.states.back().measure.points,
                       w_run.states.back().measure.points) <= 1e-6);
    CHECK(max_abs_diff(u_run.states.back().velocities,
                       w_run.states.back().velocities) <= 1e-6);
}

TEST_CASE("the transported offsets stay constant along trajectories") {
    SplitMix64 rng(77);
    for (const char* name : {"quadratic", "smoothed_norm"}) {
        auto k = name == std::string("quadratic") ? make_builtin(name, {}, 1)
                                                  : make_builtin(name, {0.5}, 1);
        auto s0 = random_state(rng, 1, 8);
        auto traj = simulate(s0, k, 1.0, 1e-3, Formulation::velocity_u, 50);
        double worst = 0.0;
        for (const auto& r : traj.records) worst = std::max(worst, r.w_drift);
        CHECK(worst <= 1e-8);
    }
}

TEST_CASE("even kernels conserve momentum over long runs") {
    SplitMix64 rng(78);
    auto k = make_builtin("smoothed_norm", {0.8}, 1);
    auto s0 = random_state(rng, 1, 8);
    auto traj = simulate(s0, k, 10.0, 1e-3, Formulation::velocity_u, 500);
    double p0 = traj.records.front().momentum[0];
    double worst = 0.0;
    for (const auto& r : traj.records) worst = std::max(worst, std::abs(r.momentum[0] - p0));
    CHECK(worst <= 1e-8);
}

TEST_CASE("a skew kernel does not conserve momentum") {
    // Negative control: the conservation test must be able to fail.
    std::vector<double> params = {-4.0, 4.0};
    for (int i = 0; i <= 128; ++i) {
        double x = -4.0 + 8.0 * i / 128.0;
        params.push_back(1.0 + 0.5 * std::tanh(2.0 * x));
    }
    auto k = make_builtin("custom_table", params, 1);
    SplitMix64 rng(79);
    auto s0 = random_state(rng, 1, 8);
    auto traj = simulate(s0, k, 2.0, 1e-3, Formulation::velocity_u, 200);
    double p0 = traj.records.front().momentum[0];
    double worst = 0.0;
    for (const auto& r : traj.records) worst = std::max(worst, std::abs(r.momentum[0] - p0));
    CHECK(worst > 1e-6);
}

TEST_CASE("mass is carried through untouched") {
    auto k = make_builtin("gaussian_bump", {1.0}, 1);
    SplitMix64 rng(80);
    auto s0 = random_state(rng, 1, 10);
    auto traj = simulate(s0, k, 1.0, 2e-3, Formulation::velocity_u, 100);
    for (const auto& r : traj.records) CHECK(r.mass == traj.records.front().mass);
    CHECK(traj.states.back().measure.weights == s0.measure.weights);
}

TEST_CASE("kinetic energy decays monotonically for nonnegative kernels") {
    SplitMix64 rng(81);
    for (int which = 0; which < 2; ++which) {
        auto k = which == 0 ? make_builtin("quadratic", {}, 1)
                            : make_builtin("smoothed_norm", {0.5}, 1);
        auto s0 = random_state(rng, 1, 8);
        auto traj = simulate(s0, k, 1.0, 1e-3, Formulation::velocity_u, 20);
        for (std::size_t i = 1; i < traj.records.size(); ++i)
            CHECK(traj.records[i].energy <= traj.records[i - 1].energy + 1e-12);
    }
}

TEST_CASE("energy plus integrated dissipation is bounded by the start") {
    SplitMix64 rng(82);
    for (int which = 0; which < 2; ++which) {
        auto k = which == 0 ? make_builtin("quadratic", {}, 1)
                            : make_builtin("smoothed_norm", {0.5}, 2);
        auto s0 = random_state(rng, which == 0 ? 1 : 2, 8);
        // Per-step records: the trapezoid quadrature of D must resolve the
        // decay or its own convexity bias eats the tolerance.
        auto traj = simulate(s0, k, 1.0, 1e-3, Formulation::velocity_u, 1);
        double acc = 0.0;
        const auto& recs = traj.records;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            if (i > 0) {
                double h = recs[i].time - recs[i - 1].time;
                acc += 0.5 * h * (recs[i].dissipation + recs[i - 1].dissipation);
            }
            CHECK(recs[i].energy + acc <= recs[0].energy * (1.0 + 1e-6));
        }
    }
}

TEST_CASE("indefinite kernels obey the exponential energy envelope") {
    auto k = make_builtin("gaussian_bump", {1.0}, 1);
    CHECK_FALSE(k.psd);
    SplitMix64 rng(83);
    auto s0 = random_state(rng, 1, 8);
    auto traj = simulate(s0, k, 1.0, 1e-3, Formulation::velocity_u, 25);
    double e0 = traj.records.front().energy;
    for (const auto& r : traj.records) {
        double bound = std::exp(4.0 * r.time * k.hess_sup_norm) * e0 * (1.0 + 1e-6);
        CHECK(r.energy <= bound);
    }
}

TEST_CASE("diagnostics of a flocked state reduce to hand values") {
    auto k = make_builtin("smoothed_norm", {0.5}, 2);
    auto s = make_state(2, {1.0, 0.0, 0.0, 2.0}, {0.6, -0.8, 0.6, -0.8}, {0.25, 0.75});
    auto ref = offsets(s, k);
    auto d = diagnostics(s, k, ref);
    CHECK(d.mass == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.energy == doctest::Approx(0.5).epsilon(1e-14));        // |u| = 1 everywhere
    CHECK(d.dissipation == 0.0);
    CHECK(d.momentum[0] == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(d.momentum[1] == doctest::Approx(-0.8).epsilon(1e-14));
    CHECK(d.second_moment == doctest::Approx(0.25 * 1.0 + 0.75 * 4.0).epsilon(1e-14));
    CHECK(d.first_moment_m == doctest::Approx(0.25 * 1.0 + 0.75 * 2.0).epsilon(1e-14));
    CHECK(d.mv_functional == doctest::Approx(mv_entropy(1.0)).epsilon(1e-14));
    CHECK(d.w_drift == 0.0);
    CHECK(d.trace_mu == 0.0);
    CHECK(d.viscous_dissipation == 0.0);
    CHECK(d.bd_functional == 0.0);
}

TEST_CASE("two-body dissipation hand value") {
    auto k = make_builtin("quadratic", {}, 1);
    auto s = make_state(1, {-0.5, 0.5}, {1.0, -1.0}, {0.5, 0.5});
    auto ref = offsets(s, k);
    auto d = diagnostics(s, k, ref);
    // 1/2 * 2 * (1/2 * 1/2) * (2)^2 = 1
    CHECK(d.dissipation == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.energy == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("higher-integrability weight endpoints") {
    CHECK(mv_entropy(0.0) == 0.0);
    CHECK(mv_entropy(1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(mv_entropy(2.0) == doctest::Approx(2.5 * std::log(5.0)).epsilon(1e-15));
}

TEST_CASE("central-difference energy residual tracks the dissipation") {
    SplitMix64 rng(84);
    auto k = make_builtin("quadratic", {}, 1);
    auto s0 = random_state(rng, 1, 16);
    auto traj = simulate(s0, k, 2.0, 1e-3, Formulation::velocity_u, 1);
    auto res = energy_identity_residual(traj);
    double worst = *std::max_element(res.begin(), res.end());
    CHECK(worst <= 1e-6);
}

TEST_CASE("the residual of a flocked run is identically zero") {
    auto k = make_builtin("smoothed_norm", {0.5}, 1);
    auto s = make_state(1, {-1.0, 0.0, 1.0}, {0.3, 0.3, 0.3});
    auto traj = simulate(s, k, 0.1, 1e-3, Formulation::velocity_u, 10);
    auto res = energy_identity_residual(traj);
    for (double r : res) CHECK(r <= 1e-15);
}

TEST_CASE("the residual needs at least three records") {
    auto k = make_builtin("quadratic", {}, 1);
    auto s = make_state(1, {0.0, 1.0}, {1.0, -1.0});
    auto traj = simulate(s, k, 0.01, 1e-2, Formulation::velocity_u, 1);
    CHECK(traj.records.size() == 2);
    CHECK_THROWS_AS(energy_identity_residual(traj), ConfigError);
}

TEST_CASE("a coarse euler run breaks the energy identity") {
    // Negative control: the identity holds for the dynamics, not for any
    // numbers a solver happens to emit.
    SplitMix64 rng(85);
    auto k = make_builtin("quadratic", {}, 1);
    auto s0 = random_state(rng, 1, 16);
    auto traj = simulate(s0, k, 2.0, 0.2, Formulation::velocity_u, 1, Scheme::euler);
    auto res = energy_identity_residual(traj);
    double worst = *std::max_element(res.begin(), res.end());
    CHECK(worst > 1e-4);
}

TEST_CASE("record cadence and endpoints") {
    auto k = make_builtin("quadratic", {}, 1);
    auto s = make_state(1, {0.0, 1.0}, {0.4, -0.4});
    auto traj = simulate(s, k, 1.0, 1e-2, Formulation::velocity_u, 30);
    // 100 steps: records at 0, 30, 60, 90 and the forced final step.
    REQUIRE(traj.records.size() == 5);
    CHECK(traj.records[0].time == 0.0);
    CHECK(traj.records[3].time == doctest::Approx(0.9));
    CHECK(traj.records.back().time == doctest::Approx(1.0));
    CHECK(traj.states.size() == traj.records.size());
}
