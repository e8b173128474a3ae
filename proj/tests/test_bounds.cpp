#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "ofsafe/bounds.hpp"

using namespace ofsafe;

namespace {

// hand-derived double-integrator constants (raw grid maxima)
ConstantsReport raw_constants() {
    ConstantsReport c;
    c.M1 = 0.0;
    c.M2 = 1.0;
    c.gamma = 0.2 * std::sqrt(2.0);
    c.L = 1.0;
    c.C1 = std::sqrt(10.0);
    c.k = 10.0;
    c.x_max = 25.0;
    c.safety_factor = 1.0;
    return c;
}

// the same constants with the 1.1 sampling safety factor applied
ConstantsReport inflated_constants() {
    ConstantsReport c = raw_constants();
    c.gamma *= 1.1;
    c.C1 *= 1.1;
    c.safety_factor = 1.1;
    return c;
}

Matrix preset_q() { return Matrix(2, 2, {3.5, 2.5, 2.5, 15.0}); }

const double kT1 = 24.742046; // (lmax(Q)/2) ln(lmax(Q) 25 / 16)

} // namespace

TEST_CASE("transient time of the boundary layer") {
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    // eps lmax(P) ln(lmax k^2 / (rho eps^{2n})) with rho defaulted to lmax(P)
    CHECK(transient_time(d, 10.0, 2) == doctest::Approx(0.262695).epsilon(1e-4));
    // the paper's reported 0.0608 s depends on unpublished rho and k; the
    // implemented estimate agrees within a factor of five
    double ratio = transient_time(d, 10.0, 2) / 0.0608;
    CHECK(ratio < 5.0);
    CHECK(ratio > 1.0 / 5.0);

    double prev = 1e300;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        ObserverDesign de = build_observer({4.0, 4.0}, eps);
        double t = transient_time(de, 10.0, 2);
        CHECK(t < prev);
        CHECK(t > 0.0);
        prev = t;
    }
    CHECK(prev < 0.01);

    CHECK(transient_time(d, 0.0, 2) == 0.0); // starts inside Omega_rho
}

TEST_CASE("transient distance bound (first window)") {
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    ConstantsReport c = raw_constants();
    // sqrt(10) * lmin(P) * ln(1e10) * 0.01
    CHECK(bound_transient(0.01, c, d, 2) == doctest::Approx(0.102217).epsilon(1e-4));

    ConstantsReport zero = c;
    zero.C1 = 0.0;
    CHECK(bound_transient(0.01, zero, d, 2) == 0.0);

    ConstantsReport small_k = c;
    small_k.k = 0.5; // eps^{2n} >= k^2 at eps = 1
    CHECK(bound_transient(1.0, small_k, d, 2) == 0.0);

    double prev = 1e300;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        double b = bound_transient(eps, c, d, 2);
        CHECK(b < prev);
        CHECK(b > 0.0);
        prev = b;
    }
}

TEST_CASE("general main bound reduces to four transients at C2 = 1") {
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    ConstantsReport c = inflated_constants();
    double t_eps = transient_time(d, c.k, 2);
    double general = bound_main_general(0.01, t_eps + 1e-14, c, d, 2);
    double four_transients = 4.0 * bound_transient(0.01, c, d, 2);
    CHECK(std::abs(general - four_transients) <= 1e-12);

    // term dropout at M1 = M2 = 0
    ConstantsReport degen = c;
    degen.M1 = 0.0;
    degen.M2 = 0.0;
    double T = 3.0;
    double expected = 4.0 * degen.C1 * d.lambda_min_P * std::log(1e10) * std::exp(T - t_eps) * 0.01;
    CHECK(bound_main_general(0.01, T, degen, d, 2) == doctest::Approx(expected).epsilon(1e-12));

    CHECK_THROWS_AS(bound_main_general(0.01, t_eps / 2.0, c, d, 2), Error);
}

TEST_CASE("stable main bound and its relation to the general one") {
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    ConstantsReport c = inflated_constants();
    LinearizingController ctrl = controller_from_beta(0.2, 2);

    double stable = bound_main_stable(0.01, kT1, c, ctrl, d, 2);
    CHECK(stable == doctest::Approx(0.163247).epsilon(1e-3));
    CHECK(stable > 0.05);
    CHECK(stable < 0.5);

    // the exponential C2 = e^{T - T(eps)} makes the general bound larger by
    // many orders of magnitude at this horizon
    double general = bound_main_general(0.01, kT1, c, ctrl.K.empty() ? d : d, 2);
    CHECK(general / stable > 1e6);

    // second term alone when C1 = 0
    ConstantsReport c1zero = c;
    c1zero.C1 = 0.0;
    double t_eps = transient_time(d, c.k, 2);
    double expected = (kT1 - t_eps) * c.M2 * c.gamma * 1.0 * 0.01;
    CHECK(bound_main_stable(0.01, kT1, c1zero, ctrl, d, 2) == doctest::Approx(expected).epsilon(1e-12));

    LinearizingController unstable;
    unstable.K = {0.0, 0.0};
    CHECK_THROWS_AS(bound_main_stable(0.01, kT1, c, unstable, d, 2), Error);

    // stable refinement never exceeds the general bound for the preset
    for (double eps : {1e-2, 1e-3})
        CHECK(bound_main_stable(eps, kT1, c, ctrl, d, 2) <= bound_main_general(eps, kT1, c, d, 2));
}

TEST_CASE("literal C2hat upper-bounds the direct matrix-exponential norm") {
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    ConstantsReport c = inflated_constants();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    double direct = bound_main_stable(0.01, kT1, c, ctrl, d, 2, false);
    double literal = bound_main_stable(0.01, kT1, c, ctrl, d, 2, true);
    CHECK(std::isfinite(literal));
    CHECK(literal >= direct - 1e-12);
}

TEST_CASE("xi_for_epsilon assembles the full report") {
    ObserverDesign d01 = build_observer({4.0, 4.0}, 0.01);
    ConstantsReport c = inflated_constants();
    LinearizingController ctrl = controller_from_beta(0.2, 2);

    BoundReport r01 = xi_for_epsilon(0.01, kT1, c, ctrl, d01, BoundMode::Stable);
    CHECK(r01.xi == doctest::Approx(0.163247).epsilon(1e-3));
    CHECK(r01.xi == std::max(r01.xi_transient, r01.xi_main));
    CHECK(r01.T_eps <= r01.T);
    CHECK(r01.caps.eps_bar == std::numeric_limits<double>::infinity()); // M1 = 0
    CHECK(r01.rho == doctest::Approx(d01.lambda_max_P));

    BoundReport r001 = xi_for_epsilon(0.001, kT1, c, ctrl, build_observer({4.0, 4.0}, 0.001),
                                      BoundMode::Stable);
    CHECK(r001.xi == doctest::Approx(0.019832).epsilon(1e-3));
    CHECK(r001.xi < r01.xi);
    double ratio = r001.xi / r01.xi;
    CHECK(ratio > 0.08);
    CHECK(ratio < 0.25);

    // strictly decreasing along the epsilon sequence
    double prev = 1e300;
    for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
        double xi = xi_for_epsilon(eps, kT1, c, ctrl, build_observer({4.0, 4.0}, eps),
                                   BoundMode::Stable)
                        .xi;
        CHECK(xi < prev);
        prev = xi;
    }
}

TEST_CASE("cap violations are rejected") {
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    LinearizingController ctrl = controller_from_beta(0.2, 2);

    // a large M1 makes eps_bar binding
    ConstantsReport stiff = inflated_constants();
    stiff.M1 = 100.0; // eps_bar = 1/(4*100*lmax(P)) ~ 2.19e-3
    CHECK_THROWS_AS(xi_for_epsilon(0.01, kT1, stiff, ctrl, d, BoundMode::Stable), Error);
    try {
        xi_for_epsilon(0.01, kT1, stiff, ctrl, d, BoundMode::Stable);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CapViolation);
    }

    // with the Q/c context the preset epsilon = 0.01 violates eps3
    ConstantsReport c = raw_constants();
    QcContext qc{preset_q(), 16.0};
    CHECK_THROWS_AS(xi_for_epsilon(0.01, kT1, c, ctrl, d, BoundMode::Stable, qc), Error);
    CHECK_NOTHROW(xi_for_epsilon(0.004, kT1, c, ctrl, d, BoundMode::Stable, qc));
}

TEST_CASE("epsilon_for_xi searches the feasible range") {
    ConstantsReport c = inflated_constants();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);

    // a huge target is feasible at the scan maximum
    CHECK(epsilon_for_xi(1e9, kT1, c, ctrl, d, BoundMode::Stable) == doctest::Approx(1.0));

    // the paper's delta pairs with an epsilon near 0.01
    double eps = epsilon_for_xi(0.1768, kT1, c, ctrl, d, BoundMode::Stable);
    CHECK(eps > 0.01 / 3.0);
    CHECK(eps < 0.01 * 3.0);

    // round trip: the found epsilon meets its target
    std::mt19937 rng(71);
    std::uniform_real_distribution<double> u(std::log(0.01), std::log(2.0));
    for (int trial = 0; trial < 10; ++trial) {
        double target = std::exp(u(rng));
        double e = epsilon_for_xi(target, kT1, c, ctrl, d, BoundMode::Stable);
        double xi = xi_for_epsilon(e, kT1, c, ctrl, build_observer({4.0, 4.0}, e), BoundMode::Stable).xi;
        CHECK(xi <= target * (1.0 + 1e-9));
    }

    CHECK_THROWS_AS(epsilon_for_xi(1e-30, kT1, c, ctrl, d, BoundMode::Stable), Error);
    try {
        epsilon_for_xi(1e-30, kT1, c, ctrl, d, BoundMode::Stable);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Infeasible);
    }
}

TEST_CASE("epsilon caps for the preset") {
    ConstantsReport c = raw_constants();
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    LinearizingController ctrl = controller_from_beta(0.2, 2);

    EpsCaps caps = epsilon_caps(c, d, preset_q(), 16.0, ctrl);
    CHECK(std::isinf(caps.eps_bar)); // M1 = 0 documented convention
    CHECK(c.omega_boundary_min_sq == doctest::Approx(1.030930).epsilon(1e-4));
    CHECK(caps.eps3 == doctest::Approx(0.004697).epsilon(1e-3));
    CHECK(caps.eps4 == doctest::Approx(0.057825).epsilon(1e-3));
    CHECK(caps.eps_hat <= caps.eps_bar);
    CHECK(caps.eps_hat <= caps.eps3);
    CHECK(caps.eps_hat <= caps.eps4);
    CHECK(caps.eps_hat == doctest::Approx(caps.eps3));
}

TEST_CASE("T1 horizon formula") {
    Matrix q = preset_q();
    CHECK(t1_horizon(q, 16.0, 25.0) == doctest::Approx(kT1).epsilon(1e-5));
    CHECK(t1_horizon(q, 16.0, 25.0) == doctest::Approx(24.74).epsilon(0.002));

    // x(0) already inside Omega_c
    CHECK(t1_horizon(q, 16.0, 16.0 / 15.52) == 0.0);

    // larger c shortens the horizon
    CHECK(t1_horizon(q, 32.0, 25.0) < t1_horizon(q, 16.0, 25.0));
    CHECK_THROWS_AS(t1_horizon(q, 0.0, 25.0), Error);
}

TEST_CASE("largest_c bisection on synthetic fields") {
    Grid g;
    g.axes = {GridAxis{-6.0, 6.0, 81}, GridAxis{-4.5, 4.5, 81}};
    Matrix q = Matrix::identity(2);

    // Delta covering the whole grid: c grows to the largest sampled level
    LevelSetField whole{g, std::vector<double>(g.size(), 1.0)};
    CHECK(largest_c(q, whole) == doctest::Approx(36.0 + 20.25).epsilon(1e-6));

    // Delta = the ellipse x^T Q x < 9 itself
    LevelSetField ell{g, std::vector<double>(g.size())};
    Vec x(2);
    for (std::size_t i = 0; i < ell.v.size(); ++i) {
        g.node(i, x);
        ell.v[i] = 9.0 - dot(x, mat_vec(q, x));
    }
    double c = largest_c(q, ell);
    CHECK(c == doctest::Approx(9.0).epsilon(2e-2));
    CHECK(contains(QuadraticSet{q, c}, ell));

    LevelSetField none{g, std::vector<double>(g.size(), -1.0)};
    CHECK_THROWS_AS(largest_c(q, none), Error);
}
