#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "ofsafe/plant.hpp"

using namespace ofsafe;

namespace {

NormalFormSystem double_integrator() {
    NormalFormSystem sys;
    sys.n = 2;
    sys.a = Expr::parse("1");
    sys.b = Expr::parse("0");
    sys.a0 = 1.0;
    return sys;
}

ConstraintSets preset_sets() { return ConstraintSets{Box{{-4.0, -3.0}, {4.0, 3.0}}, 1.0}; }

} // namespace

TEST_CASE("companion matrices of the normal form") {
    auto [A2, B2, C2] = companion_matrices(2);
    CHECK(A2(0, 0) == 0.0);
    CHECK(A2(0, 1) == 1.0);
    CHECK(A2(1, 0) == 0.0);
    CHECK(A2(1, 1) == 0.0);
    CHECK(B2(0, 0) == 0.0);
    CHECK(B2(1, 0) == 1.0);
    CHECK(C2(0, 0) == 1.0);
    CHECK(C2(0, 1) == 0.0);

    auto [A1, B1, C1] = companion_matrices(1);
    CHECK(A1(0, 0) == 0.0);
    CHECK(B1(0, 0) == 1.0);
    CHECK(C1(0, 0) == 1.0);

    auto [A3, B3, C3] = companion_matrices(3);
    (void)B3;
    (void)C3;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(A3(i, j) == ((j == i + 1) ? 1.0 : 0.0));
}

TEST_CASE("unsaturated and saturated controller values") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ConstraintSets sets = preset_sets();

    Vec x{-2.0, 2.0};
    CHECK(unsaturated_control(sys, ctrl, x, 0.0) == doctest::Approx(0.0).epsilon(1e-15));

    Vec x2{4.0, 3.0};
    CHECK(unsaturated_control(sys, ctrl, x2, 0.0) == doctest::Approx(-1.4));
    CHECK(saturated_control(sys, ctrl, sets, x2, 0.0) == doctest::Approx(-1.0));

    // numerator cancels when b(x) = K x and v = 0
    NormalFormSystem cancel = double_integrator();
    cancel.b = Expr::parse("-0.2*x1-0.2*x2");
    Vec x3{1.3, -0.7};
    CHECK(unsaturated_control(cancel, ctrl, x3, 0.0) == doctest::Approx(0.0).epsilon(1e-15));

    // boundary case: gbar exactly u_max stays u_max
    NormalFormSystem sysb = double_integrator();
    LinearizingController unit;
    unit.K = {0.0, 0.0};
    unit.v = VSpec{VSpec::Kind::Constant, 1.0, 0.0};
    CHECK(saturated_control(sysb, unit, sets, Vec{0.0, 0.0}, 1.0) == doctest::Approx(1.0));

    NormalFormSystem bad = double_integrator();
    bad.a = Expr::parse("0");
    CHECK_THROWS_AS(unsaturated_control(bad, ctrl, x, 0.0), Error);
}

TEST_CASE("plant and closed-loop right-hand sides") {
    NormalFormSystem sys = double_integrator();
    Vec dx = plant_rhs(sys, Vec{1.0, 2.0}, 0.5);
    CHECK(dx[0] == doctest::Approx(2.0));
    CHECK(dx[1] == doctest::Approx(0.5));

    dx = plant_rhs(sys, Vec{0.0, 0.0}, 0.7);
    CHECK(dx[0] == doctest::Approx(0.0));
    CHECK(dx[1] == doctest::Approx(0.7));

    NormalFormSystem chain;
    chain.n = 3;
    chain.a = Expr::parse("1");
    chain.b = Expr::parse("x1^2");
    chain.a0 = 1.0;
    dx = plant_rhs(chain, Vec{1.0, 0.0, 0.0}, 0.0);
    CHECK(dx[0] == doctest::Approx(0.0));
    CHECK(dx[1] == doctest::Approx(0.0));
    CHECK(dx[2] == doctest::Approx(1.0));

    LinearizingController ctrl = controller_from_beta(0.2, 2);
    dx = closed_loop_rhs(ctrl, Vec{1.0, 0.0}, 0.0);
    CHECK(dx[0] == doctest::Approx(0.0));
    CHECK(dx[1] == doctest::Approx(-0.2));

    dx = closed_loop_rhs(ctrl, Vec{0.0, 0.0}, 0.0);
    CHECK(dx[0] == doctest::Approx(0.0));
    CHECK(dx[1] == doctest::Approx(0.0));

    LinearizingController zero;
    zero.K = {0.0, 0.0};
    dx = closed_loop_rhs(zero, Vec{0.0, 0.0}, 1.0);
    CHECK(dx[0] == doctest::Approx(0.0));
    CHECK(dx[1] == doctest::Approx(1.0));
}

TEST_CASE("preset constants from grid sampling") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ConstraintSets sets = preset_sets();
    ConstantsReport rep = estimate_constants(sys, ctrl, sets, 41);

    CHECK(rep.M2 == doctest::Approx(1.0));
    CHECK(rep.M1_raw == doctest::Approx(0.0));
    CHECK(rep.M1 == doctest::Approx(0.0));
    // grid diagonal direction (8, 6)/10 gives |K . d| = 0.2 * 1.4 = 0.28; the
    // continuum value ||K||_2 = 0.2 sqrt(2) = 0.2828 sits within 2%
    CHECK(rep.gamma_raw == doctest::Approx(0.28).epsilon(1e-9));
    CHECK(rep.gamma == doctest::Approx(0.28 * 1.1).epsilon(1e-9));
    CHECK(rep.gamma_raw == doctest::Approx(0.2 * std::sqrt(2.0)).epsilon(0.02));
    CHECK(rep.C1_raw == doctest::Approx(std::sqrt(10.0)).epsilon(1e-9));
    CHECK(rep.C1 == doctest::Approx(1.1 * std::sqrt(10.0)).epsilon(1e-9));
    CHECK(rep.k == doctest::Approx(10.0));
    CHECK(rep.x_max == doctest::Approx(25.0));
    CHECK(rep.L == doctest::Approx(1.0));
}

TEST_CASE("constants estimation rejects Assumption-1 violations") {
    NormalFormSystem sys = double_integrator();
    sys.a = Expr::parse("0.5");
    sys.a0 = 1.0; // claims a lower bound the field does not meet
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    CHECK_THROWS_AS(estimate_constants(sys, ctrl, preset_sets(), 11), Error);
    try {
        estimate_constants(sys, ctrl, preset_sets(), 11);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Domain);
    }
}

TEST_CASE("saturated control stays inside the bound under fuzzing") {
    NormalFormSystem sys = double_integrator();
    sys.b = Expr::parse("0.3*x1*x2");
    LinearizingController ctrl = controller_from_beta(0.7, 2);
    ConstraintSets sets = preset_sets();
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int i = 0; i < 100000; ++i) {
        Vec x{u(rng), u(rng)};
        double uc = saturated_control(sys, ctrl, sets, x, 0.0);
        CHECK(uc >= -sets.u_max);
        CHECK(uc <= sets.u_max);
        double raw = unsaturated_control(sys, ctrl, x, 0.0);
        if (std::abs(raw) < sets.u_max) CHECK(uc == raw);
    }
}

TEST_CASE("exact linearization in the unsaturated region") {
    NormalFormSystem sys = double_integrator();
    sys.a = Expr::parse("2+sin(x1)");
    sys.b = Expr::parse("0.4*x2^2");
    sys.a0 = 1.0;
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ConstraintSets sets = preset_sets();
    std::mt19937 rng(43);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 1000; ++i) {
        Vec x{u(rng), u(rng)};
        double raw = unsaturated_control(sys, ctrl, x, 0.0);
        if (std::abs(raw) >= sets.u_max) continue;
        Vec lhs = plant_rhs(sys, x, saturated_control(sys, ctrl, sets, x, 0.0));
        Vec rhs = closed_loop_rhs(ctrl, x, 0.0);
        for (std::size_t d = 0; d < lhs.size(); ++d) CHECK(std::abs(lhs[d] - rhs[d]) <= 1e-12);
    }
}

TEST_CASE("Lipschitz estimates grow with grid density") {
    NormalFormSystem sys;
    sys.n = 2;
    sys.a = Expr::parse("1.5+0.5*sin(x1)");
    sys.b = Expr::parse("sin(x1)*x2+0.1*x2^2");
    sys.a0 = 1.0;
    LinearizingController ctrl = controller_from_beta(0.3, 2);
    ConstraintSets sets = preset_sets();
    double prev_m1 = -1.0, prev_gamma = -1.0;
    for (int density : {5, 9, 17, 33}) {
        ConstantsReport rep = estimate_constants(sys, ctrl, sets, density);
        CHECK(rep.M1_raw >= prev_m1 - 1e-12);
        CHECK(rep.gamma_raw >= prev_gamma - 1e-12);
        prev_m1 = rep.M1_raw;
        prev_gamma = rep.gamma_raw;
    }
}

TEST_CASE("x0 region tightens k and C1") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ConstraintSets sets = preset_sets();
    Box region{{-1.0, -1.0}, {1.0, 1.0}};
    ConstantsReport rep = estimate_constants(sys, ctrl, sets, 21, region);
    // farthest pair: region corner (1,1) to box corner (-4,-3)
    CHECK(rep.k == doctest::Approx(std::sqrt(25.0 + 16.0)));
    CHECK(rep.C1_raw == doctest::Approx(std::sqrt(1.0 + 1.0)).epsilon(1e-9));
}
