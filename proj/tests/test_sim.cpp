#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "ofsafe/sim.hpp"

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

TEST_CASE("equilibrium stays put") {
    NormalFormSystem sys = double_integrator();
    LinearizingController zero;
    zero.K = {0.0, 0.0};
    Trajectory traj = simulate_state_feedback(sys, zero, preset_sets(), {0.0, 0.0}, 2.0,
                                              IntegratorConfig{});
    for (const auto& x : traj.states) {
        CHECK(x[0] == 0.0);
        CHECK(x[1] == 0.0);
    }
    for (double u : traj.controls) CHECK(u == 0.0);
}

TEST_CASE("unsaturated runs match the matrix exponential") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ConstraintSets sets = preset_sets();
    Vec x0{-0.5, 0.5};
    Matrix cl = closed_loop_matrix(ctrl);

    Trajectory traj = simulate_state_feedback(sys, ctrl, sets, x0, 10.0, IntegratorConfig{});
    for (double t : {1.0, 5.0, 10.0}) {
        Matrix e = matrix_exponential(cl, t);
        Vec expected = mat_vec(e, x0);
        std::size_t idx = 0;
        double best = 1e300;
        for (std::size_t i = 0; i < traj.times.size(); ++i)
            if (std::abs(traj.times[i] - t) < best) {
                best = std::abs(traj.times[i] - t);
                idx = i;
            }
        REQUIRE(best < 1e-9);
        CHECK(std::abs(traj.states[idx][0] - expected[0]) < 1e-6);
        CHECK(std::abs(traj.states[idx][1] - expected[1]) < 1e-6);
    }
}

TEST_CASE("state feedback converges from the paper's sample start") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    Trajectory traj = simulate_state_feedback(sys, ctrl, preset_sets(), {-2.0, 2.0}, 40.0,
                                              IntegratorConfig{});
    double peak = 0.0;
    for (const auto& x : traj.states) peak = std::max(peak, norm2(x));
    CHECK(peak < 6.0); // never leaves a bounded region
    CHECK(norm2(traj.states.back()) < 0.2);
}

TEST_CASE("blow-up detection") {
    NormalFormSystem sys = double_integrator();
    LinearizingController runaway;
    runaway.K = {5.0, 5.0}; // destabilizing feedback
    ConstraintSets sets = preset_sets();
    sets.u_max = 1e9;
    CHECK_THROWS_AS(simulate_state_feedback(sys, runaway, sets, {1.0, 1.0}, 50.0, IntegratorConfig{}),
                    Error);
}

TEST_CASE("matching initial estimate reproduces state feedback") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ConstraintSets sets = preset_sets();
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    Vec x0{-2.0, 2.0};
    Trajectory sfb = simulate_state_feedback(sys, ctrl, sets, x0, 10.0, IntegratorConfig{});
    Trajectory ofb = simulate_output_feedback(sys, ctrl, d, sets, x0, x0, 10.0, IntegratorConfig{});
    CHECK(sup_distance(ofb, sfb) < 1e-6);
}

TEST_CASE("peaking saturates briefly, then the control tracks state feedback") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ConstraintSets sets = preset_sets();
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    Vec x0{-2.0, 2.0}, xhat0{0.0, 0.0};
    Trajectory sfb = simulate_state_feedback(sys, ctrl, sets, x0, 20.0, IntegratorConfig{});
    Trajectory ofb = simulate_output_feedback(sys, ctrl, d, sets, x0, xhat0, 20.0, IntegratorConfig{});

    auto sat = saturation_intervals(ofb, sets.u_max);
    REQUIRE(!sat.empty());
    CHECK(sat.front().first <= 0.01); // peaking saturates within the first steps
    CHECK(sat.front().second <= 0.2); // and ends within the transient window

    // after t = 1 s the two control traces coincide within 0.05
    for (std::size_t i = 0; i < ofb.times.size(); ++i) {
        if (ofb.times[i] < 1.0) continue;
        std::size_t j = 0;
        double best = 1e300;
        for (std::size_t k = 0; k < sfb.times.size(); ++k)
            if (std::abs(sfb.times[k] - ofb.times[i]) < best) {
                best = std::abs(sfb.times[k] - ofb.times[i]);
                j = k;
            }
        CHECK(std::abs(ofb.controls[i] - sfb.controls[j]) < 0.05);
    }

    // estimation error is gone well before t = 0.5 s
    std::size_t at_half = 0;
    for (std::size_t i = 0; i < ofb.times.size(); ++i)
        if (ofb.times[i] <= 0.5) at_half = i;
    Vec err(2);
    for (int k = 0; k < 2; ++k) err[k] = ofb.states[at_half][k] - ofb.estimates[at_half][k];
    CHECK(norm2(err) < 1e-3);
}

TEST_CASE("sup distance shrinks with epsilon") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ConstraintSets sets = preset_sets();
    Vec x0{-2.0, 2.0}, xhat0{0.0, 0.0};
    Trajectory sfb = simulate_state_feedback(sys, ctrl, sets, x0, 10.0, IntegratorConfig{});
    double prev = 1e300;
    for (double eps : {0.1, 0.01, 0.001}) {
        ObserverDesign d = build_observer({4.0, 4.0}, eps);
        Trajectory ofb = simulate_output_feedback(sys, ctrl, d, sets, x0, xhat0, 10.0, IntegratorConfig{});
        double dist = sup_distance(ofb, sfb);
        CHECK(dist < prev);
        prev = dist;
    }
}

TEST_CASE("controls stay inside the saturation bound along the whole trace") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.35, 2);
    ConstraintSets sets = preset_sets();
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    std::mt19937 rng(73);
    std::uniform_real_distribution<double> ux(-3.5, 3.5), uy(-2.5, 2.5);
    for (int trial = 0; trial < 5; ++trial) {
        Vec x0{ux(rng), uy(rng)};
        Trajectory ofb = simulate_output_feedback(sys, ctrl, d, sets, x0, {0.0, 0.0}, 5.0,
                                                  IntegratorConfig{});
        for (double u : ofb.controls) {
            CHECK(u <= sets.u_max);
            CHECK(u >= -sets.u_max);
        }
    }
}

TEST_CASE("step halving moves the endpoint by a vanishing amount") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ConstraintSets sets = preset_sets();
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);

    IntegratorConfig coarse;
    IntegratorConfig fine;
    fine.base_step = coarse.base_step / 2.0;
    fine.transient_step = d.epsilon / 40.0;

    // smooth case (no saturation event): full fourth-order behaviour
    Vec x0{-2.0, 2.0}, xhat0_near{-2.02, 1.9};
    Trajectory a = simulate_output_feedback(sys, ctrl, d, sets, x0, xhat0_near, 8.0, coarse);
    Trajectory b = simulate_output_feedback(sys, ctrl, d, sets, x0, xhat0_near, 8.0, fine);
    for (double u : a.controls) CHECK(std::abs(u) < sets.u_max); // stays smooth
    Vec xa = a.states.back(), xb = b.states.back();
    double rel = std::hypot(xa[0] - xb[0], xa[1] - xb[1]) / std::max(1e-9, norm2(xb));
    CHECK(rel <= 1e-5);

    // with a saturation crossing the event error dominates but stays small
    Vec xhat0_far{0.5, -0.5};
    Trajectory c = simulate_output_feedback(sys, ctrl, d, sets, x0, xhat0_far, 8.0, coarse);
    Trajectory e = simulate_output_feedback(sys, ctrl, d, sets, x0, xhat0_far, 8.0, fine);
    Vec xc = c.states.back(), xe = e.states.back();
    double rel_sat = std::hypot(xc[0] - xe[0], xc[1] - xe[1]) / std::max(1e-9, norm2(xe));
    CHECK(rel_sat <= 1e-4);
}

TEST_CASE("adaptive integrator agrees with the fixed-step one") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ConstraintSets sets = preset_sets();
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    Vec x0{-2.0, 2.0}, xhat0{0.0, 0.0};

    IntegratorConfig fixed;
    IntegratorConfig adaptive;
    adaptive.method = IntegratorMethod::Rk45;
    adaptive.abs_tol = 1e-10;
    adaptive.rel_tol = 1e-10;
    Trajectory a = simulate_output_feedback(sys, ctrl, d, sets, x0, xhat0, 5.0, fixed);
    Trajectory b = simulate_output_feedback(sys, ctrl, d, sets, x0, xhat0, 5.0, adaptive);
    CHECK(sup_distance(a, b) < 1e-3);
}

TEST_CASE("sup distance fundamentals") {
    Trajectory a;
    a.times = {0.0, 1.0, 2.0};
    a.states = {{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}};
    a.controls = {0.0, 0.0, 0.0};
    CHECK(sup_distance(a, a) == 0.0);

    Trajectory b = a;
    for (auto& x : b.states) x[1] += 0.75; // constant offset in one component
    CHECK(sup_distance(a, b) == doctest::Approx(0.75));

    Trajectory c = a;
    c.times.back() = 3.0;
    CHECK_THROWS_AS(sup_distance(a, c), Error);
}

TEST_CASE("xhat0 outside the safe box is rejected") {
    NormalFormSystem sys = double_integrator();
    LinearizingController ctrl = controller_from_beta(0.2, 2);
    ObserverDesign d = build_observer({4.0, 4.0}, 0.01);
    CHECK_THROWS_AS(simulate_output_feedback(sys, ctrl, d, preset_sets(), {0.0, 0.0}, {9.0, 0.0}, 1.0,
                                             IntegratorConfig{}),
                    Error);
}
