#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "ofsafe/config.hpp"
#include "ofsafe/pipeline.hpp"
#include "ofsafe/sim.hpp"

using namespace ofsafe;

namespace {

Instances preset_instances() { return build_instances(preset_double_integrator()); }

const char* kRequiredReportKeys[] = {"mode", "inputs", "T",        "constants",       "bound",
                                     "xi",   "verdicts", "area_delta_tilde", "area_x_safe"};
const char* kRequiredConstantKeys[] = {"M1", "M2", "gamma", "L", "C1", "k", "x_max",
                                       "omega_boundary_min_sq", "safety_factor", "grid_density"};
const char* kRequiredBoundKeys[] = {"epsilon", "T", "T_eps", "xi_transient", "xi_main", "xi",
                                    "mode",    "C2_or_C2hat", "rho", "k", "eps_caps"};

} // namespace

TEST_CASE("finite pipeline on the preset") {
    Instances inst = preset_instances();

    // at eps = 1e-4 the general-mode bound is small enough for a nonempty set
    ObserverDesign d4 = build_observer({4.0, 4.0}, 1e-4);
    VerificationReport rep = finite_horizon_pipeline(inst.sys, inst.ctrl, d4, inst.sets, 5.0,
                                                     inst.pipeline);
    CHECK(rep.bound.mode == BoundMode::General);
    CHECK(rep.bound.xi < 2.0);
    CHECK_FALSE(rep.empty_delta_tilde);
    CHECK(rep.area_delta_tilde > 0.0);

    // at eps = 1e-3 the general-mode C2 = e^{T - T(eps)} factor blows the
    // bound past the box half-width: an empty set with a warning, not an error
    ObserverDesign d3 = build_observer({4.0, 4.0}, 1e-3);
    VerificationReport rep3 = finite_horizon_pipeline(inst.sys, inst.ctrl, d3, inst.sets, 5.0,
                                                      inst.pipeline);
    CHECK(rep3.bound.xi > 3.0);
    CHECK(rep3.empty_delta_tilde);
    CHECK(rep3.area_delta_tilde == 0.0);

    // xi forced to zero reproduces the plain state-feedback set
    PipelineConfig dbg = inst.pipeline;
    dbg.xi_override = 0.0;
    VerificationReport forced = finite_horizon_pipeline(inst.sys, inst.ctrl, d3, inst.sets, 5.0, dbg);
    auto plain = invariant_set(inst.grid, inst.sys, inst.ctrl, inst.sets, HorizonSpec{false, 5.0}, 0.0,
                               VMode::FixedZero, dbg.tube);
    REQUIRE(forced.delta_tilde.v.size() == plain.delta.v.size());
    for (std::size_t i = 0; i < plain.delta.v.size(); ++i)
        CHECK(forced.delta_tilde.v[i] == doctest::Approx(plain.delta.v[i]).epsilon(1e-12));
}

TEST_CASE("infinite pipeline reproduces the case study") {
    Instances inst = preset_instances();
    VerificationReport rep = infinite_horizon_pipeline(inst.sys, inst.ctrl, inst.design, inst.sets,
                                                       inst.pipeline);

    CHECK(rep.Q(0, 0) == doctest::Approx(3.5).epsilon(1e-9));
    CHECK(rep.Q(0, 1) == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(rep.Q(1, 1) == doctest::Approx(15.0).epsilon(1e-9));
    CHECK(rep.c >= 12.0);
    CHECK(rep.omega_contained);
    // T1 from the fitted c; at c = 16 the value is 24.74
    CHECK(rep.T1 > 15.0);
    CHECK(rep.T1 < 35.0);
    CHECK(rep.bound.mode == BoundMode::Stable);
    // the stable-mode shrink lands within a factor of three of the paper's 0.1768
    CHECK(rep.bound.xi > 0.1768 / 3.0);
    CHECK(rep.bound.xi < 0.1768 * 3.0);

    // the verdict flag mirrors the cap comparison exactly
    CHECK(rep.cap_violation == (0.01 >= rep.bound.caps.eps_hat));
    if (rep.cap_violation) CHECK_FALSE(rep.binding_cap.empty());

    // the continuum ellipsoid stays inside the box
    Matrix qinv = inverse(rep.Q);
    for (int i = 0; i < 2; ++i) CHECK(std::sqrt(rep.c * qinv(i, i)) <= (i == 0 ? 4.0 : 3.0) + 1e-9);

    CHECK_FALSE(rep.empty_delta_tilde);
    CHECK(rep.area_delta > 0.0);
    CHECK(rep.area_delta_tilde > 0.0);
    CHECK(rep.area_delta_tilde < rep.area_delta);

    // nesting: Delta-tilde inside Delta inside X_safe, nodewise
    LevelSetField box_sdf = sdf_box(rep.delta.grid, inst.sets.x_box);
    for (std::size_t i = 0; i < rep.delta.v.size(); ++i) {
        if (rep.delta_tilde.v[i] > 0.0) CHECK(rep.delta.v[i] > 0.0);
        if (rep.delta.v[i] > 0.0) CHECK(box_sdf.v[i] <= 1e-12);
    }

    // smaller epsilon recovers more of the state-feedback set
    ObserverDesign d3 = build_observer({4.0, 4.0}, 0.001);
    VerificationReport rep3 = infinite_horizon_pipeline(inst.sys, inst.ctrl, d3, inst.sets,
                                                        inst.pipeline);
    CHECK(rep3.bound.xi < rep.bound.xi);
    CHECK(rep3.area_delta_tilde > rep.area_delta_tilde);

    // a larger epsilon breaches eps3; lenient mode records it, strict throws
    ObserverDesign d_hot = build_observer({4.0, 4.0}, 0.05);
    VerificationReport hot = infinite_horizon_pipeline(inst.sys, inst.ctrl, d_hot, inst.sets,
                                                       inst.pipeline);
    CHECK(hot.cap_violation);
    CHECK_FALSE(hot.binding_cap.empty());
    PipelineConfig strict = inst.pipeline;
    strict.strict_caps = true;
    CHECK_THROWS_AS(infinite_horizon_pipeline(inst.sys, inst.ctrl, d_hot, inst.sets, strict), Error);
}

TEST_CASE("infinite pipeline rejects non-stabilizing controllers") {
    Instances inst = preset_instances();
    LinearizingController zero;
    zero.K = {0.0, 0.0};
    CHECK_THROWS_AS(infinite_horizon_pipeline(inst.sys, zero, inst.design, inst.sets, inst.pipeline),
                    Error);
    try {
        infinite_horizon_pipeline(inst.sys, zero, inst.design, inst.sets, inst.pipeline);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonHurwitz);
    }
}

TEST_CASE("reports serialize with every consumed constant present") {
    Instances inst = preset_instances();
    VerificationReport rep = infinite_horizon_pipeline(inst.sys, inst.ctrl, inst.design, inst.sets,
                                                       inst.pipeline);
    auto j = verification_report_json(rep);
    for (const char* key : kRequiredReportKeys) CHECK(j.contains(key));
    for (const char* key : kRequiredConstantKeys) CHECK(j["constants"].contains(key));
    for (const char* key : kRequiredBoundKeys) CHECK(j["bound"].contains(key));
    CHECK(j.contains("c"));
    CHECK(j.contains("T1"));
    CHECK(j.contains("Q"));
    CHECK(j.contains("omega_contained"));
    CHECK(j["bound"]["eps_caps"].contains("eps_bar"));
    CHECK(j["bound"]["eps_caps"].contains("eps3"));
    CHECK(j["bound"]["eps_caps"].contains("eps4"));
    CHECK(j["bound"]["eps_caps"].contains("eps_hat"));
    CHECK(j["inputs"]["epsilon"].get<double>() == doctest::Approx(0.01));

    // byte determinism of the serialized report
    VerificationReport rep2 = infinite_horizon_pipeline(inst.sys, inst.ctrl, inst.design, inst.sets,
                                                        inst.pipeline);
    CHECK(verification_report_json(rep2).dump(2) == j.dump(2));
}

TEST_CASE("output-feedback soundness sample from Delta-tilde") {
    Instances inst = preset_instances();
    VerificationReport rep = infinite_horizon_pipeline(inst.sys, inst.ctrl, inst.design, inst.sets,
                                                       inst.pipeline);

    // collect strictly-inside nodes of Delta-tilde
    std::vector<Vec> candidates;
    Vec x(2);
    for (std::size_t i = 0; i < rep.delta_tilde.v.size(); ++i) {
        if (rep.delta_tilde.v[i] <= 0.05) continue;
        rep.delta_tilde.grid.node(i, x);
        candidates.push_back(x);
    }
    REQUIRE(candidates.size() > 20);

    std::mt19937 rng(79);
    Vec center = inst.sets.x_box.center();
    IntegratorConfig icfg;
    for (int run = 0; run < 20; ++run) {
        const Vec& x0 = candidates[rng() % candidates.size()];
        Trajectory ofb = simulate_output_feedback(inst.sys, inst.ctrl, inst.design, inst.sets, x0,
                                                  center, rep.T1, icfg);
        for (const auto& state : ofb.states) CHECK(inst.sets.x_box.contains(state, -1e-9));
        for (double u : ofb.controls) CHECK(std::abs(u) <= inst.sets.u_max + 1e-12);
    }
}

TEST_CASE("config loading, validation and the preset") {
    RunConfig preset = preset_double_integrator();
    CHECK(preset.n == 2);
    CHECK(preset.a_text == "1");
    CHECK(preset.b_text == "0");
    CHECK(*preset.beta == doctest::Approx(0.2));
    CHECK(preset.alphas == Vec{4.0, 4.0});
    CHECK(preset.epsilon == doctest::Approx(0.01));
    CHECK(preset.u_max == doctest::Approx(1.0));
    CHECK(preset.x_box.lo == Vec{-4.0, -3.0});
    CHECK(preset.x_box.hi == Vec{4.0, 3.0});
    CHECK_NOTHROW(validate_config(preset));

    RunConfig bad = preset;
    bad.a_text.clear();
    CHECK_THROWS_AS(validate_config(bad), Error);

    RunConfig negeps = preset;
    negeps.epsilon = -1.0;
    CHECK_THROWS_AS(validate_config(negeps), Error);

    Instances inst = build_instances(preset);
    CHECK(inst.sys.n == 2);
    CHECK(inst.ctrl.K == Vec{-0.2, -0.2});
    CHECK(inst.design.H[0] == doctest::Approx(400.0));
    CHECK(inst.grid.axes[0].lo == doctest::Approx(-6.0));
    CHECK(inst.grid.axes[0].hi == doctest::Approx(6.0));
    CHECK(inst.grid.axes[1].lo == doctest::Approx(-4.5));
    CHECK(inst.grid.axes[1].hi == doctest::Approx(4.5));

    RunConfig badexpr = preset;
    badexpr.a_text = "1+";
    CHECK_THROWS_AS(build_instances(badexpr), Error);

    RunConfig zeroa = preset;
    zeroa.a_text = "0";
    // parses fine; the violation surfaces at constants estimation
    Instances zinst = build_instances(zeroa);
    CHECK_THROWS_AS(estimate_constants(zinst.sys, zinst.ctrl, zinst.sets, 11), Error);
}
