#include "ofsafe/pipeline.hpp"

#include <cmath>

namespace ofsafe {

namespace {

double finite_or(double v, double fallback) { return std::isfinite(v) ? v : fallback; }

void snapshot_inputs(VerificationReport& rep, const NormalFormSystem& sys,
                     const LinearizingController& ctrl, const ObserverDesign& design,
                     const ConstraintSets& sets) {
    rep.a_text = sys.a.text();
    rep.b_text = sys.b.text();
    rep.n = sys.n;
    rep.a0 = sys.a0;
    rep.K = ctrl.K;
    rep.u_max = sets.u_max;
    rep.alphas = design.alphas;
    rep.rho = design.rho;
    rep.x_box = sets.x_box;
    rep.epsilon = design.epsilon;
}

double box_area(const Box& box) {
    double v = 1.0;
    for (int i = 0; i < box.dim(); ++i)
        v *= box.hi[static_cast<std::size_t>(i)] - box.lo[static_cast<std::size_t>(i)];
    return v;
}

// Largest c with the continuum ellipsoid {x^T Q x <= c} inside the box: the
// extreme of x_i over the ellipsoid is sqrt(c (Q^{-1})_{ii}). The grid
// predicate alone can miss sub-cell slivers poking past a face.
double ellipsoid_in_box_cap(const Matrix& Q, const Box& box) {
    Matrix qinv = inverse(Q);
    double cap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < box.dim(); ++i) {
        std::size_t si = static_cast<std::size_t>(i);
        double reach = std::min(box.hi[si], -box.lo[si]);
        if (reach <= 0.0)
            throw Error(ErrorKind::Config, "infinite pipeline: X_safe must contain the origin");
        cap = std::min(cap, reach * reach / qinv(i, i));
    }
    return cap;
}

} // namespace

Grid pipeline_grid(const PipelineConfig& cfg, const ConstraintSets& sets) {
    if (!cfg.grid.axes.empty()) return cfg.grid;
    std::vector<int> nodes = cfg.grid_nodes;
    nodes.resize(static_cast<std::size_t>(sets.x_box.dim()), nodes.empty() ? 101 : nodes.back());
    return Grid::inflate_box(sets.x_box, cfg.grid_inflate, nodes);
}

VerificationReport finite_horizon_pipeline(const NormalFormSystem& sys, const LinearizingController& ctrl,
                                           const ObserverDesign& design, const ConstraintSets& sets,
                                           double T, const PipelineConfig& cfg) {
    if (!std::isfinite(T) || T <= 0.0)
        throw Error(ErrorKind::Config, "finite pipeline: horizon must be positive and finite");
    VerificationReport rep;
    rep.mode = HorizonMode::Finite;
    rep.T = T;
    snapshot_inputs(rep, sys, ctrl, design, sets);

    TubeConfig tube = cfg.tube;
    tube.threads = cfg.threads;
    Grid grid = pipeline_grid(cfg, sets);

    rep.constants = estimate_constants(sys, ctrl, sets, cfg.constants_grid_density, {},
                                       cfg.safety_factor, cfg.threads);
    if (cfg.k_override) rep.constants.k = *cfg.k_override;

    // Theorem 2 needs no stability assumption, so the general-mode bound is used.
    rep.bound = xi_for_epsilon(design.epsilon, T, rep.constants, ctrl, design, BoundMode::General);
    double xi = cfg.xi_override ? *cfg.xi_override : rep.bound.xi;

    auto inv = invariant_set(grid, sys, ctrl, sets, HorizonSpec{false, T}, xi, cfg.v_mode, tube,
                             cfg.include_saturation);
    rep.delta_tilde = std::move(inv.delta);
    rep.empty_delta_tilde = inv.empty_warning;
    rep.area_delta_tilde = set_area(rep.delta_tilde);
    rep.area_x_safe = box_area(sets.x_box);
    return rep;
}

VerificationReport infinite_horizon_pipeline(const NormalFormSystem& sys,
                                             const LinearizingController& ctrl,
                                             const ObserverDesign& design, const ConstraintSets& sets,
                                             const PipelineConfig& cfg) {
    Matrix cl = closed_loop_matrix(ctrl);
    if (!is_hurwitz(cl))
        throw Error(ErrorKind::NonHurwitz, "infinite pipeline: A+BK must be Hurwitz");
    if (ctrl.v.kind != VSpec::Kind::Constant || ctrl.v.value != 0.0)
        throw Error(ErrorKind::Config, "infinite pipeline: requires the v = 0 stabilizing controller");

    VerificationReport rep;
    rep.mode = HorizonMode::Infinite;
    snapshot_inputs(rep, sys, ctrl, design, sets);

    TubeConfig tube = cfg.tube;
    tube.threads = cfg.threads;
    Grid grid = pipeline_grid(cfg, sets);

    rep.constants = estimate_constants(sys, ctrl, sets, cfg.constants_grid_density, {},
                                       cfg.safety_factor, cfg.threads);
    if (cfg.k_override) rep.constants.k = *cfg.k_override;

    // (1) Delta under the original constraint sets, run to a fixed point
    auto delta_res = invariant_set(grid, sys, ctrl, sets, HorizonSpec{true, 0.0}, 0.0, cfg.v_mode, tube,
                                   cfg.include_saturation);
    rep.delta = std::move(delta_res.delta);
    rep.has_delta = true;
    rep.area_delta = set_area(rep.delta);

    // (2) Lyapunov certificate for the closed loop and the largest fitted
    //     sublevel set
    rep.Q = solve_lyapunov(cl);
    rep.c = std::min(largest_c(rep.Q, rep.delta),
                     (1.0 - 1e-6) * ellipsoid_in_box_cap(rep.Q, sets.x_box));
    rep.omega_contained = contains(QuadraticSet{rep.Q, rep.c}, rep.delta);

    // (3) time to reach Omega_c from the worst admissible start
    rep.T1 = t1_horizon(rep.Q, rep.c, rep.constants.x_max);
    rep.T = rep.T1;

    // (4) epsilon caps; violations surface as verdicts unless strict
    EpsCaps caps = epsilon_caps(rep.constants, design, rep.Q, rep.c, ctrl);
    if (design.epsilon >= caps.eps_hat) {
        rep.cap_violation = true;
        if (caps.eps_hat == caps.eps_bar) rep.binding_cap = "eps_bar";
        else if (caps.eps_hat == caps.eps3) rep.binding_cap = "eps3";
        else rep.binding_cap = "eps4";
        if (cfg.strict_caps)
            throw Error(ErrorKind::CapViolation,
                        "infinite pipeline: epsilon = " + std::to_string(design.epsilon) +
                            " is at or above " + rep.binding_cap + " = " + std::to_string(caps.eps_hat));
    }

    // (5) stable-mode xi at (epsilon, T1) and the shrunk-set reach run
    rep.bound = xi_for_epsilon(design.epsilon, rep.T1, rep.constants, ctrl, design, BoundMode::Stable,
                               {}, cfg.literal_c2hat);
    rep.bound.caps = caps;
    double xi = cfg.xi_override ? *cfg.xi_override : rep.bound.xi;

    auto inv = invariant_set(grid, sys, ctrl, sets, HorizonSpec{false, rep.T1}, xi, cfg.v_mode, tube,
                             cfg.include_saturation);
    rep.delta_tilde = std::move(inv.delta);
    rep.empty_delta_tilde = inv.empty_warning;
    rep.area_delta_tilde = set_area(rep.delta_tilde);
    rep.area_x_safe = box_area(sets.x_box);
    // Theorem 3 also recovers asymptotic stability of the origin under
    // output feedback; reported as a cited guarantee.
    rep.asymptotic_stability_note = true;
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::ordered_json constants_report_json(const ConstantsReport& c) {
    nlohmann::ordered_json j;
    j["M1"] = c.M1;
    j["M2"] = c.M2;
    j["gamma"] = c.gamma;
    j["L"] = c.L;
    j["C1"] = c.C1;
    j["k"] = c.k;
    j["x_max"] = c.x_max;
    j["omega_boundary_min_sq"] = c.omega_boundary_min_sq;
    j["M1_raw"] = c.M1_raw;
    j["gamma_raw"] = c.gamma_raw;
    j["C1_raw"] = c.C1_raw;
    j["safety_factor"] = c.safety_factor;
    j["grid_density"] = c.grid_density;
    return j;
}

nlohmann::ordered_json bound_report_json(const BoundReport& b) {
    nlohmann::ordered_json j;
    j["epsilon"] = b.epsilon;
    j["T"] = b.T;
    j["T_eps"] = b.T_eps;
    j["xi_transient"] = b.xi_transient;
    j["xi_main"] = b.xi_main;
    j["xi"] = b.xi;
    j["mode"] = (b.mode == BoundMode::General) ? "general" : "stable";
    j["C2_or_C2hat"] = b.C2_or_C2hat;
    j["c2hat_literal"] = b.c2hat_literal;
    j["rho"] = b.rho;
    j["k"] = b.k_used;
    j["n"] = b.n;
    j["eps_caps"] = {{"eps_bar", finite_or(b.caps.eps_bar, -1.0)},
                     {"eps3", finite_or(b.caps.eps3, -1.0)},
                     {"eps4", finite_or(b.caps.eps4, -1.0)},
                     {"eps_hat", finite_or(b.caps.eps_hat, -1.0)}};
    j["eps_caps_note"] = "-1 encodes an inactive (+infinity) cap";
    j["constants"] = constants_report_json(b.constants);
    return j;
}

nlohmann::ordered_json verification_report_json(const VerificationReport& r) {
    nlohmann::ordered_json j;
    j["mode"] = (r.mode == HorizonMode::Finite) ? "finite" : "infinite";
    j["inputs"] = {{"n", r.n},
                   {"a", r.a_text},
                   {"b", r.b_text},
                   {"a0", r.a0},
                   {"K", r.K},
                   {"u_max", r.u_max},
                   {"alphas", r.alphas},
                   {"epsilon", r.epsilon},
                   {"rho", r.rho},
                   {"x_box_lo", r.x_box.lo},
                   {"x_box_hi", r.x_box.hi}};
    j["T"] = r.T;
    j["constants"] = constants_report_json(r.constants);
    j["bound"] = bound_report_json(r.bound);
    j["xi"] = r.bound.xi;
    if (r.mode == HorizonMode::Infinite) {
        j["c"] = r.c;
        j["T1"] = r.T1;
        j["Q"] = {{"rows", r.Q.rows}, {"cols", r.Q.cols}, {"entries", r.Q.a}};
        j["area_delta"] = r.area_delta;
        j["omega_contained"] = r.omega_contained;
        j["asymptotic_stability_note"] = r.asymptotic_stability_note;
    }
    j["area_delta_tilde"] = r.area_delta_tilde;
    j["area_x_safe"] = r.area_x_safe;
    j["verdicts"] = {{"empty_delta_tilde", r.empty_delta_tilde},
                     {"cap_violation", r.cap_violation},
                     {"binding_cap", r.binding_cap}};
    return j;
}

} // namespace ofsafe
