#pragma once

#include <optional>
#include <string>

#include "json.hpp"

#include "ofsafe/bounds.hpp"
#include "ofsafe/observer.hpp"
#include "ofsafe/plant.hpp"
#include "ofsafe/reach.hpp"

namespace ofsafe {

enum class HorizonMode { Finite, Infinite };

struct PipelineConfig {
    int constants_grid_density = 41;
    double safety_factor = 1.1;
    Grid grid;                 // empty axes select the default inflated grid
    std::vector<int> grid_nodes{101, 101};
    double grid_inflate = 0.25;
    TubeConfig tube;
    VMode v_mode = VMode::FixedZero;
    bool include_saturation = true;
    bool strict_caps = false;  // turn cap violations into hard errors
    bool literal_c2hat = false;
    std::optional<double> xi_override; // debugging hook (0 reproduces Delta)
    std::optional<double> k_override;  // tighter initial-error bound if known
    int threads = 0;
};

struct VerificationReport {
    HorizonMode mode = HorizonMode::Finite;
    double epsilon = 0.0;
    double T = 0.0; // requested horizon (finite) or T1 (infinite)
    ConstantsReport constants;
    BoundReport bound;
    // infinite mode extras
    double c = 0.0;
    double T1 = 0.0;
    Matrix Q;
    bool has_delta = false;
    LevelSetField delta;       // unshrunk Delta, positive inside
    LevelSetField delta_tilde; // positive inside
    double area_delta = 0.0;
    double area_delta_tilde = 0.0;
    double area_x_safe = 0.0;
    // verdicts
    bool empty_delta_tilde = false;
    bool cap_violation = false;
    std::string binding_cap;
    bool omega_contained = false;          // infinite mode containment check
    bool asymptotic_stability_note = false; // infinite mode: origin stays stable
    // input snapshot
    std::string a_text, b_text;
    int n = 0;
    double a0 = 0.0;
    Vec K;
    double u_max = 0.0;
    Vec alphas;
    double rho = 0.0;
    Box x_box;
};

Grid pipeline_grid(const PipelineConfig& cfg, const ConstraintSets& sets);

// Theorem-2 route: constants, general-mode xi at (epsilon, T), then the
// invariant set over horizon T with the eroded safe set.
VerificationReport finite_horizon_pipeline(const NormalFormSystem& sys, const LinearizingController& ctrl,
                                           const ObserverDesign& design, const ConstraintSets& sets,
                                           double T, const PipelineConfig& cfg);

// Theorem-3 route: converged Delta, Lyapunov Q for A+BK, largest c with
// Omega_c inside Delta, T1, stable-mode xi at (epsilon, T1), then Delta-tilde
// over horizon T1 with the eroded safe set.
VerificationReport infinite_horizon_pipeline(const NormalFormSystem& sys,
                                             const LinearizingController& ctrl,
                                             const ObserverDesign& design, const ConstraintSets& sets,
                                             const PipelineConfig& cfg);

nlohmann::ordered_json constants_report_json(const ConstantsReport& c);
nlohmann::ordered_json bound_report_json(const BoundReport& b);
nlohmann::ordered_json verification_report_json(const VerificationReport& r);

} // namespace ofsafe
