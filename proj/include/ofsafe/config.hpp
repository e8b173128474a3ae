#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ofsafe/pipeline.hpp"
#include "ofsafe/sim.hpp"

namespace ofsafe {

// Full run description, loadable from a JSON file. Defaults mirror the
// built-in double-integrator preset.
struct RunConfig {
    // system
    int n = 0;
    std::string a_text;
    std::string b_text;
    double a0 = 0.0;
    // controller
    std::optional<double> beta;
    Vec K;
    VSpec v;
    double u_max = 0.0;
    // observer
    Vec alphas;
    double epsilon = 0.0;
    double rho = 0.0; // <= 0 selects the default
    // sets
    Box x_box;
    // horizon
    bool infinite_horizon = false;
    double T = 0.0;
    // grid
    std::vector<int> grid_nodes;
    std::optional<Box> grid_extents;
    double grid_inflate = 0.25;
    // integrator
    IntegratorConfig integrator;
    // reach / pipeline knobs
    double reach_xi = 0.0;
    std::string v_mode = "fixed"; // fixed | helpful | adversarial
    bool include_saturation = true;
    bool strict_caps = false;
    bool literal_c2hat = false;
    double converge_tol = 1e-4;
    int constants_grid_density = 41;
    double safety_factor = 1.1;
    std::optional<double> k_override;
    // output
    std::string out_dir = ".";
    std::string label = "run";
    bool emit_contours = true;
    int threads = 0;
    unsigned seed = 0;
};

RunConfig preset_double_integrator();

// Parses and fully validates a config file; throws ErrorKind::Parse /
// ErrorKind::Config with the offending field named.
RunConfig load_config(const std::string& path);

// Structural validation shared by the preset and file paths.
void validate_config(const RunConfig& cfg);

struct Instances {
    NormalFormSystem sys;
    LinearizingController ctrl;
    ConstraintSets sets;
    ObserverDesign design;
    Grid grid;
    PipelineConfig pipeline;
    VMode v_mode = VMode::FixedZero;
};

// Builds the typed objects a run needs (parses expressions, solves the
// observer certificate, lays out the grid).
Instances build_instances(const RunConfig& cfg);

} // namespace ofsafe
