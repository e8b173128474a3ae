// Command-line front end: certified safety-invariant sets for normal-form
// systems driven through a high-gain observer. Subcommands mirror the library
// workflows: constants, sim, bound, reach, sweep, pipeline.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ofsafe/config.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace ofsafe;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::string label;
    int threads = -1;
    double epsilon = 0.0; // 0 keeps the config value
    double beta = std::numeric_limits<double>::quiet_NaN();
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "path to a JSON run configuration");
    cmd->add_option("--preset", args.preset, "built-in preset name (double-integrator)");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--label", args.label, "run label used in file names");
    cmd->add_option("--threads", args.threads, "worker threads (0 = auto)");
    cmd->add_option("--epsilon", args.epsilon, "override the observer epsilon");
    cmd->add_option("--beta", args.beta, "override the controller beta");
}

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) {
        cfg = load_config(args.config_path);
    } else if (!args.preset.empty()) {
        if (args.preset != "double-integrator")
            throw Error(ErrorKind::Config, "unknown preset '" + args.preset + "'");
        cfg = preset_double_integrator();
    } else {
        throw Error(ErrorKind::Config, "either --config or --preset is required");
    }
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (!args.label.empty()) cfg.label = args.label;
    if (args.threads >= 0) cfg.threads = args.threads;
    if (args.epsilon > 0.0) cfg.epsilon = args.epsilon;
    if (!std::isnan(args.beta)) {
        cfg.beta = args.beta;
        cfg.K.clear();
    }
    validate_config(cfg);
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& suffix) {
    fs::create_directories(cfg.out_dir);
    return (fs::path(cfg.out_dir) / (cfg.label + "_" + suffix)).string();
}

void write_json(const std::string& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Config, "cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

Vec parse_point(const std::string& text, int n, const char* what) {
    Vec out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw Error(ErrorKind::Config, std::string(what) + ": cannot parse '" + tok + "'");
        }
    }
    if (static_cast<int>(out.size()) != n)
        throw Error(ErrorKind::Config,
                    std::string(what) + " must list " + std::to_string(n) + " comma-separated values");
    return out;
}

HorizonSpec horizon_of(const RunConfig& cfg) {
    return cfg.infinite_horizon ? HorizonSpec{true, 0.0} : HorizonSpec{false, cfg.T};
}

int run_constants(const CommonArgs& args) {
    RunConfig cfg = resolve_config(args);
    Instances inst = build_instances(cfg);
    ConstantsReport rep = estimate_constants(inst.sys, inst.ctrl, inst.sets, cfg.constants_grid_density,
                                             {}, cfg.safety_factor, cfg.threads);
    if (cfg.k_override) rep.k = *cfg.k_override;
    write_json(out_path(cfg, "constants.json"), constants_report_json(rep));
    std::cout << "constant        value\n";
    std::cout << "M1              " << rep.M1 << "\n";
    std::cout << "M2              " << rep.M2 << "\n";
    std::cout << "gamma           " << rep.gamma << "\n";
    std::cout << "L               " << rep.L << "\n";
    std::cout << "C1              " << rep.C1 << "\n";
    std::cout << "k               " << rep.k << "\n";
    std::cout << "x_max           " << rep.x_max << "\n";
    std::cout << "(raw gamma " << rep.gamma_raw << ", raw C1 " << rep.C1_raw << ", safety factor "
              << rep.safety_factor << ", grid density " << rep.grid_density << ")\n";
    std::cout << "wrote " << out_path(cfg, "constants.json") << "\n";
    return 0;
}

int run_sim(const CommonArgs& args, const std::string& x0_text, const std::string& xhat0_text,
            double T_override) {
    RunConfig cfg = resolve_config(args);
    Instances inst = build_instances(cfg);
    const int n = cfg.n;
    Vec x0 = x0_text.empty() ? Vec{-2.0, 2.0} : parse_point(x0_text, n, "--x0");
    if (static_cast<int>(x0.size()) != n) throw Error(ErrorKind::Config, "--x0 dimension mismatch");
    Vec xhat0 = xhat0_text.empty() ? inst.sets.x_box.center() : parse_point(xhat0_text, n, "--xhat0");
    double T = (T_override > 0.0) ? T_override : (cfg.infinite_horizon ? 25.0 : cfg.T);

    Trajectory sfb = simulate_state_feedback(inst.sys, inst.ctrl, inst.sets, x0, T, cfg.integrator);
    Trajectory ofb = simulate_output_feedback(inst.sys, inst.ctrl, inst.design, inst.sets, x0, xhat0, T,
                                              cfg.integrator);
    write_trajectory_csv(out_path(cfg, "sfb.csv"), sfb);
    write_trajectory_csv(out_path(cfg, "ofb.csv"), ofb);

    ordered_json j;
    j["T"] = T;
    j["x0"] = x0;
    j["xhat0"] = xhat0;
    j["epsilon"] = cfg.epsilon;
    j["sup_distance"] = sup_distance(ofb, sfb);
    ordered_json sat = ordered_json::array();
    for (auto [a, b] : saturation_intervals(ofb, cfg.u_max)) sat.push_back({a, b});
    j["ofb_saturation_intervals"] = sat;
    ordered_json sat_sfb = ordered_json::array();
    for (auto [a, b] : saturation_intervals(sfb, cfg.u_max)) sat_sfb.push_back({a, b});
    j["sfb_saturation_intervals"] = sat_sfb;
    write_json(out_path(cfg, "sim_summary.json"), j);
    std::cout << "sup distance " << j["sup_distance"] << "\n";
    std::cout << "wrote " << out_path(cfg, "sfb.csv") << ", " << out_path(cfg, "ofb.csv") << ", "
              << out_path(cfg, "sim_summary.json") << "\n";
    return 0;
}

int run_bound(const CommonArgs& args, double target_xi, double T_override, const std::string& mode_text) {
    RunConfig cfg = resolve_config(args);
    Instances inst = build_instances(cfg);
    ConstantsReport constants = estimate_constants(inst.sys, inst.ctrl, inst.sets,
                                                   cfg.constants_grid_density, {}, cfg.safety_factor,
                                                   cfg.threads);
    if (cfg.k_override) constants.k = *cfg.k_override;
    BoundMode mode = (mode_text == "general") ? BoundMode::General : BoundMode::Stable;
    double T = (T_override > 0.0) ? T_override : (cfg.infinite_horizon ? 25.0 : cfg.T);

    double eps = cfg.epsilon;
    ObserverDesign design = inst.design;
    if (target_xi > 0.0) {
        eps = epsilon_for_xi(target_xi, T, constants, inst.ctrl, design, mode);
        design = redesign_for_epsilon(design, eps);
        std::cout << "largest feasible epsilon for xi <= " << target_xi << ": " << eps << "\n";
    }
    BoundReport rep = xi_for_epsilon(eps, T, constants, inst.ctrl, design, mode, {}, cfg.literal_c2hat);
    write_json(out_path(cfg, "bound.json"), bound_report_json(rep));
    std::cout << "xi (paper: delta) = " << rep.xi << " at epsilon = " << eps << ", T = " << T << " ("
              << mode_text << " mode)\n";
    std::cout << "wrote " << out_path(cfg, "bound.json") << "\n";
    return 0;
}

int run_reach(const CommonArgs& args, double xi_flag) {
    RunConfig cfg = resolve_config(args);
    Instances inst = build_instances(cfg);
    double xi = (xi_flag >= 0.0) ? xi_flag : cfg.reach_xi;
    TubeConfig tube = inst.pipeline.tube;
    tube.threads = cfg.threads;
    auto res = invariant_set(inst.grid, inst.sys, inst.ctrl, inst.sets, horizon_of(cfg), xi, inst.v_mode,
                             tube, cfg.include_saturation);
    write_field_csv(out_path(cfg, "field_delta.csv"), res.delta);
    if (cfg.emit_contours && inst.grid.dim() == 2)
        write_contours_csv(out_path(cfg, "contour_delta.csv"), zero_contours(res.delta));
    ordered_json j;
    j["xi"] = xi;
    j["area_delta"] = set_area(res.delta);
    j["horizon_used"] = res.horizon_used;
    j["steps"] = res.steps;
    j["verdicts"] = {{"empty_delta", res.empty_warning}, {"eroded_box_empty", res.eroded_box_empty}};
    write_json(out_path(cfg, "areas.json"), j);
    std::cout << "area(Delta) = " << j["area_delta"] << (res.empty_warning ? "  [warning: empty set]" : "")
              << "\n";
    std::cout << "wrote " << out_path(cfg, "field_delta.csv") << ", " << out_path(cfg, "areas.json")
              << "\n";
    return 0;
}

int run_sweep(const CommonArgs& args, std::vector<double> betas) {
    RunConfig cfg = resolve_config(args);
    Instances inst = build_instances(cfg);
    if (betas.empty())
        for (int i = 1; i <= 10; ++i) betas.push_back(0.05 * i);
    TubeConfig tube = inst.pipeline.tube;
    tube.threads = cfg.threads;
    BetaSweepResult sweep = beta_sweep(betas, inst.sys, inst.sets, inst.grid, horizon_of(cfg),
                                       cfg.reach_xi, inst.v_mode, tube, cfg.include_saturation, cfg.v);
    std::string path = out_path(cfg, "sweep.csv");
    std::ofstream out(path);
    out << "beta,area,error\n";
    for (const auto& e : sweep.entries)
        out << e.beta << "," << e.area << "," << (e.error.empty() ? "" : "\"" + e.error + "\"") << "\n";
    std::cout << "best beta = " << sweep.best_beta << " with area " << sweep.best_area << "\n";
    std::cout << "wrote " << path << "\n";
    return 0;
}

int run_pipeline(const CommonArgs& args, const std::string& mode_text, double T_override) {
    RunConfig cfg = resolve_config(args);
    if (mode_text == "finite") cfg.infinite_horizon = false;
    else if (mode_text == "infinite") cfg.infinite_horizon = true;
    else if (!mode_text.empty())
        throw Error(ErrorKind::Config, "--mode must be 'finite' or 'infinite'");
    if (T_override > 0.0) cfg.T = T_override;
    Instances inst = build_instances(cfg);

    VerificationReport rep =
        cfg.infinite_horizon
            ? infinite_horizon_pipeline(inst.sys, inst.ctrl, inst.design, inst.sets, inst.pipeline)
            : finite_horizon_pipeline(inst.sys, inst.ctrl, inst.design, inst.sets, cfg.T, inst.pipeline);

    write_json(out_path(cfg, "report.json"), verification_report_json(rep));
    write_field_csv(out_path(cfg, "field_delta_tilde.csv"), rep.delta_tilde);
    if (rep.has_delta) write_field_csv(out_path(cfg, "field_delta.csv"), rep.delta);
    if (cfg.emit_contours && rep.delta_tilde.grid.dim() == 2) {
        write_contours_csv(out_path(cfg, "contour_delta_tilde.csv"), zero_contours(rep.delta_tilde));
        if (rep.has_delta)
            write_contours_csv(out_path(cfg, "contour_delta.csv"), zero_contours(rep.delta));
    }
    std::cout << "mode " << (cfg.infinite_horizon ? "infinite" : "finite") << ", epsilon " << rep.epsilon
              << "\n";
    if (cfg.infinite_horizon) std::cout << "T1 = " << rep.T1 << " s, c = " << rep.c << "\n";
    std::cout << "xi (paper: delta) = " << rep.bound.xi << "\n";
    std::cout << "area(Delta~) = " << rep.area_delta_tilde;
    if (rep.has_delta) std::cout << ", area(Delta) = " << rep.area_delta;
    std::cout << "\n";
    if (rep.cap_violation)
        std::cout << "warning: epsilon is at or above the cap " << rep.binding_cap
                  << "; the invariance certificate does not apply at this epsilon\n";
    if (rep.empty_delta_tilde) std::cout << "warning: Delta~ is empty\n";
    std::cout << "wrote " << out_path(cfg, "report.json") << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"safety verification for output-feedback linearizable systems"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string x0_text, xhat0_text, mode_text = "stable", pipe_mode;
    double target_xi = 0.0, T_override = 0.0, xi_flag = -1.0;
    std::vector<double> betas;

    CLI::App* c_const = app.add_subcommand("constants", "estimate the model constants");
    add_common(c_const, args);

    CLI::App* c_sim = app.add_subcommand("sim", "simulate state- and output-feedback trajectories");
    add_common(c_sim, args);
    c_sim->add_option("--x0", x0_text, "initial state, comma separated");
    c_sim->add_option("--xhat0", xhat0_text, "initial estimate (default: X_safe center)");
    c_sim->add_option("--T", T_override, "simulation horizon in seconds");

    CLI::App* c_bound = app.add_subcommand("bound", "evaluate the trajectory-distance bound");
    add_common(c_bound, args);
    c_bound->add_option("--target-xi", target_xi, "find the largest epsilon meeting this bound");
    c_bound->add_option("--T", T_override, "bound horizon in seconds");
    c_bound->add_option("--mode", mode_text, "bound mode: stable or general");

    CLI::App* c_reach = app.add_subcommand("reach", "compute the safety-invariant set");
    add_common(c_reach, args);
    c_reach->add_option("--xi", xi_flag, "safe-set erosion depth");

    CLI::App* c_sweep = app.add_subcommand("sweep", "sweep the controller parameter beta");
    add_common(c_sweep, args);
    c_sweep->add_option("--betas", betas, "beta values (default 0.05..0.5 step 0.05)");

    CLI::App* c_pipe = app.add_subcommand("pipeline", "run the end-to-end certification pipeline");
    add_common(c_pipe, args);
    c_pipe->add_option("--mode", pipe_mode, "finite or infinite (default: config horizon)");
    c_pipe->add_option("--T", T_override, "finite-mode horizon in seconds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (c_const->parsed()) return run_constants(args);
        if (c_sim->parsed()) return run_sim(args, x0_text, xhat0_text, T_override);
        if (c_bound->parsed()) return run_bound(args, target_xi, T_override, mode_text);
        if (c_reach->parsed()) return run_reach(args, xi_flag);
        if (c_sweep->parsed()) return run_sweep(args, betas);
        if (c_pipe->parsed()) return run_pipeline(args, pipe_mode, T_override);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return (e.kind() == ErrorKind::Parse || e.kind() == ErrorKind::Config) ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
