#include "ofsafe/config.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace ofsafe {

using nlohmann::json;

RunConfig preset_double_integrator() {
    RunConfig cfg;
    cfg.n = 2;
    cfg.a_text = "1";
    cfg.b_text = "0";
    cfg.a0 = 1.0;
    cfg.beta = 0.2;
    cfg.v = VSpec{VSpec::Kind::Constant, 0.0, 0.0};
    cfg.u_max = 1.0;
    cfg.alphas = {4.0, 4.0};
    cfg.epsilon = 0.01;
    cfg.rho = 0.0;
    cfg.x_box = Box{{-4.0, -3.0}, {4.0, 3.0}};
    cfg.infinite_horizon = true;
    cfg.T = 5.0;
    cfg.grid_nodes = {101, 101};
    cfg.label = "double-integrator";
    return cfg;
}

namespace {

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::Config, std::string("config field '") + key + "' has the wrong type");
    }
}

template <typename T>
T required_field(const json& j, const char* block, const char* key) {
    if (!j.contains(key))
        throw Error(ErrorKind::Config,
                    std::string("config block '") + block + "' is missing the field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::Config,
                    std::string("config field '") + block + "." + key + "' has the wrong type");
    }
}

Box box_from_json(const json& j, const char* what) {
    Box box;
    for (const auto& pair : j) {
        if (!pair.is_array() || pair.size() != 2)
            throw Error(ErrorKind::Config, std::string(what) + " entries must be [lo, hi] pairs");
        double lo = pair.at(0).get<double>();
        double hi = pair.at(1).get<double>();
        box.lo.push_back(lo);
        box.hi.push_back(hi);
    }
    return box;
}

} // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("config parse error: ") + e.what());
    }

    RunConfig cfg;
    if (!j.contains("system")) throw Error(ErrorKind::Config, "config is missing the 'system' block");
    const json& sys = j.at("system");
    cfg.n = required_field<int>(sys, "system", "n");
    cfg.a_text = required_field<std::string>(sys, "system", "a");
    cfg.b_text = required_field<std::string>(sys, "system", "b");
    cfg.a0 = required_field<double>(sys, "system", "a0");

    if (!j.contains("controller"))
        throw Error(ErrorKind::Config, "config is missing the 'controller' block");
    const json& ctl = j.at("controller");
    if (ctl.contains("beta")) cfg.beta = ctl.at("beta").get<double>();
    if (ctl.contains("K")) cfg.K = ctl.at("K").get<Vec>();
    if (!cfg.beta && cfg.K.empty())
        throw Error(ErrorKind::Config, "controller block needs either 'beta' or 'K'");
    cfg.u_max = required_field<double>(ctl, "controller", "u_max");
    if (ctl.contains("v")) {
        const json& v = ctl.at("v");
        std::string mode = field_or<std::string>(v, "mode", "constant");
        if (mode == "constant") cfg.v = VSpec{VSpec::Kind::Constant, field_or<double>(v, "value", 0.0), 0.0};
        else if (mode == "interval")
            cfg.v = VSpec{VSpec::Kind::Interval, 0.0, required_field<double>(v, "controller.v", "v_max")};
        else throw Error(ErrorKind::Config, "controller.v.mode must be 'constant' or 'interval'");
    }

    if (!j.contains("observer")) throw Error(ErrorKind::Config, "config is missing the 'observer' block");
    const json& obs = j.at("observer");
    cfg.alphas = required_field<Vec>(obs, "observer", "alphas");
    cfg.epsilon = required_field<double>(obs, "observer", "epsilon");
    cfg.rho = field_or<double>(obs, "rho", 0.0);

    if (!j.contains("sets")) throw Error(ErrorKind::Config, "config is missing the 'sets' block");
    cfg.x_box = box_from_json(j.at("sets").at("x_box"), "sets.x_box");

    if (j.contains("horizon")) {
        const json& hz = j.at("horizon");
        std::string mode = field_or<std::string>(hz, "mode", "infinite");
        if (mode == "infinite") cfg.infinite_horizon = true;
        else if (mode == "finite") {
            cfg.infinite_horizon = false;
            cfg.T = required_field<double>(hz, "horizon", "T");
        } else throw Error(ErrorKind::Config, "horizon.mode must be 'finite' or 'infinite'");
    } else {
        cfg.infinite_horizon = true;
    }

    if (j.contains("grid")) {
        const json& g = j.at("grid");
        cfg.grid_nodes = field_or<std::vector<int>>(g, "nodes", {101, 101});
        if (g.contains("extents")) cfg.grid_extents = box_from_json(g.at("extents"), "grid.extents");
        cfg.grid_inflate = field_or<double>(g, "inflate", 0.25);
    } else {
        cfg.grid_nodes = {101, 101};
    }

    if (j.contains("integrator")) {
        const json& it = j.at("integrator");
        std::string method = field_or<std::string>(it, "method", "rk4");
        if (method == "rk4") cfg.integrator.method = IntegratorMethod::Rk4;
        else if (method == "rk45") cfg.integrator.method = IntegratorMethod::Rk45;
        else throw Error(ErrorKind::Config, "integrator.method must be 'rk4' or 'rk45'");
        cfg.integrator.base_step = field_or<double>(it, "base_step", 1e-3);
        cfg.integrator.transient_step = field_or<double>(it, "transient_step", 0.0);
        cfg.integrator.abs_tol = field_or<double>(it, "abs_tol", 1e-8);
        cfg.integrator.rel_tol = field_or<double>(it, "rel_tol", 1e-8);
    }

    if (j.contains("reach")) {
        const json& r = j.at("reach");
        cfg.reach_xi = field_or<double>(r, "xi", 0.0);
        cfg.v_mode = field_or<std::string>(r, "v_mode", "fixed");
        cfg.include_saturation = field_or<bool>(r, "include_saturation", true);
        cfg.converge_tol = field_or<double>(r, "converge_tol", 1e-4);
    }

    if (j.contains("flags")) {
        const json& f = j.at("flags");
        cfg.strict_caps = field_or<bool>(f, "strict_caps", false);
        cfg.literal_c2hat = field_or<bool>(f, "c2hat_literal", false);
        if (f.contains("k_override")) cfg.k_override = f.at("k_override").get<double>();
    }

    if (j.contains("constants")) {
        const json& c = j.at("constants");
        cfg.constants_grid_density = field_or<int>(c, "grid_density", 41);
        cfg.safety_factor = field_or<double>(c, "safety_factor", 1.1);
    }

    if (j.contains("output")) {
        const json& o = j.at("output");
        cfg.out_dir = field_or<std::string>(o, "dir", ".");
        cfg.label = field_or<std::string>(o, "label", "run");
        cfg.emit_contours = field_or<bool>(o, "emit_contours", true);
    }
    cfg.threads = field_or<int>(j, "threads", 0);
    cfg.seed = field_or<unsigned>(j, "seed", 0u);

    validate_config(cfg);
    return cfg;
}

void validate_config(const RunConfig& cfg) {
    if (cfg.n < 1) throw Error(ErrorKind::Config, "system.n must be at least 1");
    if (cfg.a_text.empty()) throw Error(ErrorKind::Config, "system.a expression is missing");
    if (cfg.b_text.empty()) throw Error(ErrorKind::Config, "system.b expression is missing");
    if (cfg.a0 <= 0.0) throw Error(ErrorKind::Config, "system.a0 must be positive");
    if (cfg.u_max <= 0.0) throw Error(ErrorKind::Config, "controller.u_max must be positive");
    if (!cfg.K.empty() && static_cast<int>(cfg.K.size()) != cfg.n)
        throw Error(ErrorKind::Config, "controller.K must have length n");
    if (static_cast<int>(cfg.alphas.size()) != cfg.n)
        throw Error(ErrorKind::Config, "observer.alphas must have length n");
    if (cfg.epsilon <= 0.0) throw Error(ErrorKind::Config, "observer.epsilon must be positive");
    if (cfg.x_box.dim() != cfg.n)
        throw Error(ErrorKind::Config, "sets.x_box must list one [lo, hi] interval per dimension");
    for (int i = 0; i < cfg.x_box.dim(); ++i) {
        std::size_t si = static_cast<std::size_t>(i);
        if (!(cfg.x_box.lo[si] < cfg.x_box.hi[si]) || !std::isfinite(cfg.x_box.lo[si]) ||
            !std::isfinite(cfg.x_box.hi[si]))
            throw Error(ErrorKind::Config, "sets.x_box interval " + std::to_string(i + 1) + " is empty");
    }
    if (!cfg.infinite_horizon && cfg.T <= 0.0)
        throw Error(ErrorKind::Config, "horizon.T must be positive in finite mode");
    for (int c : cfg.grid_nodes)
        if (c < 3) throw Error(ErrorKind::Config, "grid.nodes entries must be at least 3");
    if (cfg.v_mode != "fixed" && cfg.v_mode != "helpful" && cfg.v_mode != "adversarial")
        throw Error(ErrorKind::Config, "reach.v_mode must be fixed, helpful or adversarial");
    if (cfg.reach_xi < 0.0) throw Error(ErrorKind::Config, "reach.xi must be nonnegative");
    if (cfg.constants_grid_density < 2)
        throw Error(ErrorKind::Config, "constants.grid_density must be at least 2");
}

Instances build_instances(const RunConfig& cfg) {
    validate_config(cfg);
    Instances inst;
    try {
        inst.sys.a = Expr::parse(cfg.a_text);
    } catch (const ParseError& e) {
        throw Error(ErrorKind::Parse, std::string("system.a: ") + e.what());
    }
    try {
        inst.sys.b = Expr::parse(cfg.b_text);
    } catch (const ParseError& e) {
        throw Error(ErrorKind::Parse, std::string("system.b: ") + e.what());
    }
    inst.sys.n = cfg.n;
    inst.sys.a0 = cfg.a0;
    inst.sys.a.validate_vars(cfg.n);
    inst.sys.b.validate_vars(cfg.n);

    if (!cfg.K.empty()) {
        inst.ctrl.K = cfg.K;
        inst.ctrl.beta = cfg.beta;
        inst.ctrl.v = cfg.v;
    } else {
        inst.ctrl = controller_from_beta(*cfg.beta, cfg.n, cfg.v);
    }
    inst.sets = ConstraintSets{cfg.x_box, cfg.u_max};
    inst.design = build_observer(cfg.alphas, cfg.epsilon, cfg.rho);

    if (cfg.grid_extents) {
        Grid g;
        for (int i = 0; i < cfg.grid_extents->dim(); ++i) {
            std::size_t si = static_cast<std::size_t>(i);
            int count = (si < cfg.grid_nodes.size()) ? cfg.grid_nodes[si] : cfg.grid_nodes.back();
            g.axes.push_back(GridAxis{cfg.grid_extents->lo[si], cfg.grid_extents->hi[si], count});
        }
        inst.grid = g;
    } else {
        std::vector<int> nodes = cfg.grid_nodes;
        nodes.resize(static_cast<std::size_t>(cfg.n), nodes.empty() ? 101 : nodes.back());
        inst.grid = Grid::inflate_box(cfg.x_box, cfg.grid_inflate, nodes);
    }

    inst.pipeline.constants_grid_density = cfg.constants_grid_density;
    inst.pipeline.safety_factor = cfg.safety_factor;
    inst.pipeline.grid = inst.grid;
    inst.pipeline.grid_nodes = cfg.grid_nodes;
    inst.pipeline.grid_inflate = cfg.grid_inflate;
    inst.pipeline.tube.converge_tol = cfg.converge_tol;
    inst.pipeline.include_saturation = cfg.include_saturation;
    inst.pipeline.strict_caps = cfg.strict_caps;
    inst.pipeline.literal_c2hat = cfg.literal_c2hat;
    inst.pipeline.k_override = cfg.k_override;
    inst.pipeline.threads = cfg.threads;
    if (cfg.v_mode == "helpful") inst.v_mode = VMode::Helpful;
    else if (cfg.v_mode == "adversarial") inst.v_mode = VMode::Adversarial;
    inst.pipeline.v_mode = inst.v_mode;
    return inst;
}

} // namespace ofsafe
