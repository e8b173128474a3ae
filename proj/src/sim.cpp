#include "ofsafe/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <span>

#include "ofsafe/bounds.hpp"

namespace ofsafe {

namespace {

using Rhs = std::function<void(double, const Vec&, Vec&)>;

struct StepRecorder {
    std::function<void(double, const Vec&)> on_accept;
};

void rk4_span(const Rhs& rhs, Vec& z, double t0, double t1, double h_nominal, double blowup,
              const StepRecorder& rec) {
    const std::size_t dim = z.size();
    Vec k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
    double t = t0;
    while (t < t1 - 1e-15) {
        double h = std::min(h_nominal, t1 - t);
        rhs(t, z, k1);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = z[i] + 0.5 * h * k1[i];
        rhs(t + 0.5 * h, tmp, k2);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = z[i] + 0.5 * h * k2[i];
        rhs(t + 0.5 * h, tmp, k3);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = z[i] + h * k3[i];
        rhs(t + h, tmp, k4);
        for (std::size_t i = 0; i < dim; ++i) z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        t += h;
        if (norm_inf(z) > blowup || !std::isfinite(z[0]))
            throw Error(ErrorKind::BlowUp, "trajectory norm exceeded " + std::to_string(blowup) +
                                               " at t = " + std::to_string(t));
        rec.on_accept(t, z);
    }
}

// Dormand-Prince 5(4) with standard PI-free step control
void rk45_span(const Rhs& rhs, Vec& z, double t0, double t1, double h0, double abs_tol, double rel_tol,
               double blowup, const StepRecorder& rec) {
    static const double a[7][6] = {
        {0, 0, 0, 0, 0, 0},
        {1.0 / 5, 0, 0, 0, 0, 0},
        {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
        {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0},
        {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
    };
    static const double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    static const double b5[7] = {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0};
    static const double b4[7] = {5179.0 / 57600, 0,           7571.0 / 16695, 393.0 / 640,
                                 -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
    const std::size_t dim = z.size();
    std::array<Vec, 7> k;
    for (auto& ki : k) ki.resize(dim);
    Vec tmp(dim), znew(dim), err(dim);
    double t = t0;
    double h = std::min(h0, t1 - t0);
    long rejects_in_a_row = 0;
    while (t < t1 - 1e-15) {
        h = std::min(h, t1 - t);
        rhs(t, z, k[0]);
        for (int s = 1; s < 7; ++s) {
            for (std::size_t i = 0; i < dim; ++i) {
                double acc = 0.0;
                for (int j = 0; j < s; ++j) acc += a[s][j] * k[static_cast<std::size_t>(j)][i];
                tmp[i] = z[i] + h * acc;
            }
            rhs(t + c[s] * h, tmp, k[static_cast<std::size_t>(s)]);
        }
        double err_norm = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            double y5 = 0.0, y4 = 0.0;
            for (int s = 0; s < 7; ++s) {
                y5 += b5[s] * k[static_cast<std::size_t>(s)][i];
                y4 += b4[s] * k[static_cast<std::size_t>(s)][i];
            }
            znew[i] = z[i] + h * y5;
            double e = h * (y5 - y4);
            double sc = abs_tol + rel_tol * std::max(std::abs(z[i]), std::abs(znew[i]));
            err_norm += (e / sc) * (e / sc);
        }
        err_norm = std::sqrt(err_norm / static_cast<double>(dim));
        if (err_norm <= 1.0 || h <= 1e-12) {
            t += h;
            z = znew;
            if (norm_inf(z) > blowup || !std::isfinite(z[0]))
                throw Error(ErrorKind::BlowUp, "trajectory norm exceeded " + std::to_string(blowup) +
                                                   " at t = " + std::to_string(t));
            rec.on_accept(t, z);
            rejects_in_a_row = 0;
        } else if (++rejects_in_a_row > 400) {
            throw Error(ErrorKind::NonConvergence, "adaptive integrator cannot meet the tolerance");
        }
        double fac = 0.9 * std::pow(std::max(err_norm, 1e-10), -0.2);
        h *= std::clamp(fac, 0.2, 5.0);
        h = std::clamp(h, 1e-12, 0.1);
    }
}

} // namespace

Trajectory simulate_state_feedback(const NormalFormSystem& sys, const LinearizingController& ctrl,
                                   const ConstraintSets& sets, Vec x0, double T,
                                   const IntegratorConfig& cfg) {
    if (T <= 0.0) throw Error(ErrorKind::Config, "simulate_state_feedback: horizon must be positive");
    for (double v : x0)
        if (!std::isfinite(v)) throw Error(ErrorKind::Config, "simulate_state_feedback: x0 not finite");
    const double v_ref = (ctrl.v.kind == VSpec::Kind::Constant) ? ctrl.v.value : 0.0;

    Trajectory traj;
    auto record = [&](double t, const Vec& x) {
        traj.times.push_back(t);
        traj.states.push_back(x);
        traj.controls.push_back(saturated_control(sys, ctrl, sets, x, v_ref));
    };
    record(0.0, x0);

    Rhs rhs = [&](double, const Vec& x, Vec& dx) {
        double u = saturated_control(sys, ctrl, sets, x, v_ref);
        dx = plant_rhs(sys, x, u);
    };
    StepRecorder rec{[&](double t, const Vec& x) { record(t, x); }};
    Vec z = std::move(x0);
    if (cfg.method == IntegratorMethod::Rk4) rk4_span(rhs, z, 0.0, T, cfg.base_step, cfg.blowup, rec);
    else rk45_span(rhs, z, 0.0, T, cfg.base_step, cfg.abs_tol, cfg.rel_tol, cfg.blowup, rec);
    return traj;
}

Trajectory simulate_output_feedback(const NormalFormSystem& sys, const LinearizingController& ctrl,
                                    const ObserverDesign& design, const ConstraintSets& sets, Vec x0,
                                    Vec xhat0, double T, const IntegratorConfig& cfg) {
    if (T <= 0.0) throw Error(ErrorKind::Config, "simulate_output_feedback: horizon must be positive");
    if (!sets.x_box.contains(xhat0))
        throw Error(ErrorKind::Config, "simulate_output_feedback: xhat0 must lie inside X_safe");
    const int n = sys.n;
    const double v_ref = (ctrl.v.kind == VSpec::Kind::Constant) ? ctrl.v.value : 0.0;

    Vec err(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) err[static_cast<std::size_t>(i)] = x0[static_cast<std::size_t>(i)] - xhat0[static_cast<std::size_t>(i)];
    const double k_sim = norm2(err);
    const double t_transient = 5.0 * transient_time(design, k_sim, n);
    const double h_transient = (cfg.transient_step > 0.0) ? cfg.transient_step : design.epsilon / 20.0;

    Trajectory traj;
    auto record = [&](double t, const Vec& z) {
        Vec x(z.begin(), z.begin() + n), xh(z.begin() + n, z.end());
        traj.times.push_back(t);
        traj.controls.push_back(saturated_control(sys, ctrl, sets, xh, v_ref));
        traj.states.push_back(std::move(x));
        traj.estimates.push_back(std::move(xh));
    };

    Vec z(static_cast<std::size_t>(2 * n));
    std::copy(x0.begin(), x0.end(), z.begin());
    std::copy(xhat0.begin(), xhat0.end(), z.begin() + n);
    record(0.0, z);

    Rhs rhs = [&](double, const Vec& zz, Vec& dz) {
        std::span<const double> x(zz.data(), static_cast<std::size_t>(n));
        std::span<const double> xh(zz.data() + n, static_cast<std::size_t>(n));
        double u = saturated_control(sys, ctrl, sets, xh, v_ref);
        double y = x[0];
        Vec dx = plant_rhs(sys, x, u);
        Vec dxh = observer_rhs(sys, design, xh, u, y);
        dz.resize(static_cast<std::size_t>(2 * n));
        std::copy(dx.begin(), dx.end(), dz.begin());
        std::copy(dxh.begin(), dxh.end(), dz.begin() + n);
    };
    StepRecorder rec{[&](double t, const Vec& zz) { record(t, zz); }};
    if (cfg.method == IntegratorMethod::Rk4) {
        double t_switch = std::min(t_transient, T);
        if (t_switch > 0.0) rk4_span(rhs, z, 0.0, t_switch, h_transient, cfg.blowup, rec);
        if (t_switch < T) rk4_span(rhs, z, t_switch, T, cfg.base_step, cfg.blowup, rec);
    } else {
        rk45_span(rhs, z, 0.0, T, h_transient, cfg.abs_tol, cfg.rel_tol, cfg.blowup, rec);
    }
    return traj;
}

namespace {

Vec interp_state(const Trajectory& tr, double t, std::size_t& cursor) {
    while (cursor + 1 < tr.times.size() && tr.times[cursor + 1] < t) ++cursor;
    if (cursor + 1 >= tr.times.size()) return tr.states.back();
    double t0 = tr.times[cursor], t1 = tr.times[cursor + 1];
    double w = (t1 > t0) ? (t - t0) / (t1 - t0) : 0.0;
    w = std::clamp(w, 0.0, 1.0);
    const Vec& a = tr.states[cursor];
    const Vec& b = tr.states[cursor + 1];
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + w * (b[i] - a[i]);
    return out;
}

} // namespace

double sup_distance(const Trajectory& a, const Trajectory& b) {
    if (a.times.empty() || b.times.empty())
        throw Error(ErrorKind::Numeric, "sup_distance: empty trajectory");
    double Ta = a.horizon(), Tb = b.horizon();
    if (std::abs(Ta - Tb) > 1e-9 * std::max(1.0, std::max(Ta, Tb)))
        throw Error(ErrorKind::Numeric, "sup_distance: trajectories cover different horizons (" +
                                            std::to_string(Ta) + " vs " + std::to_string(Tb) + ")");
    Vec grid;
    grid.reserve(a.times.size() + b.times.size());
    grid.insert(grid.end(), a.times.begin(), a.times.end());
    grid.insert(grid.end(), b.times.begin(), b.times.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    double best = 0.0;
    std::size_t ca = 0, cb = 0;
    Vec diff(a.states[0].size());
    for (double t : grid) {
        if (t > std::min(Ta, Tb)) break;
        Vec xa = interp_state(a, t, ca);
        Vec xb = interp_state(b, t, cb);
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = xa[i] - xb[i];
        best = std::max(best, norm2(diff));
    }
    return best;
}

std::vector<std::pair<double, double>> saturation_intervals(const Trajectory& traj, double u_max,
                                                            double tol) {
    std::vector<std::pair<double, double>> out;
    bool open = false;
    double start = 0.0, last = 0.0;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        bool sat = std::abs(traj.controls[i]) >= u_max - tol;
        if (sat && !open) {
            open = true;
            start = traj.times[i];
        }
        if (sat) last = traj.times[i];
        if (!sat && open) {
            open = false;
            out.emplace_back(start, last);
        }
    }
    if (open) out.emplace_back(start, last);
    return out;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Config, "cannot open '" + path + "' for writing");
    const int n = traj.states.empty() ? 0 : static_cast<int>(traj.states[0].size());
    out << "t";
    for (int i = 0; i < n; ++i) out << ",x" << (i + 1);
    out << ",u";
    if (!traj.estimates.empty())
        for (int i = 0; i < n; ++i) out << ",xhat" << (i + 1);
    out << "\n";
    char buf[64];
    for (std::size_t r = 0; r < traj.times.size(); ++r) {
        std::snprintf(buf, sizeof(buf), "%.17g", traj.times[r]);
        out << buf;
        for (int i = 0; i < n; ++i) {
            std::snprintf(buf, sizeof(buf), ",%.17g", traj.states[r][static_cast<std::size_t>(i)]);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.17g", traj.controls[r]);
        out << buf;
        if (!traj.estimates.empty())
            for (int i = 0; i < n; ++i) {
                std::snprintf(buf, sizeof(buf), ",%.17g", traj.estimates[r][static_cast<std::size_t>(i)]);
                out << buf;
            }
        out << "\n";
    }
}

} // namespace ofsafe
