#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ofsafe/observer.hpp"
#include "ofsafe/plant.hpp"

namespace ofsafe {

struct Trajectory {
    Vec times;                  // strictly increasing from 0, seconds
    std::vector<Vec> states;    // x per time
    Vec controls;               // applied u per time
    std::vector<Vec> estimates; // xhat per time (output feedback only)

    double horizon() const { return times.empty() ? 0.0 : times.back(); }
};

enum class IntegratorMethod { Rk4, Rk45 };

struct IntegratorConfig {
    IntegratorMethod method = IntegratorMethod::Rk4;
    double base_step = 1e-3;
    double transient_step = 0.0; // 0 selects epsilon / 20
    double abs_tol = 1e-8;       // adaptive mode
    double rel_tol = 1e-8;
    double blowup = 1e6;
};

// Integrates the plant under the saturated linearizing controller fed the
// true state (so state feedback also respects u_max). In the unsaturated
// region this is exactly the linear closed loop.
Trajectory simulate_state_feedback(const NormalFormSystem& sys, const LinearizingController& ctrl,
                                   const ConstraintSets& sets, Vec x0, double T,
                                   const IntegratorConfig& cfg);

// Co-integrates the 2n-dimensional plant + observer loop with u evaluated at
// the estimate. A refined step (default epsilon/20) is used on the stiff
// boundary-layer window [0, 5 T(eps)], with T(eps) taken from the actual
// initial error norm.
Trajectory simulate_output_feedback(const NormalFormSystem& sys, const LinearizingController& ctrl,
                                    const ObserverDesign& design, const ConstraintSets& sets, Vec x0,
                                    Vec xhat0, double T, const IntegratorConfig& cfg);

// max over the union time grid of the Euclidean distance between linearly
// interpolated states; horizons must agree.
double sup_distance(const Trajectory& a, const Trajectory& b);

// closed intervals where |u| reaches u_max (within tol)
std::vector<std::pair<double, double>> saturation_intervals(const Trajectory& traj, double u_max,
                                                            double tol = 1e-9);

// header t,x1..xn,u[,xhat1..xhatn], one row per accepted step
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

} // namespace ofsafe
