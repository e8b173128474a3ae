#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ofsafe/plant.hpp"

namespace ofsafe {

struct GridAxis {
    double lo = 0.0, hi = 0.0;
    int count = 0;
    double dx() const { return (hi - lo) / (count - 1); }
};

struct Grid {
    std::vector<GridAxis> axes;

    int dim() const { return static_cast<int>(axes.size()); }
    std::size_t size() const;
    double coord(int axis, int idx) const {
        const GridAxis& a = axes[static_cast<std::size_t>(axis)];
        return a.lo + a.dx() * idx;
    }
    void node(std::size_t flat, std::span<double> out) const;
    double cell_volume() const;
    double diameter() const;
    bool same_as(const Grid& other) const;

    // X_safe inflated by the given fraction of its width on every side
    static Grid inflate_box(const Box& box, double frac, std::span<const int> counts);
};

// Grid-sampled level-set function. The construction primitives below use the
// signed-distance orientation: negative inside the represented set, positive
// outside. invariant_set returns the opposite ("safety") orientation, with
// positive values marking certified-safe nodes; that is the convention the
// containment and area queries on Delta expect.
struct LevelSetField {
    Grid grid;
    std::vector<double> v;

    double min_value() const;
    double max_value() const;
    bool has_negative() const;
    bool has_positive() const;
};

// Exact Euclidean signed distance to an axis-aligned box.
LevelSetField sdf_box(const Grid& grid, const Box& box);

// Adds xi to every value: the (negative-inside) set keeps only points at
// depth >= xi. Exact for signed-distance inputs.
LevelSetField erode(const LevelSetField& field, double xi);

LevelSetField union_fields(const LevelSetField& a, const LevelSetField& b);        // min
LevelSetField intersect_fields(const LevelSetField& a, const LevelSetField& b);    // max
LevelSetField complement_field(const LevelSetField& a);                            // negate

// F = X_safe^c  union  { x : |gbar(x, v=0)| > u_max }, negative inside F.
// The saturation part is |gbar|-u_max rescaled by a central-difference
// gradient estimate so magnitudes approximate distances.
LevelSetField failure_set(const Grid& grid, const ConstraintSets& sets, const NormalFormSystem& sys,
                          const LinearizingController& ctrl, bool include_saturation = true);

enum class VMode { FixedZero, Helpful, Adversarial };

// Flow field handed to the tube solver plus per-dimension bounds on |f_i|
// over the grid (the Lax-Friedrichs dissipation coefficients).
struct TubeDynamics {
    std::function<void(std::span<const double>, std::span<double>)> f;
    Vec alpha_bound;
    Vec B;              // input direction for the v term
    double v_max = 0.0; // reference amplitude in helpful/adversarial mode
};

TubeDynamics closed_loop_tube_dynamics(const LinearizingController& ctrl, const Grid& grid);

struct TubeConfig {
    double cfl = 0.5;
    double dt_override = 0.0;    // 0 selects the CFL step
    double converge_tol = 1e-4;  // max |dphi| per unit time, converged mode
    long max_steps = 1000000;
    bool assert_monotone = false;
    int threads = 0;
};

// Backward reachable tube: evolves the frozen level-set equation so nodes
// whose forward flow ever enters the (negative) initial set become and stay
// negative. First-order upwind Lax-Friedrichs Hamiltonian, two-stage TVD
// Runge-Kutta, CFL 0.5.
LevelSetField solve_backward_tube(const LevelSetField& field0, const TubeDynamics& dyn, VMode v_mode,
                                  double T, const TubeConfig& cfg);

struct HorizonSpec {
    bool converged = false; // run to a fixed point instead of a fixed horizon
    double T = 0.0;
};

struct InvariantSetResult {
    LevelSetField delta;    // positive inside Delta
    bool empty_warning = false;
    bool eroded_box_empty = false;
    double horizon_used = 0.0;
    long steps = 0;
};

// Safety-invariant set for the saturated state-feedback loop and the eroded
// safe set (X_safe - xi): complement of the backward tube of the failure
// set, intersected with (X_safe - xi).
InvariantSetResult invariant_set(const Grid& grid, const NormalFormSystem& sys,
                                 const LinearizingController& ctrl, const ConstraintSets& sets,
                                 HorizonSpec horizon, double xi, VMode v_mode, const TubeConfig& cfg,
                                 bool include_saturation = true);

// cell volume times the count of strictly positive nodes
double set_area(const LevelSetField& field);

struct BetaSweepEntry {
    double beta = 0.0;
    double area = 0.0;
    LevelSetField field;
    std::string error; // empty on success
};

struct BetaSweepResult {
    std::vector<BetaSweepEntry> entries;
    double best_beta = 0.0;
    double best_area = -1.0;
};

BetaSweepResult beta_sweep(std::span<const double> betas, const NormalFormSystem& sys,
                           const ConstraintSets& sets, const Grid& grid, HorizonSpec horizon, double xi,
                           VMode v_mode, const TubeConfig& cfg, bool include_saturation = true,
                           VSpec v = {});

struct OracleConfig {
    double step = 0.01;
    double blowup = 1e6;
    int threads = 0;
};

// Trajectory oracle: integrates the saturated state-feedback loop from every
// node and marks it safe when the state stays in (X_safe - xi) with
// |gbar(x)| <= u_max at every accepted step. Divergent nodes are unsafe.
std::vector<std::uint8_t> brute_force_invariant(const Grid& grid, const NormalFormSystem& sys,
                                                const LinearizingController& ctrl,
                                                const ConstraintSets& sets, double T, double xi,
                                                const OracleConfig& cfg);

// inner membership: field value <= 0; outer membership: field value > 0
bool contains(const LevelSetField& inner, const LevelSetField& outer);

struct QuadraticSet {
    Matrix Q;
    double c = 0.0;
};

// inner membership: x^T Q x <= c
bool contains(const QuadraticSet& inner, const LevelSetField& outer);

void write_field_csv(const std::string& path, const LevelSetField& field);

using Polyline = std::vector<std::array<double, 2>>;
std::vector<Polyline> zero_contours(const LevelSetField& field); // 2-D only
void write_contours_csv(const std::string& path, const std::vector<Polyline>& polylines);

} // namespace ofsafe
