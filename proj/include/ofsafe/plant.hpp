#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ofsafe/expr.hpp"
#include "ofsafe/numkit.hpp"

namespace ofsafe {

// Single-input system in normal form: xdot = A x + B [b(x) + a(x) u],
// y = x1, with A the superdiagonal shift, B = e_n, C = e_1^T.
struct NormalFormSystem {
    int n = 0;
    Expr a;
    Expr b;
    double a0 = 0.0; // lower bound a(x) >= a0 > 0 on the working region

    double a_at(std::span<const double> x) const { return a.eval(x); }
    double b_at(std::span<const double> x) const { return b.eval(x); }
};

struct Box {
    Vec lo, hi;

    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(std::span<const double> x, double shrink = 0.0) const;
    double diameter() const;
    Vec center() const;
    // interior depth (min distance to a face), negative outside
    double depth(std::span<const double> x) const;
};

struct ConstraintSets {
    Box x_box;          // X_safe
    double u_max = 0.0; // U_safe = [-u_max, u_max]
};

struct VSpec {
    enum class Kind { Constant, Interval };
    Kind kind = Kind::Constant;
    double value = 0.0; // Constant
    double v_max = 0.0; // Interval [-v_max, v_max]
};

struct LinearizingController {
    Vec K;
    std::optional<double> beta; // set when K follows the (-beta, ..., -beta) pattern
    VSpec v;
};

LinearizingController controller_from_beta(double beta, int n, VSpec v = {});

// Sampled constants feeding the distance-bound formulas. The raw fields hold
// the grid maxima; M1/gamma/C1 carry the safety factor.
struct ConstantsReport {
    double M1 = 0.0;    // Lipschitz constant of b(x) + a(x) u in x
    double M2 = 0.0;    // max |a(x)| over X_safe
    double gamma = 0.0; // Lipschitz constant of the unsaturated controller
    double L = 0.0;     // max |a(x)| over Omega_c (upper-bounded by M2 here)
    double C1 = 0.0;    // bound on ||A x + B [b(x)+a(x)u]||_2
    double k = 0.0;     // bound on ||x(0) - xhat(0)||_2
    double x_max = 0.0; // max ||x||_2^2 over X_safe
    double omega_boundary_min_sq = 0.0; // min ||x||_2^2 over the Omega_c boundary
    double M1_raw = 0.0;
    double gamma_raw = 0.0;
    double C1_raw = 0.0;
    double safety_factor = 1.0;
    int grid_density = 0;
};

// A (n x n), B (n x 1), C (1 x n) of the normal form.
struct CompanionTriple {
    Matrix A, B, C;
};
CompanionTriple companion_matrices(int n);

Matrix closed_loop_matrix(const LinearizingController& ctrl); // A + B K

// gbar(x) = (-b(x) + K x + v) / a(x); throws ErrorKind::Domain when a(x) <= 0.
double unsaturated_control(const NormalFormSystem& sys, const LinearizingController& ctrl,
                           std::span<const double> x, double v);

// gbar clamped to [-u_max, u_max].
double saturated_control(const NormalFormSystem& sys, const LinearizingController& ctrl,
                         const ConstraintSets& sets, std::span<const double> x, double v);

Vec plant_rhs(const NormalFormSystem& sys, std::span<const double> x, double u);

// (A + B K) x + B v, the ideal feedback-linearized dynamics.
Vec closed_loop_rhs(const LinearizingController& ctrl, std::span<const double> x, double v);

// Grid sampling over X_safe (adjacent pairs include diagonal offsets) with a
// safety factor on the Lipschitz-type estimates. Throws ErrorKind::Domain if
// any sampled a(x) falls below a0.
ConstantsReport estimate_constants(const NormalFormSystem& sys, const LinearizingController& ctrl,
                                   const ConstraintSets& sets, int grid_density,
                                   const std::optional<Box>& x0_region = {},
                                   double safety_factor = 1.1, int threads = 0);

} // namespace ofsafe
