#pragma once

#include <optional>

#include "ofsafe/observer.hpp"
#include "ofsafe/plant.hpp"
#include "ofsafe/reach.hpp"

namespace ofsafe {

struct EpsCaps {
    double eps_bar = 0.0; // invariance of Omega_rho: 1 / (4 M1 ||P||_2), +inf at M1 = 0
    double eps3 = 0.0;    // Omega_c invariance under output feedback
    double eps4 = 0.0;    // largest eps keeping 16 lmax(Q)^3 L^2 gamma^2 ||D||^2 eps^2 <= c
    double eps_hat = 0.0; // min of the caps above
};

enum class BoundMode { General, Stable };

// Everything needed to audit a trajectory-distance bound xi.
struct BoundReport {
    double epsilon = 0.0;
    double T = 0.0;
    double T_eps = 0.0;
    double xi_transient = 0.0;
    double xi_main = 0.0;
    double xi = 0.0;
    BoundMode mode = BoundMode::General;
    ConstantsReport constants;
    double C2_or_C2hat = 0.0;
    EpsCaps caps;
    double rho = 0.0;
    double k_used = 0.0;
    bool c2hat_literal = false;
    int n = 0;
};

// Time for the scaled estimation error to enter Omega_rho, from the standard
// Lyapunov decay estimate of the boundary layer:
//   T(eps) = eps lmax(P) ln(lmax(P) k^2 / (rho eps^{2n})), clamped at 0.
double transient_time(const ObserverDesign& design, double k, int n);

// C1 lmin(P) ln(k^2 / eps^{2n}) eps, clamped at 0 when the log turns negative.
double bound_transient(double epsilon, const ConstantsReport& constants, const ObserverDesign& design,
                       int n);

// The general main bound with C2 = e^{(1+M1)(T - T(eps))}:
//   (4 C1 lmin(P) ln(k^2/eps^{2n}) C2 + M2 gamma ||D||/(1+M1) (C2 - 1)) eps
// evaluated exactly as printed and floor-clamped at 0.
double bound_main_general(double epsilon, double T, const ConstantsReport& constants,
                          const ObserverDesign& design, int n);

// The stable-case main bound
//   [4 C1 lmin(P) ln(k^2/eps^{2n}) C2hat + (T - T(eps)) M2 gamma ||D||] eps
// with C2hat = ||e^{(A+BK)(T - T(eps))}||_2 by default; literal_c2hat
// restores ||G|| ||G^{-1}|| ||e^{Theta (T-T(eps))}|| from an eigendecomposition.
double bound_main_stable(double epsilon, double T, const ConstantsReport& constants,
                         const LinearizingController& ctrl, const ObserverDesign& design, int n,
                         bool literal_c2hat = false);

struct QcContext {
    Matrix Q;
    double c = 0.0;
};

// xi = max(transient, main) with the full audit trail. Errors with
// ErrorKind::CapViolation when epsilon reaches any available cap (eps_bar
// always; eps3/eps4 when a Q/c context is supplied).
BoundReport xi_for_epsilon(double epsilon, double T, const ConstantsReport& constants,
                           const LinearizingController& ctrl, const ObserverDesign& design_template,
                           BoundMode mode, const std::optional<QcContext>& qc = {},
                           bool literal_c2hat = false);

// Largest epsilon in (0, eps_hat) with xi(eps) <= xi_target: geometric scan
// down from the cap for a feasible bracket, then bisection to 1e-6 relative.
double epsilon_for_xi(double xi_target, double T, const ConstantsReport& constants,
                      const LinearizingController& ctrl, const ObserverDesign& design_template,
                      BoundMode mode, const std::optional<QcContext>& qc = {});

// Also fills constants.omega_boundary_min_sq = c / lmax(Q), the exact minimum
// of ||x||^2 over the boundary of Omega_c.
EpsCaps epsilon_caps(ConstantsReport& constants, const ObserverDesign& design, const Matrix& Q, double c,
                     const LinearizingController& ctrl);

// T1 = (lmax(Q)/2) ln(lmax(Q) ||x(0)||^2 / c), clamped at 0.
double t1_horizon(const Matrix& Q, double c, double x0_norm_sq);

// Largest c with { x : x^T Q x <= c } inside the positive region of the Delta
// field, by bisection to 1e-3 relative.
double largest_c(const Matrix& Q, const LevelSetField& delta_field);

// Rebuilds the observer gain structure for a different epsilon, keeping the
// alpha coefficients and rho of the template.
ObserverDesign redesign_for_epsilon(const ObserverDesign& design_template, double epsilon);

} // namespace ofsafe
