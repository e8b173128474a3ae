#pragma once

#include <span>
#include <vector>

#include "ofsafe/numkit.hpp"
#include "ofsafe/plant.hpp"

namespace ofsafe {

// High-gain observer xhatdot = A xhat + B [b(xhat) + a(xhat) u] + H(eps)(y - xhat_1)
// with H_i = alpha_i / eps^i. Immutable after construction.
struct ObserverDesign {
    Vec alphas;
    double epsilon = 0.0;
    Vec H;         // gain vector
    Matrix Lambda; // boundary-layer matrix: -alpha in the first column, superdiagonal ones
    Matrix P;      // Lambda^T P + P Lambda = -I
    double rho = 0.0;
    bool rho_defaulted = false;
    double lambda_min_P = 0.0;
    double lambda_max_P = 0.0;

    int n() const { return static_cast<int>(alphas.size()); }
    Vec D_diag() const;      // diag(eps^{n-1}, ..., eps, 1)
    double D_norm2() const;  // max(eps^{n-1}, 1)
};

// Validates the Hurwitz property of s^n + alpha_1 s^{n-1} + ... + alpha_n and
// solves the boundary-layer Lyapunov equation. rho <= 0 selects the default
// rho = lambda_max(P), flagged in the design.
ObserverDesign build_observer(Vec alphas, double epsilon, double rho = 0.0);

Vec observer_rhs(const NormalFormSystem& sys, const ObserverDesign& design,
                 std::span<const double> xhat, double u, double y);

// eta_i = (x_i - xhat_i) / eps^{n-i}
Vec eta_from_error(std::span<const double> x, std::span<const double> xhat, double epsilon, int n);

// eta^T P eta <= rho eps^2 (closed set)
bool omega_rho_contains(const ObserverDesign& design, std::span<const double> eta);

} // namespace ofsafe
