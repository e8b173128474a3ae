#include "ofsafe/observer.hpp"

#include <cmath>
#include <string>

namespace ofsafe {

Vec ObserverDesign::D_diag() const {
    const int dim = n();
    Vec d(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) d[static_cast<std::size_t>(i)] = std::pow(epsilon, dim - 1 - i);
    return d;
}

double ObserverDesign::D_norm2() const { return std::max(std::pow(epsilon, n() - 1), 1.0); }

ObserverDesign build_observer(Vec alphas, double epsilon, double rho) {
    const int n = static_cast<int>(alphas.size());
    if (n < 1) throw Error(ErrorKind::Config, "build_observer: need at least one alpha coefficient");
    if (epsilon <= 0.0) throw Error(ErrorKind::Config, "build_observer: epsilon must be positive");

    auto roots = eigenvalues_general(poly_companion(alphas));
    std::string offending;
    for (const auto& r : roots)
        if (r.real() >= -1e-9)
            offending += " (" + std::to_string(r.real()) + (r.imag() >= 0 ? "+" : "") +
                         std::to_string(r.imag()) + "i)";
    if (!offending.empty())
        throw Error(ErrorKind::NonHurwitz,
                    "build_observer: alpha polynomial has roots off the open left half plane:" + offending);

    ObserverDesign d;
    d.alphas = std::move(alphas);
    d.epsilon = epsilon;
    d.H.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        d.H[static_cast<std::size_t>(i)] = d.alphas[static_cast<std::size_t>(i)] / std::pow(epsilon, i + 1);
    d.Lambda = Matrix(n, n);
    for (int i = 0; i < n; ++i) {
        d.Lambda(i, 0) = -d.alphas[static_cast<std::size_t>(i)];
        if (i + 1 < n) d.Lambda(i, i + 1) = 1.0;
    }
    d.P = solve_lyapunov(d.Lambda);
    auto [lmin, lmax] = eigen_extrema_symmetric(d.P);
    d.lambda_min_P = lmin;
    d.lambda_max_P = lmax;
    if (rho > 0.0) {
        d.rho = rho;
    } else {
        d.rho = lmax; // pragmatic default, recorded in every report
        d.rho_defaulted = true;
    }
    return d;
}

Vec observer_rhs(const NormalFormSystem& sys, const ObserverDesign& design,
                 std::span<const double> xhat, double u, double y) {
    Vec dx = plant_rhs(sys, xhat, u);
    double innovation = y - xhat[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += design.H[i] * innovation;
    return dx;
}

Vec eta_from_error(std::span<const double> x, std::span<const double> xhat, double epsilon, int n) {
    if (epsilon <= 0.0) throw Error(ErrorKind::Config, "eta_from_error: epsilon must be positive");
    Vec eta(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::size_t si = static_cast<std::size_t>(i);
        eta[si] = (x[si] - xhat[si]) / std::pow(epsilon, n - 1 - i);
    }
    return eta;
}

bool omega_rho_contains(const ObserverDesign& design, std::span<const double> eta) {
    Vec peta = mat_vec(design.P, eta);
    double w = dot(eta, peta);
    return w <= design.rho * design.epsilon * design.epsilon;
}

} // namespace ofsafe
