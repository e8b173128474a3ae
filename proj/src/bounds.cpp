#include "ofsafe/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

namespace ofsafe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ln(k^2 / eps^{2n}) without forming eps^{2n}
double log_k2_over_eps2n(double k, double eps, int n) {
    if (k <= 0.0) return -kInf;
    return 2.0 * std::log(k) - 2.0 * n * std::log(eps);
}

double transient_time_at(double lambda_max_p, double rho, double eps, double k, int n) {
    if (k <= 0.0) return 0.0;
    double arg_log = std::log(lambda_max_p * k * k / rho) - 2.0 * n * std::log(eps);
    if (arg_log <= 0.0) return 0.0;
    return eps * lambda_max_p * arg_log;
}

double d_norm2_at(double eps, int n) { return std::max(std::pow(eps, n - 1), 1.0); }

} // namespace

double transient_time(const ObserverDesign& design, double k, int n) {
    if (k < 0.0) throw Error(ErrorKind::Config, "transient_time: k must be nonnegative");
    return transient_time_at(design.lambda_max_P, design.rho, design.epsilon, k, n);
}

double bound_transient(double epsilon, const ConstantsReport& constants, const ObserverDesign& design,
                       int n) {
    double lg = log_k2_over_eps2n(constants.k, epsilon, n);
    if (lg <= 0.0) return 0.0;
    return constants.C1 * design.lambda_min_P * lg * epsilon;
}

double bound_main_general(double epsilon, double T, const ConstantsReport& constants,
                          const ObserverDesign& design, int n) {
    double t_eps = transient_time_at(design.lambda_max_P, design.rho, epsilon, constants.k, n);
    if (T <= t_eps)
        throw Error(ErrorKind::Config, "bound_main_general: horizon does not exceed the transient time");
    double lg = log_k2_over_eps2n(constants.k, epsilon, n);
    double c2 = std::exp((1.0 + constants.M1) * (T - t_eps));
    double dnorm = d_norm2_at(epsilon, n);
    double mid = constants.M2 * constants.gamma * dnorm / (1.0 + constants.M1);
    double value = (4.0 * constants.C1 * design.lambda_min_P * lg * c2 + mid * c2 - mid) * epsilon;
    return std::max(value, 0.0);
}

namespace {

// real 2n x 2n embedding of a complex matrix: [[Re, -Im], [Im, Re]]
Matrix complex_embedding(const Matrix& re, const Matrix& im) {
    const int n = re.rows;
    Matrix e(2 * n, 2 * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            e(i, j) = re(i, j);
            e(i, j + n) = -im(i, j);
            e(i + n, j) = im(i, j);
            e(i + n, j + n) = re(i, j);
        }
    return e;
}

// null vector of a near-singular matrix by regularized inverse iteration
Vec near_null_vector(const Matrix& m) {
    const int n = m.rows;
    double scale = std::max(matrix_norm_inf(m), 1.0);
    Vec v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = 1.0 + 0.2 * i;
    double vn = norm2(v);
    for (double& x : v) x /= vn;
    for (int pass = 0; pass < 6; ++pass) {
        Matrix shifted = m;
        double jitter = scale * 1e-12 * std::pow(10.0, pass);
        for (int i = 0; i < n; ++i) shifted(i, i) += jitter;
        bool ok = true;
        for (int it = 0; it < 8 && ok; ++it) {
            try {
                Vec w = solve_linear_unchecked(shifted, v);
                double wn = norm2(w);
                if (!(wn > 0.0) || !std::isfinite(wn)) {
                    ok = false;
                    break;
                }
                for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[i] / wn;
            } catch (const Error&) {
                ok = false;
            }
        }
        if (ok) return v;
    }
    throw Error(ErrorKind::NonConvergence, "eigenvector inverse iteration failed");
}

// ||G|| ||G^-1|| ||e^{Theta t}|| from an eigendecomposition of m; requires
// distinct eigenvalues (the diagonalizable case of the stable bound).
double literal_c2hat(const Matrix& m, double t) {
    const int n = m.rows;
    auto eigs = eigenvalues_general(m);
    double scale = std::max(matrix_norm_inf(m), 1.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(eigs[static_cast<std::size_t>(i)] - eigs[static_cast<std::size_t>(j)]) < 1e-8 * scale)
                throw Error(ErrorKind::Numeric,
                            "literal C2hat requires distinct eigenvalues; use the direct mode");

    Matrix g_re(n, n), g_im(n, n);
    for (int col = 0; col < n; ++col) {
        std::complex<double> lam = eigs[static_cast<std::size_t>(col)];
        if (std::abs(lam.imag()) < 1e-12 * scale) {
            Matrix shifted = m;
            for (int i = 0; i < n; ++i) shifted(i, i) -= lam.real();
            Vec v = near_null_vector(shifted);
            for (int i = 0; i < n; ++i) g_re(i, col) = v[static_cast<std::size_t>(i)];
        } else if (lam.imag() > 0.0) {
            Matrix re = m, im(n, n);
            for (int i = 0; i < n; ++i) {
                re(i, i) -= lam.real();
                im(i, i) = -lam.imag();
            }
            Vec v = near_null_vector(complex_embedding(re, im));
            for (int i = 0; i < n; ++i) {
                g_re(i, col) = v[static_cast<std::size_t>(i)];
                g_im(i, col) = v[static_cast<std::size_t>(i + n)];
            }
        }
    }
    // negative-imaginary columns are conjugates of their computed partners
    for (int col = 0; col < n; ++col) {
        std::complex<double> lam = eigs[static_cast<std::size_t>(col)];
        if (lam.imag() >= -1e-12 * scale) continue;
        for (int other = 0; other < n; ++other)
            if (std::abs(eigs[static_cast<std::size_t>(other)].real() - lam.real()) < 1e-10 * scale &&
                std::abs(eigs[static_cast<std::size_t>(other)].imag() + lam.imag()) < 1e-10 * scale) {
                for (int i = 0; i < n; ++i) {
                    g_re(i, col) = g_re(i, other);
                    g_im(i, col) = -g_im(i, other);
                }
                break;
            }
    }
    Matrix emb = complex_embedding(g_re, g_im);
    double norm_g = spectral_norm(emb);
    double norm_ginv = spectral_norm(inverse(emb));
    double exp_theta = 0.0;
    for (const auto& lam : eigs) exp_theta = std::max(exp_theta, std::exp(lam.real() * t));
    return norm_g * norm_ginv * exp_theta;
}

} // namespace

double bound_main_stable(double epsilon, double T, const ConstantsReport& constants,
                         const LinearizingController& ctrl, const ObserverDesign& design, int n,
                         bool use_literal_c2hat) {
    Matrix cl = closed_loop_matrix(ctrl);
    if (!is_hurwitz(cl))
        throw Error(ErrorKind::NonHurwitz, "bound_main_stable: A+BK is not Hurwitz");
    double t_eps = transient_time_at(design.lambda_max_P, design.rho, epsilon, constants.k, n);
    if (T <= t_eps)
        throw Error(ErrorKind::Config, "bound_main_stable: horizon does not exceed the transient time");
    double c2hat = use_literal_c2hat ? literal_c2hat(cl, T - t_eps)
                                     : spectral_norm(matrix_exponential(cl, T - t_eps));
    double lg = std::max(log_k2_over_eps2n(constants.k, epsilon, n), 0.0);
    double value = (4.0 * constants.C1 * design.lambda_min_P * lg * c2hat +
                    (T - t_eps) * constants.M2 * constants.gamma * d_norm2_at(epsilon, n)) *
                   epsilon;
    return std::max(value, 0.0);
}

namespace {

EpsCaps caps_for(const ConstantsReport& constants, const ObserverDesign& design,
                 const std::optional<QcContext>& qc, int n) {
    EpsCaps caps;
    caps.eps_bar = (constants.M1 > 0.0) ? 1.0 / (4.0 * constants.M1 * design.lambda_max_P) : kInf;
    caps.eps3 = kInf;
    caps.eps4 = kInf;
    if (qc) {
        auto [qmin, qmax] = eigen_extrema_symmetric(qc->Q);
        (void)qmin;
        double obms = qc->c / qmax;
        double denom = 2.0 * qmax * constants.x_max * constants.L * constants.gamma;
        caps.eps3 = (denom > 0.0) ? obms / denom : kInf;
        double k4 = 16.0 * qmax * qmax * qmax * constants.L * constants.L * constants.gamma * constants.gamma;
        if (k4 > 0.0) {
            auto growth = [&](double e) { return k4 * d_norm2_at(e, n) * d_norm2_at(e, n) * e * e; };
            double hi = 1e-6;
            while (growth(hi) <= qc->c && hi < 1e6) hi *= 2.0;
            if (growth(hi) <= qc->c) caps.eps4 = kInf;
            else {
                double lo = 0.0;
                for (int it = 0; it < 200; ++it) {
                    double mid = 0.5 * (lo + hi);
                    if (growth(mid) <= qc->c) lo = mid;
                    else hi = mid;
                }
                caps.eps4 = lo;
            }
        }
    }
    caps.eps_hat = std::min({caps.eps_bar, caps.eps3, caps.eps4});
    return caps;
}

const char* binding_cap_name(const EpsCaps& caps) {
    if (caps.eps_hat == caps.eps_bar) return "eps_bar";
    if (caps.eps_hat == caps.eps3) return "eps3";
    return "eps4";
}

} // namespace

BoundReport xi_for_epsilon(double epsilon, double T, const ConstantsReport& constants,
                           const LinearizingController& ctrl, const ObserverDesign& design_template,
                           BoundMode mode, const std::optional<QcContext>& qc, bool literal) {
    if (epsilon <= 0.0) throw Error(ErrorKind::Config, "xi_for_epsilon: epsilon must be positive");
    const int n = design_template.n();
    EpsCaps caps = caps_for(constants, design_template, qc, n);
    if (epsilon >= caps.eps_hat)
        throw Error(ErrorKind::CapViolation,
                    std::string("epsilon = ") + std::to_string(epsilon) + " is at or above the cap " +
                        binding_cap_name(caps) + " = " + std::to_string(caps.eps_hat) +
                        "; the invariance assumptions behind the bound fail");

    BoundReport rep;
    rep.epsilon = epsilon;
    rep.T = T;
    rep.mode = mode;
    rep.constants = constants;
    rep.caps = caps;
    rep.rho = design_template.rho;
    rep.k_used = constants.k;
    rep.c2hat_literal = literal;
    rep.n = n;

    double t_eps = transient_time_at(design_template.lambda_max_P, design_template.rho, epsilon,
                                     constants.k, n);
    rep.T_eps = std::min(t_eps, T);
    rep.xi_transient = bound_transient(epsilon, constants, design_template, n);
    if (T > t_eps) {
        if (mode == BoundMode::General) {
            rep.xi_main = bound_main_general(epsilon, T, constants, design_template, n);
            rep.C2_or_C2hat = std::exp((1.0 + constants.M1) * (T - t_eps));
        } else {
            rep.xi_main = bound_main_stable(epsilon, T, constants, ctrl, design_template, n, literal);
            Matrix cl = closed_loop_matrix(ctrl);
            rep.C2_or_C2hat = literal ? literal_c2hat(cl, T - t_eps)
                                      : spectral_norm(matrix_exponential(cl, T - t_eps));
        }
    } else {
        // the horizon ends inside the transient window; the transient bound
        // covers all of [0, T]
        rep.xi_main = 0.0;
        rep.C2_or_C2hat = 1.0;
    }
    rep.xi = std::max(rep.xi_transient, rep.xi_main);
    return rep;
}

double epsilon_for_xi(double xi_target, double T, const ConstantsReport& constants,
                      const LinearizingController& ctrl, const ObserverDesign& design_template,
                      BoundMode mode, const std::optional<QcContext>& qc) {
    if (xi_target <= 0.0) throw Error(ErrorKind::Config, "epsilon_for_xi: target must be positive");
    const int n = design_template.n();
    EpsCaps caps = caps_for(constants, design_template, qc, n);
    double eps_top = std::min(std::isfinite(caps.eps_hat) ? caps.eps_hat * (1.0 - 1e-9) : kInf, 1.0);

    auto feasible = [&](double eps) {
        try {
            return xi_for_epsilon(eps, T, constants, ctrl, design_template, mode, qc).xi <= xi_target;
        } catch (const Error&) {
            return false;
        }
    };

    const double eps_floor = 1e-12;
    double lo = -1.0, hi = -1.0;
    double probe = eps_top;
    while (probe >= eps_floor) {
        if (feasible(probe)) {
            lo = probe;
            break;
        }
        hi = probe;
        probe *= 0.5;
    }
    if (lo < 0.0)
        throw Error(ErrorKind::Infeasible, "epsilon_for_xi: no epsilon in [1e-12, " +
                                               std::to_string(eps_top) + ") achieves xi <= " +
                                               std::to_string(xi_target));
    if (hi < 0.0) return lo; // the scan maximum is already feasible
    while ((hi - lo) > 1e-6 * lo) {
        double mid = 0.5 * (lo + hi);
        if (feasible(mid)) lo = mid;
        else hi = mid;
    }
    return lo;
}

EpsCaps epsilon_caps(ConstantsReport& constants, const ObserverDesign& design, const Matrix& Q, double c,
                     const LinearizingController& ctrl) {
    (void)ctrl;
    if (c <= 0.0) throw Error(ErrorKind::Config, "epsilon_caps: c must be positive");
    QcContext qc{Q, c};
    auto [qmin, qmax] = eigen_extrema_symmetric(Q);
    if (qmin <= 0.0) throw Error(ErrorKind::Indefinite, "epsilon_caps: Q must be positive definite");
    constants.omega_boundary_min_sq = c / qmax;
    return caps_for(constants, design, qc, design.n());
}

double t1_horizon(const Matrix& Q, double c, double x0_norm_sq) {
    if (c <= 0.0) throw Error(ErrorKind::Config, "t1_horizon: c must be positive");
    auto [qmin, qmax] = eigen_extrema_symmetric(Q);
    (void)qmin;
    double arg = qmax * x0_norm_sq / c;
    if (arg <= 1.0) return 0.0;
    return 0.5 * qmax * std::log(arg);
}

double largest_c(const Matrix& Q, const LevelSetField& delta_field) {
    const int n = delta_field.grid.dim();
    const std::size_t count = delta_field.v.size();
    std::vector<double> qval(count);
    std::vector<std::uint8_t> inside(count);
    Vec x(static_cast<std::size_t>(n));
    bool any_inside = false;
    for (std::size_t i = 0; i < count; ++i) {
        delta_field.grid.node(i, x);
        qval[i] = dot(x, mat_vec(Q, x));
        inside[i] = delta_field.v[i] > 0.0 ? 1 : 0;
        any_inside = any_inside || inside[i];
    }
    if (!any_inside) throw Error(ErrorKind::EmptySet, "largest_c: Delta has no positive region");

    double c_upper = 0.0;
    for (std::size_t i = 0; i < count; ++i)
        if (inside[i]) c_upper = std::max(c_upper, qval[i]);

    auto admissible = [&](double c) {
        for (std::size_t i = 0; i < count; ++i)
            if (qval[i] <= c && !inside[i]) return false;
        return true;
    };
    if (admissible(c_upper)) return c_upper;

    double lo = 0.0, hi = c_upper;
    for (int it = 0; it < 200 && (hi - lo) > 1e-3 * std::max(lo, 1e-12); ++it) {
        double mid = 0.5 * (lo + hi);
        if (admissible(mid)) lo = mid;
        else hi = mid;
    }
    if (lo <= 0.0) throw Error(ErrorKind::EmptySet, "largest_c: no positive c fits inside Delta");
    return lo;
}

ObserverDesign redesign_for_epsilon(const ObserverDesign& design_template, double epsilon) {
    return build_observer(design_template.alphas, epsilon,
                          design_template.rho_defaulted ? 0.0 : design_template.rho);
}

} // namespace ofsafe
