#include "ofsafe/plant.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "ofsafe/parallel.hpp"

namespace ofsafe {

bool Box::contains(std::span<const double> x, double shrink) const {
    for (int i = 0; i < dim(); ++i) {
        std::size_t si = static_cast<std::size_t>(i);
        if (x[si] < lo[si] + shrink || x[si] > hi[si] - shrink) return false;
    }
    return true;
}

double Box::diameter() const {
    double s = 0.0;
    for (int i = 0; i < dim(); ++i) {
        double d = hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)];
        s += d * d;
    }
    return std::sqrt(s);
}

Vec Box::center() const {
    Vec c(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) c[i] = 0.5 * (lo[i] + hi[i]);
    return c;
}

double Box::depth(std::span<const double> x) const {
    double d = 1e300;
    for (int i = 0; i < dim(); ++i) {
        std::size_t si = static_cast<std::size_t>(i);
        d = std::min(d, std::min(x[si] - lo[si], hi[si] - x[si]));
    }
    return d;
}

LinearizingController controller_from_beta(double beta, int n, VSpec v) {
    LinearizingController ctrl;
    ctrl.K.assign(static_cast<std::size_t>(n), -beta);
    ctrl.beta = beta;
    ctrl.v = v;
    return ctrl;
}

CompanionTriple companion_matrices(int n) {
    if (n < 1) throw Error(ErrorKind::Config, "companion_matrices: dimension must be at least 1");
    CompanionTriple t{Matrix(n, n), Matrix(n, 1), Matrix(1, n)};
    for (int i = 0; i + 1 < n; ++i) t.A(i, i + 1) = 1.0;
    t.B(n - 1, 0) = 1.0;
    t.C(0, 0) = 1.0;
    return t;
}

Matrix closed_loop_matrix(const LinearizingController& ctrl) {
    const int n = static_cast<int>(ctrl.K.size());
    Matrix m = companion_matrices(n).A;
    for (int j = 0; j < n; ++j) m(n - 1, j) += ctrl.K[static_cast<std::size_t>(j)];
    return m;
}

double unsaturated_control(const NormalFormSystem& sys, const LinearizingController& ctrl,
                           std::span<const double> x, double v) {
    double a = sys.a_at(x);
    if (a <= 0.0)
        throw Error(ErrorKind::Domain, "controller: a(x) = " + std::to_string(a) + " is not positive");
    return (-sys.b_at(x) + dot(ctrl.K, x) + v) / a;
}

double saturated_control(const NormalFormSystem& sys, const LinearizingController& ctrl,
                         const ConstraintSets& sets, std::span<const double> x, double v) {
    double g = unsaturated_control(sys, ctrl, x, v);
    if (g <= -sets.u_max) return -sets.u_max;
    if (g >= sets.u_max) return sets.u_max;
    return g;
}

Vec plant_rhs(const NormalFormSystem& sys, std::span<const double> x, double u) {
    const int n = sys.n;
    Vec dx(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i + 1 < n; ++i) dx[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i + 1)];
    dx[static_cast<std::size_t>(n - 1)] = sys.b_at(x) + sys.a_at(x) * u;
    return dx;
}

Vec closed_loop_rhs(const LinearizingController& ctrl, std::span<const double> x, double v) {
    const int n = static_cast<int>(ctrl.K.size());
    Vec dx(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i + 1 < n; ++i) dx[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i + 1)];
    dx[static_cast<std::size_t>(n - 1)] = dot(ctrl.K, x) + v;
    return dx;
}

// ---------------------------------------------------------------------------
// Constants estimation

namespace {

struct SampleGrid {
    int n = 0;
    int density = 0;
    std::vector<Vec> axes; // node coordinates per dimension

    std::size_t size() const {
        std::size_t s = 1;
        for (const auto& ax : axes) s *= ax.size();
        return s;
    }

    Vec node(std::size_t flat) const {
        Vec x(static_cast<std::size_t>(n));
        for (int i = n - 1; i >= 0; --i) {
            std::size_t c = axes[static_cast<std::size_t>(i)].size();
            x[static_cast<std::size_t>(i)] = axes[static_cast<std::size_t>(i)][flat % c];
            flat /= c;
        }
        return x;
    }

    // index arithmetic for neighbor offsets
    bool neighbor(std::size_t flat, std::span<const int> offset, Vec& out) const {
        std::size_t rem = flat;
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = n - 1; i >= 0; --i) {
            std::size_t c = axes[static_cast<std::size_t>(i)].size();
            idx[static_cast<std::size_t>(i)] = static_cast<int>(rem % c);
            rem /= c;
        }
        for (int i = 0; i < n; ++i) {
            int j = idx[static_cast<std::size_t>(i)] + offset[static_cast<std::size_t>(i)];
            if (j < 0 || j >= static_cast<int>(axes[static_cast<std::size_t>(i)].size())) return false;
            out[static_cast<std::size_t>(i)] = axes[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        return true;
    }
};

SampleGrid make_sample_grid(const Box& box, int density) {
    SampleGrid g;
    g.n = box.dim();
    g.density = density;
    g.axes.resize(static_cast<std::size_t>(g.n));
    for (int i = 0; i < g.n; ++i) {
        Vec& ax = g.axes[static_cast<std::size_t>(i)];
        ax.resize(static_cast<std::size_t>(density));
        double lo = box.lo[static_cast<std::size_t>(i)], hi = box.hi[static_cast<std::size_t>(i)];
        for (int j = 0; j < density; ++j)
            ax[static_cast<std::size_t>(j)] = lo + (hi - lo) * j / (density - 1);
    }
    return g;
}

// forward neighbor offsets: every nonzero vector in {-1,0,1}^n whose first
// nonzero component is +1, so each node pair is visited once
std::vector<std::vector<int>> forward_offsets(int n) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(n), -1);
    for (;;) {
        int first_nonzero = 0;
        for (int i = 0; i < n; ++i)
            if (cur[static_cast<std::size_t>(i)] != 0) {
                first_nonzero = cur[static_cast<std::size_t>(i)];
                break;
            }
        if (first_nonzero > 0) out.push_back(cur);
        int i = n - 1;
        while (i >= 0 && cur[static_cast<std::size_t>(i)] == 1) cur[static_cast<std::size_t>(i--)] = -1;
        if (i < 0) break;
        ++cur[static_cast<std::size_t>(i)];
    }
    return out;
}

double box_to_box_max_distance(const Box& a, const Box& b) {
    double best = 0.0;
    const int n = a.dim();
    const std::size_t corners = static_cast<std::size_t>(1) << n;
    for (std::size_t ca = 0; ca < corners; ++ca)
        for (std::size_t cb = 0; cb < corners; ++cb) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) {
                std::size_t si = static_cast<std::size_t>(i);
                double xa = (ca >> i) & 1 ? a.hi[si] : a.lo[si];
                double xb = (cb >> i) & 1 ? b.hi[si] : b.lo[si];
                s += (xa - xb) * (xa - xb);
            }
            best = std::max(best, s);
        }
    return std::sqrt(best);
}

} // namespace

ConstantsReport estimate_constants(const NormalFormSystem& sys, const LinearizingController& ctrl,
                                   const ConstraintSets& sets, int grid_density,
                                   const std::optional<Box>& x0_region, double safety_factor,
                                   int threads) {
    if (grid_density < 2)
        throw Error(ErrorKind::Config, "estimate_constants: grid density must be at least 2 per dimension");
    const int n = sys.n;
    SampleGrid grid = make_sample_grid(sets.x_box, grid_density);
    auto offsets = forward_offsets(n);

    Vec u_samples;
    for (int i = 0; i < 5; ++i) u_samples.push_back(-sets.u_max + 2.0 * sets.u_max * i / 4.0);
    Vec v_samples;
    if (ctrl.v.kind == VSpec::Kind::Constant) v_samples.push_back(ctrl.v.value);
    else v_samples = {-ctrl.v.v_max, 0.0, ctrl.v.v_max};

    struct Acc {
        double m1 = 0.0, m2 = 0.0, gamma = 0.0, c1 = 0.0, xmax = 0.0;
        double a_min = 1e300;
        bool finite = true;
    };
    Acc total;
    std::mutex merge_mutex;

    auto psi = [&](std::span<const double> x, double u) { return sys.b_at(x) + sys.a_at(x) * u; };

    parallel_for(grid.size(), threads, [&](std::size_t lo, std::size_t hi) {
        Acc acc;
        Vec nb(static_cast<std::size_t>(n));
        for (std::size_t flat = lo; flat < hi; ++flat) {
            Vec x = grid.node(flat);
            double ax = sys.a_at(x);
            double bx = sys.b_at(x);
            if (!std::isfinite(ax) || !std::isfinite(bx)) acc.finite = false;
            acc.a_min = std::min(acc.a_min, ax);
            acc.m2 = std::max(acc.m2, std::abs(ax));
            acc.xmax = std::max(acc.xmax, dot(x, x));
            for (double u : u_samples) {
                double f = bx + ax * u;
                double s = 0.0;
                for (int i = 1; i < n; ++i) s += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
                if (!x0_region) acc.c1 = std::max(acc.c1, std::sqrt(s + f * f));
            }
            for (const auto& off : offsets) {
                if (!grid.neighbor(flat, off, nb)) continue;
                Vec diff(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i)
                    diff[static_cast<std::size_t>(i)] = nb[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)];
                double dist = norm2(diff);
                if (dist == 0.0) continue;
                for (double u : u_samples)
                    acc.m1 = std::max(acc.m1, std::abs(psi(nb, u) - psi(x, u)) / dist);
                for (double v : v_samples)
                    acc.gamma = std::max(acc.gamma,
                                         std::abs(unsaturated_control(sys, ctrl, nb, v) -
                                                  unsaturated_control(sys, ctrl, x, v)) /
                                             dist);
            }
        }
        std::lock_guard<std::mutex> lock(merge_mutex);
        total.m1 = std::max(total.m1, acc.m1);
        total.m2 = std::max(total.m2, acc.m2);
        total.gamma = std::max(total.gamma, acc.gamma);
        total.c1 = std::max(total.c1, acc.c1);
        total.xmax = std::max(total.xmax, acc.xmax);
        total.a_min = std::min(total.a_min, acc.a_min);
        total.finite = total.finite && acc.finite;
    });

    if (!total.finite)
        throw Error(ErrorKind::Domain, "estimate_constants: non-finite a(x) or b(x) sample inside X_safe");
    if (total.a_min < sys.a0 - 1e-12 * std::max(1.0, std::abs(sys.a0)))
        throw Error(ErrorKind::Domain, "estimate_constants: sampled a(x) = " + std::to_string(total.a_min) +
                                           " below the declared bound a0 = " + std::to_string(sys.a0));

    if (x0_region) {
        SampleGrid rgrid = make_sample_grid(*x0_region, grid_density);
        for (std::size_t flat = 0; flat < rgrid.size(); ++flat) {
            Vec x = rgrid.node(flat);
            double f0 = sys.b_at(x), fa = sys.a_at(x);
            double s = 0.0;
            for (int i = 1; i < n; ++i) s += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
            for (double u : u_samples) {
                double f = f0 + fa * u;
                total.c1 = std::max(total.c1, std::sqrt(s + f * f));
            }
        }
    }

    ConstantsReport rep;
    rep.M1_raw = total.m1;
    rep.gamma_raw = total.gamma;
    rep.C1_raw = total.c1;
    rep.safety_factor = safety_factor;
    rep.grid_density = grid_density;
    rep.M1 = safety_factor * total.m1;
    rep.gamma = safety_factor * total.gamma;
    rep.C1 = safety_factor * total.c1;
    rep.M2 = total.m2;
    rep.L = total.m2; // Omega_c lies inside X_safe, so the X_safe max bounds it
    rep.x_max = total.xmax;
    rep.k = x0_region ? box_to_box_max_distance(*x0_region, sets.x_box) : sets.x_box.diameter();
    rep.omega_boundary_min_sq = 0.0; // filled in once Q and c are known
    return rep;
}

} // namespace ofsafe
