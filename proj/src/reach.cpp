#include "ofsafe/reach.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>

#include "ofsafe/parallel.hpp"

namespace ofsafe {

// ---------------------------------------------------------------------------
// Grid

std::size_t Grid::size() const {
    std::size_t s = 1;
    for (const auto& a : axes) s *= static_cast<std::size_t>(a.count);
    return s;
}

void Grid::node(std::size_t flat, std::span<double> out) const {
    for (int i = dim() - 1; i >= 0; --i) {
        const GridAxis& a = axes[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(i)] = coord(i, static_cast<int>(flat % static_cast<std::size_t>(a.count)));
        flat /= static_cast<std::size_t>(a.count);
    }
}

double Grid::cell_volume() const {
    double v = 1.0;
    for (const auto& a : axes) v *= a.dx();
    return v;
}

double Grid::diameter() const {
    double s = 0.0;
    for (const auto& a : axes) s += (a.hi - a.lo) * (a.hi - a.lo);
    return std::sqrt(s);
}

bool Grid::same_as(const Grid& other) const {
    if (dim() != other.dim()) return false;
    for (int i = 0; i < dim(); ++i) {
        const GridAxis& a = axes[static_cast<std::size_t>(i)];
        const GridAxis& b = other.axes[static_cast<std::size_t>(i)];
        if (a.count != b.count || a.lo != b.lo || a.hi != b.hi) return false;
    }
    return true;
}

Grid Grid::inflate_box(const Box& box, double frac, std::span<const int> counts) {
    Grid g;
    g.axes.resize(static_cast<std::size_t>(box.dim()));
    for (int i = 0; i < box.dim(); ++i) {
        std::size_t si = static_cast<std::size_t>(i);
        double w = box.hi[si] - box.lo[si];
        g.axes[si] = GridAxis{box.lo[si] - frac * w, box.hi[si] + frac * w, counts[si]};
        if (counts[si] < 3) throw Error(ErrorKind::Config, "grid: need at least 3 nodes per dimension");
    }
    return g;
}

double LevelSetField::min_value() const { return *std::min_element(v.begin(), v.end()); }
double LevelSetField::max_value() const { return *std::max_element(v.begin(), v.end()); }
bool LevelSetField::has_negative() const { return min_value() < 0.0; }
bool LevelSetField::has_positive() const { return max_value() > 0.0; }

namespace {

void require_same_grid(const LevelSetField& a, const LevelSetField& b, const char* op) {
    if (!a.grid.same_as(b.grid))
        throw Error(ErrorKind::GridMismatch, std::string(op) + ": fields live on different grids");
}

void require_grid_covers(const Grid& grid, const Box& box) {
    for (int i = 0; i < grid.dim(); ++i) {
        const GridAxis& a = grid.axes[static_cast<std::size_t>(i)];
        double margin = 2.0 * a.dx();
        if (a.lo > box.lo[static_cast<std::size_t>(i)] - margin ||
            a.hi < box.hi[static_cast<std::size_t>(i)] + margin)
            throw Error(ErrorKind::Config,
                        "grid does not cover X_safe with a 2-cell margin on axis " + std::to_string(i));
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Field construction and algebra

LevelSetField sdf_box(const Grid& grid, const Box& box) {
    const int n = grid.dim();
    LevelSetField f{grid, std::vector<double>(grid.size())};
    Vec x(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < f.v.size(); ++i) {
        grid.node(i, x);
        double out2 = 0.0;
        double inner = -1e300;
        for (int d = 0; d < n; ++d) {
            std::size_t sd = static_cast<std::size_t>(d);
            double q = std::max(box.lo[sd] - x[sd], x[sd] - box.hi[sd]);
            inner = std::max(inner, q);
            if (q > 0.0) out2 += q * q;
        }
        f.v[i] = std::sqrt(out2) + std::min(inner, 0.0);
    }
    return f;
}

LevelSetField erode(const LevelSetField& field, double xi) {
    if (xi < 0.0) throw Error(ErrorKind::Config, "erode: xi must be nonnegative");
    LevelSetField f = field;
    for (double& v : f.v) v += xi;
    return f;
}

LevelSetField union_fields(const LevelSetField& a, const LevelSetField& b) {
    require_same_grid(a, b, "union_fields");
    LevelSetField f = a;
    for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] = std::min(f.v[i], b.v[i]);
    return f;
}

LevelSetField intersect_fields(const LevelSetField& a, const LevelSetField& b) {
    require_same_grid(a, b, "intersect_fields");
    LevelSetField f = a;
    for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] = std::max(f.v[i], b.v[i]);
    return f;
}

LevelSetField complement_field(const LevelSetField& a) {
    LevelSetField f = a;
    for (double& v : f.v) v = -v;
    return f;
}

namespace {

// (u_max - |gbar|) rescaled by a local gradient estimate of |gbar|, so the
// zero level sits on the saturation boundary and magnitudes approximate
// Euclidean distance. Positive outside the saturation region.
LevelSetField saturation_margin_field(const Grid& grid, const ConstraintSets& sets,
                                      const NormalFormSystem& sys, const LinearizingController& ctrl) {
    const int n = grid.dim();
    LevelSetField w{grid, std::vector<double>(grid.size())};
    Vec x(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < w.v.size(); ++i) {
        grid.node(i, x);
        w.v[i] = std::abs(unsaturated_control(sys, ctrl, x, 0.0));
    }
    std::vector<std::size_t> stride(static_cast<std::size_t>(n), 1);
    for (int d = n - 2; d >= 0; --d)
        stride[static_cast<std::size_t>(d)] =
            stride[static_cast<std::size_t>(d + 1)] * static_cast<std::size_t>(grid.axes[static_cast<std::size_t>(d + 1)].count);

    const double cap = grid.diameter();
    LevelSetField f{grid, std::vector<double>(grid.size())};
    for (std::size_t i = 0; i < f.v.size(); ++i) {
        double grad2 = 0.0;
        for (int d = 0; d < n; ++d) {
            std::size_t sd = static_cast<std::size_t>(d);
            int count = grid.axes[sd].count;
            int idx = static_cast<int>(i / stride[sd]) % count;
            int lo = std::max(0, idx - 1), hi = std::min(count - 1, idx + 1);
            double dw = (w.v[i + static_cast<std::size_t>(hi - idx) * stride[sd]] -
                         w.v[i - static_cast<std::size_t>(idx - lo) * stride[sd]]) /
                        ((hi - lo) * grid.axes[sd].dx());
            grad2 += dw * dw;
        }
        double grad = std::max(std::sqrt(grad2), 1e-12);
        double val = (sets.u_max - w.v[i]) / grad;
        f.v[i] = std::clamp(val, -cap, cap);
    }
    return f;
}

} // namespace

LevelSetField failure_set(const Grid& grid, const ConstraintSets& sets, const NormalFormSystem& sys,
                          const LinearizingController& ctrl, bool include_saturation) {
    LevelSetField outside = complement_field(sdf_box(grid, sets.x_box));
    if (!include_saturation) return outside;
    return union_fields(outside, saturation_margin_field(grid, sets, sys, ctrl));
}

// ---------------------------------------------------------------------------
// Backward reachable tube

TubeDynamics closed_loop_tube_dynamics(const LinearizingController& ctrl, const Grid& grid) {
    Matrix m = closed_loop_matrix(ctrl);
    const int n = m.rows;
    TubeDynamics dyn;
    dyn.f = [m, n](std::span<const double> x, std::span<double> out) {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += m(i, j) * x[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(i)] = s;
        }
    };
    dyn.alpha_bound.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double mx = 0.0, mn = 0.0;
        for (int j = 0; j < n; ++j) {
            const GridAxis& a = grid.axes[static_cast<std::size_t>(j)];
            mx += std::max(m(i, j) * a.lo, m(i, j) * a.hi);
            mn += std::min(m(i, j) * a.lo, m(i, j) * a.hi);
        }
        dyn.alpha_bound[static_cast<std::size_t>(i)] = std::max(std::abs(mx), std::abs(mn));
    }
    dyn.B.assign(static_cast<std::size_t>(n), 0.0);
    dyn.B[static_cast<std::size_t>(n - 1)] = 1.0;
    dyn.v_max = (ctrl.v.kind == VSpec::Kind::Interval) ? ctrl.v.v_max : 0.0;
    return dyn;
}

namespace {

// Stepping core shared by the fixed-horizon and converged-mode drivers.
class TubeIntegrator {
  public:
    TubeIntegrator(const LevelSetField& field0, const TubeDynamics& dyn, VMode v_mode, const TubeConfig& cfg)
        : grid_(field0.grid), phi_(field0.v), cfg_(cfg), v_mode_(v_mode) {
        const int n = grid_.dim();
        dim_ = n;
        stride_.assign(static_cast<std::size_t>(n), 1);
        for (int d = n - 2; d >= 0; --d)
            stride_[static_cast<std::size_t>(d)] = stride_[static_cast<std::size_t>(d + 1)] *
                                                   static_cast<std::size_t>(grid_.axes[static_cast<std::size_t>(d + 1)].count);
        alpha_ = dyn.alpha_bound;
        bvec_ = dyn.B;
        v_max_ = (v_mode == VMode::FixedZero) ? 0.0 : dyn.v_max;
        for (int d = 0; d < n; ++d)
            alpha_[static_cast<std::size_t>(d)] += v_max_ * std::abs(bvec_[static_cast<std::size_t>(d)]);

        double inv_dt = 0.0;
        for (int d = 0; d < n; ++d)
            inv_dt += alpha_[static_cast<std::size_t>(d)] / grid_.axes[static_cast<std::size_t>(d)].dx();
        dt_cfl_ = (inv_dt > 0.0) ? cfg.cfl / inv_dt : 1.0;
        if (cfg.dt_override > 0.0) {
            if (cfg.dt_override > dt_cfl_ * (1.0 + 1e-12))
                throw Error(ErrorKind::Cfl, "tube solver: forced step " + std::to_string(cfg.dt_override) +
                                                " exceeds the CFL bound " + std::to_string(dt_cfl_));
            dt_cfl_ = cfg.dt_override;
        }

        // flow samples are time independent: cache them per node
        fvals_.resize(phi_.size() * static_cast<std::size_t>(n));
        Vec x(static_cast<std::size_t>(n)), fx(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < phi_.size(); ++i) {
            grid_.node(i, x);
            dyn.f(x, fx);
            for (int d = 0; d < n; ++d) fvals_[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(d)] =
                fx[static_cast<std::size_t>(d)];
        }
        scratch1_.resize(phi_.size());
        scratch2_.resize(phi_.size());
    }

    double dt() const { return dt_cfl_; }
    const std::vector<double>& phi() const { return phi_; }
    long steps_taken() const { return steps_; }

    // One frozen TVD-RK2 step of length h; returns max |phi change|.
    double step(double h) {
        advect(phi_, scratch1_, h);
        advect(scratch1_, scratch2_, h);
        double max_delta = 0.0;
        std::mutex mtx;
        parallel_for(phi_.size(), cfg_.threads, [&](std::size_t lo, std::size_t hi) {
            double local = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                double heun = 0.5 * phi_[i] + 0.5 * scratch2_[i];
                double next = std::min(phi_[i], heun);
                local = std::max(local, phi_[i] - next);
                if (cfg_.assert_monotone && next > phi_[i] + 1e-12)
                    local = std::numeric_limits<double>::infinity();
                scratch1_[i] = next;
            }
            std::lock_guard<std::mutex> g(mtx);
            max_delta = std::max(max_delta, local);
        });
        if (cfg_.assert_monotone && std::isinf(max_delta))
            throw Error(ErrorKind::Numeric, "tube solver: monotonicity violated");
        phi_.swap(scratch1_);
        ++steps_;
        if (steps_ % 64 == 0) check_finite();
        return max_delta;
    }

    void check_finite() const {
        for (double v : phi_)
            if (!std::isfinite(v)) throw Error(ErrorKind::NonConvergence, "tube solver: NaN poisoning detected");
    }

  private:
    // out = in + h * (H(x, Dbar in) + dissipation), the pure advection stage
    void advect(const std::vector<double>& in, std::vector<double>& out, double h) {
        const int n = dim_;
        parallel_for(in.size(), cfg_.threads, [&](std::size_t lo, std::size_t hi) {
            std::vector<int> idx(static_cast<std::size_t>(n));
            for (std::size_t i = lo; i < hi; ++i) {
                for (int d = 0; d < n; ++d) {
                    std::size_t sd = static_cast<std::size_t>(d);
                    idx[sd] = static_cast<int>(i / stride_[sd]) % grid_.axes[sd].count;
                }
                double ham = 0.0;
                double diss = 0.0;
                double pbar_b = 0.0;
                for (int d = 0; d < n; ++d) {
                    std::size_t sd = static_cast<std::size_t>(d);
                    const double dx = grid_.axes[sd].dx();
                    const int count = grid_.axes[sd].count;
                    double pm, pp;
                    if (idx[sd] > 0 && idx[sd] < count - 1) {
                        pm = (in[i] - in[i - stride_[sd]]) / dx;
                        pp = (in[i + stride_[sd]] - in[i]) / dx;
                    } else if (idx[sd] == 0) {
                        pp = (in[i + stride_[sd]] - in[i]) / dx;
                        pm = pp; // linear-extrapolation ghost value
                    } else {
                        pm = (in[i] - in[i - stride_[sd]]) / dx;
                        pp = pm;
                    }
                    double f = fvals_[i * static_cast<std::size_t>(n) + sd];
                    double pbar = 0.5 * (pm + pp);
                    ham += f * pbar;
                    pbar_b += pbar * bvec_[sd];
                    // stencil (local) dissipation: H is linear in p, so the
                    // pointwise |f| bounds |dH/dp| and keeps the scheme
                    // monotone without the far-field smearing of a global
                    // coefficient
                    diss += (std::abs(f) + v_max_ * std::abs(bvec_[sd])) * (pp - pm) * 0.5;
                }
                if (v_mode_ == VMode::Helpful) ham += v_max_ * std::abs(pbar_b);
                else if (v_mode_ == VMode::Adversarial) ham -= v_max_ * std::abs(pbar_b);
                out[i] = in[i] + h * (ham + diss);
            }
        });
    }

    Grid grid_;
    std::vector<double> phi_;
    TubeConfig cfg_;
    VMode v_mode_;
    int dim_ = 0;
    std::vector<std::size_t> stride_;
    Vec alpha_, bvec_;
    double v_max_ = 0.0;
    double dt_cfl_ = 0.0;
    std::vector<double> fvals_;
    std::vector<double> scratch1_, scratch2_;
    long steps_ = 0;
};

struct TubeRun {
    LevelSetField field;
    double horizon = 0.0;
    long steps = 0;
};

TubeRun run_tube(const LevelSetField& field0, const TubeDynamics& dyn, VMode v_mode, HorizonSpec horizon,
                 const TubeConfig& cfg) {
    for (double v : field0.v)
        if (!std::isfinite(v)) throw Error(ErrorKind::NonConvergence, "tube solver: non-finite initial field");
    TubeIntegrator integ(field0, dyn, v_mode, cfg);
    double t = 0.0;
    if (!horizon.converged) {
        while (t < horizon.T - 1e-15) {
            double h = std::min(integ.dt(), horizon.T - t);
            integ.step(h);
            t += h;
            if (integ.steps_taken() > cfg.max_steps)
                throw Error(ErrorKind::NonConvergence, "tube solver: step budget exhausted");
        }
    } else {
        // advance in unit-time chunks until the worst per-unit-time change
        // drops below the tolerance
        for (;;) {
            double chunk_time = 0.0;
            double chunk_delta = 0.0;
            while (chunk_time < 1.0) {
                double h = std::min(integ.dt(), 1.0 - chunk_time);
                chunk_delta = std::max(chunk_delta, integ.step(h) / h);
                chunk_time += h;
                if (integ.steps_taken() > cfg.max_steps)
                    throw Error(ErrorKind::NonConvergence,
                                "tube solver: no fixed point within the step budget");
            }
            t += chunk_time;
            if (chunk_delta < cfg.converge_tol) break;
        }
    }
    integ.check_finite();
    return TubeRun{LevelSetField{field0.grid, integ.phi()}, t, integ.steps_taken()};
}

} // namespace

LevelSetField solve_backward_tube(const LevelSetField& field0, const TubeDynamics& dyn, VMode v_mode,
                                  double T, const TubeConfig& cfg) {
    if (T < 0.0) throw Error(ErrorKind::Config, "solve_backward_tube: horizon must be nonnegative");
    if (T == 0.0) return field0;
    return run_tube(field0, dyn, v_mode, HorizonSpec{false, T}, cfg).field;
}

InvariantSetResult invariant_set(const Grid& grid, const NormalFormSystem& sys,
                                 const LinearizingController& ctrl, const ConstraintSets& sets,
                                 HorizonSpec horizon, double xi, VMode v_mode, const TubeConfig& cfg,
                                 bool include_saturation) {
    if (xi < 0.0) throw Error(ErrorKind::Config, "invariant_set: xi must be nonnegative");
    require_grid_covers(grid, sets.x_box);

    LevelSetField box_field = sdf_box(grid, sets.x_box);
    LevelSetField eroded = erode(box_field, xi);
    InvariantSetResult res;
    res.eroded_box_empty = !eroded.has_negative();

    LevelSetField fail = complement_field(eroded);
    if (include_saturation)
        fail = union_fields(fail, saturation_margin_field(grid, sets, sys, ctrl));

    TubeDynamics dyn = closed_loop_tube_dynamics(ctrl, grid);
    TubeRun run = run_tube(fail, dyn, v_mode, horizon, cfg);

    // positive inside Delta: outside the tube and inside the eroded box
    LevelSetField delta{grid, std::vector<double>(grid.size())};
    for (std::size_t i = 0; i < delta.v.size(); ++i)
        delta.v[i] = std::min(run.field.v[i], -eroded.v[i]);
    res.delta = std::move(delta);
    res.empty_warning = !res.delta.has_positive();
    res.horizon_used = run.horizon;
    res.steps = run.steps;
    return res;
}

double set_area(const LevelSetField& field) {
    std::size_t count = 0;
    for (double v : field.v)
        if (v > 0.0) ++count;
    return field.grid.cell_volume() * static_cast<double>(count);
}

BetaSweepResult beta_sweep(std::span<const double> betas, const NormalFormSystem& sys,
                           const ConstraintSets& sets, const Grid& grid, HorizonSpec horizon, double xi,
                           VMode v_mode, const TubeConfig& cfg, bool include_saturation, VSpec v) {
    BetaSweepResult out;
    for (double beta : betas) {
        BetaSweepEntry entry;
        entry.beta = beta;
        try {
            LinearizingController ctrl = controller_from_beta(beta, sys.n, v);
            if (horizon.converged && !is_hurwitz(closed_loop_matrix(ctrl)))
                throw Error(ErrorKind::NonHurwitz,
                            "beta sweep: A+BK not Hurwitz at beta = " + std::to_string(beta));
            auto res = invariant_set(grid, sys, ctrl, sets, horizon, xi, v_mode, cfg, include_saturation);
            entry.field = std::move(res.delta);
            entry.area = set_area(entry.field);
            if (entry.area > out.best_area) {
                out.best_area = entry.area;
                out.best_beta = beta;
            }
        } catch (const Error& e) {
            entry.error = e.what();
        }
        out.entries.push_back(std::move(entry));
    }
    return out;
}

std::vector<std::uint8_t> brute_force_invariant(const Grid& grid, const NormalFormSystem& sys,
                                                const LinearizingController& ctrl,
                                                const ConstraintSets& sets, double T, double xi,
                                                const OracleConfig& cfg) {
    if (!std::isfinite(T) || T < 0.0)
        throw Error(ErrorKind::Config, "brute_force_invariant: horizon must be finite");
    const int n = grid.dim();
    std::vector<std::uint8_t> safe(grid.size(), 0);
    const double v_ref = (ctrl.v.kind == VSpec::Kind::Constant) ? ctrl.v.value : 0.0;
    const long steps = std::max(1L, static_cast<long>(std::ceil(T / cfg.step)));
    const double h = T / static_cast<double>(steps);

    auto ok_state = [&](std::span<const double> x) {
        if (sets.x_box.depth(x) < xi - 1e-12) return false;
        return std::abs(unsaturated_control(sys, ctrl, x, v_ref)) <= sets.u_max + 1e-12;
    };

    parallel_for(grid.size(), cfg.threads, [&](std::size_t lo, std::size_t hi) {
        Vec x(static_cast<std::size_t>(n)), k1, k2, k3, k4, tmp(static_cast<std::size_t>(n));
        for (std::size_t node = lo; node < hi; ++node) {
            grid.node(node, x);
            if (!ok_state(x)) continue;
            bool good = true;
            Vec y = x;
            for (long s = 0; s < steps && good; ++s) {
                auto rhs = [&](const Vec& state) {
                    double u = saturated_control(sys, ctrl, sets, state, v_ref);
                    return plant_rhs(sys, state, u);
                };
                k1 = rhs(y);
                for (int i = 0; i < n; ++i) tmp[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] + 0.5 * h * k1[static_cast<std::size_t>(i)];
                k2 = rhs(tmp);
                for (int i = 0; i < n; ++i) tmp[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] + 0.5 * h * k2[static_cast<std::size_t>(i)];
                k3 = rhs(tmp);
                for (int i = 0; i < n; ++i) tmp[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] + h * k3[static_cast<std::size_t>(i)];
                k4 = rhs(tmp);
                for (int i = 0; i < n; ++i)
                    y[static_cast<std::size_t>(i)] += h / 6.0 *
                                                      (k1[static_cast<std::size_t>(i)] + 2.0 * k2[static_cast<std::size_t>(i)] +
                                                       2.0 * k3[static_cast<std::size_t>(i)] + k4[static_cast<std::size_t>(i)]);
                if (norm_inf(y) > cfg.blowup || !std::isfinite(y[0])) good = false;
                else good = ok_state(y);
            }
            safe[node] = good ? 1 : 0;
        }
    });
    return safe;
}

bool contains(const LevelSetField& inner, const LevelSetField& outer) {
    require_same_grid(inner, outer, "contains");
    for (std::size_t i = 0; i < inner.v.size(); ++i)
        if (inner.v[i] <= 0.0 && !(outer.v[i] > 0.0)) return false;
    return true;
}

bool contains(const QuadraticSet& inner, const LevelSetField& outer) {
    const int n = outer.grid.dim();
    Vec x(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < outer.v.size(); ++i) {
        outer.grid.node(i, x);
        double q = dot(x, mat_vec(inner.Q, x));
        if (q <= inner.c && !(outer.v[i] > 0.0)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Export

void write_field_csv(const std::string& path, const LevelSetField& field) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Config, "cannot open '" + path + "' for writing");
    const int n = field.grid.dim();
    out << "# dim " << n << "\n";
    for (int i = 0; i < n; ++i) {
        const GridAxis& a = field.grid.axes[static_cast<std::size_t>(i)];
        char line[160];
        std::snprintf(line, sizeof(line), "# axis %d min %.17g max %.17g count %d\n", i, a.lo, a.hi, a.count);
        out << line;
    }
    for (int i = 0; i < n; ++i) out << "x" << (i + 1) << ",";
    out << "phi\n";
    Vec x(static_cast<std::size_t>(n));
    char buf[64];
    for (std::size_t i = 0; i < field.v.size(); ++i) {
        field.grid.node(i, x);
        for (int d = 0; d < n; ++d) {
            std::snprintf(buf, sizeof(buf), "%.17g,", x[static_cast<std::size_t>(d)]);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g\n", field.v[i]);
        out << buf;
    }
}

namespace {

struct SegmentEnd {
    long qx, qy;
    bool operator<(const SegmentEnd& o) const { return qx != o.qx ? qx < o.qx : qy < o.qy; }
};

SegmentEnd quantize(const std::array<double, 2>& p, double scale) {
    return SegmentEnd{static_cast<long>(std::llround(p[0] / scale)),
                      static_cast<long>(std::llround(p[1] / scale))};
}

} // namespace

std::vector<Polyline> zero_contours(const LevelSetField& field) {
    if (field.grid.dim() != 2)
        throw Error(ErrorKind::Config, "zero_contours: only 2-D fields are supported");
    const Grid& g = field.grid;
    const int nx = g.axes[0].count, ny = g.axes[1].count;
    auto at = [&](int i, int j) { return field.v[static_cast<std::size_t>(i) * ny + j]; };

    // marching squares: collect zero-crossing segments per cell
    std::vector<std::pair<std::array<double, 2>, std::array<double, 2>>> segs;
    auto interp = [&](double xa, double ya, double va, double xb, double yb, double vb) {
        double t = va / (va - vb);
        return std::array<double, 2>{xa + t * (xb - xa), ya + t * (yb - ya)};
    };
    for (int i = 0; i + 1 < nx; ++i)
        for (int j = 0; j + 1 < ny; ++j) {
            double x0 = g.coord(0, i), x1 = g.coord(0, i + 1);
            double y0 = g.coord(1, j), y1 = g.coord(1, j + 1);
            double v00 = at(i, j), v10 = at(i + 1, j), v01 = at(i, j + 1), v11 = at(i + 1, j + 1);
            std::vector<std::array<double, 2>> pts;
            if ((v00 < 0) != (v10 < 0)) pts.push_back(interp(x0, y0, v00, x1, y0, v10));
            if ((v10 < 0) != (v11 < 0)) pts.push_back(interp(x1, y0, v10, x1, y1, v11));
            if ((v01 < 0) != (v11 < 0)) pts.push_back(interp(x0, y1, v01, x1, y1, v11));
            if ((v00 < 0) != (v01 < 0)) pts.push_back(interp(x0, y0, v00, x0, y1, v01));
            if (pts.size() == 2) segs.emplace_back(pts[0], pts[1]);
            else if (pts.size() == 4) {
                // saddle cell: pair edges arbitrarily but consistently
                segs.emplace_back(pts[0], pts[1]);
                segs.emplace_back(pts[2], pts[3]);
            }
        }

    // chain segments into polylines by shared endpoints
    const double scale = 1e-9 * std::max(1.0, field.grid.diameter());
    std::multimap<SegmentEnd, std::size_t> by_end;
    for (std::size_t s = 0; s < segs.size(); ++s) {
        by_end.emplace(quantize(segs[s].first, scale), s);
        by_end.emplace(quantize(segs[s].second, scale), s);
    }
    std::vector<bool> used(segs.size(), false);
    std::vector<Polyline> out;
    for (std::size_t s = 0; s < segs.size(); ++s) {
        if (used[s]) continue;
        used[s] = true;
        Polyline line{segs[s].first, segs[s].second};
        for (int dir = 0; dir < 2; ++dir) {
            for (;;) {
                SegmentEnd key = quantize(dir == 0 ? line.back() : line.front(), scale);
                auto range = by_end.equal_range(key);
                std::size_t next = segs.size();
                for (auto it = range.first; it != range.second; ++it)
                    if (!used[it->second]) {
                        next = it->second;
                        break;
                    }
                if (next == segs.size()) break;
                used[next] = true;
                SegmentEnd a = quantize(segs[next].first, scale);
                auto& pt = (a.qx == key.qx && a.qy == key.qy) ? segs[next].second : segs[next].first;
                if (dir == 0) line.push_back(pt);
                else line.insert(line.begin(), pt);
            }
        }
        out.push_back(std::move(line));
    }
    return out;
}

void write_contours_csv(const std::string& path, const std::vector<Polyline>& polylines) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Config, "cannot open '" + path + "' for writing");
    out << "polyline,x1,x2\n";
    char buf[96];
    for (std::size_t p = 0; p < polylines.size(); ++p)
        for (const auto& pt : polylines[p]) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", p, pt[0], pt[1]);
            out << buf;
        }
}

} // namespace ofsafe
