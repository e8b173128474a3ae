#include "ofsafe/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ofsafe {

namespace {

constexpr double kPivotTol = 1e-12;
constexpr int kMaxEigenDim = 8;

std::string dims(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

} // namespace

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
    Matrix m(static_cast<int>(d.size()), static_cast<int>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) m(static_cast<int>(i), static_cast<int>(i)) = d[i];
    return m;
}

bool Matrix::finite() const {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix operator+(const Matrix& x, const Matrix& y) {
    Matrix r = x;
    for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] += y.a[i];
    return r;
}

Matrix operator-(const Matrix& x, const Matrix& y) {
    Matrix r = x;
    for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] -= y.a[i];
    return r;
}

Matrix operator*(const Matrix& x, const Matrix& y) {
    Matrix r(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int k = 0; k < x.cols; ++k) {
            double v = x(i, k);
            if (v == 0.0) continue;
            for (int j = 0; j < y.cols; ++j) r(i, j) += v * y(k, j);
        }
    return r;
}

Matrix operator*(double s, const Matrix& x) {
    Matrix r = x;
    for (double& v : r.a) v *= s;
    return r;
}

Matrix transpose(const Matrix& m) {
    Matrix r(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) r(j, i) = m(i, j);
    return r;
}

Vec mat_vec(const Matrix& m, std::span<const double> x) {
    Vec r(static_cast<std::size_t>(m.rows), 0.0);
    for (int i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < m.cols; ++j) s += m(i, j) * x[static_cast<std::size_t>(j)];
        r[static_cast<std::size_t>(i)] = s;
    }
    return r;
}

double dot(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double norm_inf(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s = std::max(s, std::abs(v));
    return s;
}

double matrix_norm_inf(const Matrix& m) {
    double best = 0.0;
    for (int i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < m.cols; ++j) s += std::abs(m(i, j));
        best = std::max(best, s);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Linear solve

namespace {

struct Lu {
    Matrix lu;
    std::vector<int> perm;
};

Lu lu_factor(Matrix a) {
    const int n = a.rows;
    Lu f{std::move(a), std::vector<int>(static_cast<std::size_t>(n))};
    Matrix& m = f.lu;
    for (int i = 0; i < n; ++i) f.perm[static_cast<std::size_t>(i)] = i;
    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::abs(m(k, k));
        for (int i = k + 1; i < n; ++i)
            if (std::abs(m(i, k)) > best) {
                best = std::abs(m(i, k));
                piv = i;
            }
        if (best <= kPivotTol)
            throw Error(ErrorKind::Singular,
                        "singular matrix: pivot " + std::to_string(best) + " below tolerance at column " +
                            std::to_string(k));
        if (piv != k) {
            for (int j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
            std::swap(f.perm[static_cast<std::size_t>(k)], f.perm[static_cast<std::size_t>(piv)]);
        }
        for (int i = k + 1; i < n; ++i) {
            m(i, k) /= m(k, k);
            double l = m(i, k);
            if (l == 0.0) continue;
            for (int j = k + 1; j < n; ++j) m(i, j) -= l * m(k, j);
        }
    }
    return f;
}

Vec lu_solve(const Lu& f, std::span<const double> b) {
    const int n = f.lu.rows;
    Vec x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(f.perm[static_cast<std::size_t>(i)])];
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j) x[static_cast<std::size_t>(i)] -= f.lu(i, j) * x[static_cast<std::size_t>(j)];
    for (int i = n - 1; i >= 0; --i) {
        for (int j = i + 1; j < n; ++j) x[static_cast<std::size_t>(i)] -= f.lu(i, j) * x[static_cast<std::size_t>(j)];
        x[static_cast<std::size_t>(i)] /= f.lu(i, i);
    }
    return x;
}

} // namespace

Vec solve_linear(Matrix a, Vec b) {
    if (!a.square() || a.rows != static_cast<int>(b.size()))
        throw Error(ErrorKind::Numeric, "solve_linear: dimension mismatch " + dims(a));
    const Matrix saved = a;
    Lu f = lu_factor(std::move(a));
    Vec x = lu_solve(f, b);
    // One refinement pass keeps the residual contract cheap to meet.
    Vec r = b;
    for (int i = 0; i < saved.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < saved.cols; ++j) s += saved(i, j) * x[static_cast<std::size_t>(j)];
        r[static_cast<std::size_t>(i)] -= s;
    }
    Vec d = lu_solve(f, r);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += d[i];

    for (int i = 0; i < saved.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < saved.cols; ++j) s += saved(i, j) * x[static_cast<std::size_t>(j)];
        r[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)] - s;
    }
    if (norm_inf(r) > 1e-10 * (1.0 + norm_inf(b)))
        throw Error(ErrorKind::Numeric, "solve_linear: residual exceeds tolerance");
    return x;
}

Vec solve_linear_unchecked(Matrix a, Vec b) {
    if (!a.square() || a.rows != static_cast<int>(b.size()))
        throw Error(ErrorKind::Numeric, "solve_linear: dimension mismatch " + dims(a));
    Lu f = lu_factor(std::move(a));
    return lu_solve(f, b);
}

Matrix inverse(const Matrix& m) {
    if (!m.square()) throw Error(ErrorKind::Numeric, "inverse: matrix not square " + dims(m));
    const int n = m.rows;
    Lu f = lu_factor(m);
    Matrix inv(n, n);
    Vec e(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j) {
        e[static_cast<std::size_t>(j)] = 1.0;
        Vec col = lu_solve(f, e);
        for (int i = 0; i < n; ++i) inv(i, j) = col[static_cast<std::size_t>(i)];
        e[static_cast<std::size_t>(j)] = 0.0;
    }
    return inv;
}

// ---------------------------------------------------------------------------
// Eigenvalues: Hessenberg + Francis double-shift QR

namespace {

void hessenberg_reduce(Matrix& h) {
    const int n = h.rows;
    for (int k = 0; k + 2 < n; ++k) {
        double scale = 0.0;
        for (int i = k + 1; i < n; ++i) scale += std::abs(h(i, k));
        if (scale == 0.0) continue;
        Vec v(static_cast<std::size_t>(n), 0.0);
        double alpha = 0.0;
        for (int i = k + 1; i < n; ++i) {
            v[static_cast<std::size_t>(i)] = h(i, k) / scale;
            alpha += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
        }
        alpha = std::sqrt(alpha);
        if (v[static_cast<std::size_t>(k + 1)] < 0.0) alpha = -alpha;
        v[static_cast<std::size_t>(k + 1)] += alpha;
        double beta = alpha * v[static_cast<std::size_t>(k + 1)];
        if (beta == 0.0) continue;
        // similarity with P = I - v v^T / beta
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = k + 1; i < n; ++i) s += v[static_cast<std::size_t>(i)] * h(i, j);
            s /= beta;
            for (int i = k + 1; i < n; ++i) h(i, j) -= s * v[static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = k + 1; j < n; ++j) s += h(i, j) * v[static_cast<std::size_t>(j)];
            s /= beta;
            for (int j = k + 1; j < n; ++j) h(i, j) -= s * v[static_cast<std::size_t>(j)];
        }
        h(k + 1, k) = -scale * alpha;
        for (int i = k + 2; i < n; ++i) h(i, k) = 0.0;
    }
}

// Householder reflector annihilating y (and z) against x, applied as a
// similarity on rows/cols k..k+2 (or k..k+1 when z has no slot).
void apply_reflector(Matrix& h, int k, double x, double y, double z, bool three) {
    double vnorm = three ? std::sqrt(x * x + y * y + z * z) : std::sqrt(x * x + y * y);
    if (vnorm == 0.0) return;
    double alpha = (x >= 0.0) ? vnorm : -vnorm;
    double v0 = x + alpha;
    double v1 = y;
    double v2 = three ? z : 0.0;
    double beta = alpha * v0;
    if (beta == 0.0) return;
    const int n = h.rows;
    const int span = three ? 3 : 2;
    for (int j = 0; j < n; ++j) {
        double s = v0 * h(k, j) + v1 * h(k + 1, j);
        if (span == 3) s += v2 * h(k + 2, j);
        s /= beta;
        h(k, j) -= s * v0;
        h(k + 1, j) -= s * v1;
        if (span == 3) h(k + 2, j) -= s * v2;
    }
    for (int i = 0; i < n; ++i) {
        double s = v0 * h(i, k) + v1 * h(i, k + 1);
        if (span == 3) s += v2 * h(i, k + 2);
        s /= beta;
        h(i, k) -= s * v0;
        h(i, k + 1) -= s * v1;
        if (span == 3) h(i, k + 2) -= s * v2;
    }
}

void francis_step(Matrix& h, int l, int m, double s, double t) {
    double x = h(l, l) * h(l, l) + h(l, l + 1) * h(l + 1, l) - s * h(l, l) + t;
    double y = h(l + 1, l) * (h(l, l) + h(l + 1, l + 1) - s);
    double z = (l + 2 <= m) ? h(l + 2, l + 1) * h(l + 1, l) : 0.0;
    for (int k = l; k <= m - 2; ++k) {
        apply_reflector(h, k, x, y, z, true);
        if (k > l) {
            h(k + 1, k - 1) = 0.0;
            h(k + 2, k - 1) = 0.0;
        }
        x = h(k + 1, k);
        y = h(k + 2, k);
        z = (k + 3 <= m) ? h(k + 3, k) : 0.0;
    }
    apply_reflector(h, m - 1, x, y, 0.0, false);
    if (m - 2 >= l) h(m, m - 2) = 0.0;
}

void push_block2(std::vector<std::complex<double>>& out, double a, double b, double c, double d) {
    double tr = a + d;
    double det = a * d - b * c;
    double disc = tr * tr / 4.0 - det;
    if (disc >= 0.0) {
        double root = std::sqrt(disc);
        // stable split: compute the larger-magnitude root first
        double r1 = tr / 2.0 + ((tr >= 0.0) ? root : -root);
        double r2 = (r1 != 0.0) ? det / r1 : tr / 2.0 - ((tr >= 0.0) ? root : -root);
        out.emplace_back(r1, 0.0);
        out.emplace_back(r2, 0.0);
    } else {
        double im = std::sqrt(-disc);
        out.emplace_back(tr / 2.0, im);
        out.emplace_back(tr / 2.0, -im);
    }
}

} // namespace

ComplexEigenvalues eigenvalues_general(const Matrix& m) {
    if (!m.square()) throw Error(ErrorKind::Numeric, "eigenvalues: matrix not square " + dims(m));
    const int n = m.rows;
    if (n > kMaxEigenDim)
        throw Error(ErrorKind::Numeric, "eigenvalues: dimension " + std::to_string(n) + " above supported limit");
    if (!m.finite()) throw Error(ErrorKind::NonConvergence, "eigenvalues: non-finite input");
    ComplexEigenvalues out;
    if (n == 0) return out;
    Matrix h = m;
    hessenberg_reduce(h);
    const double hnorm = std::max(matrix_norm_inf(h), 1e-300);
    long budget = 100L * n * n;
    int iters_since_deflate = 0;
    int hi = n - 1;
    while (hi >= 0) {
        if (hi == 0) {
            out.emplace_back(h(0, 0), 0.0);
            break;
        }
        int l = hi;
        while (l > 0) {
            double s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
            if (s == 0.0) s = hnorm;
            if (std::abs(h(l, l - 1)) <= 1e-14 * s) {
                h(l, l - 1) = 0.0;
                break;
            }
            --l;
        }
        if (l == hi) {
            out.emplace_back(h(hi, hi), 0.0);
            --hi;
            iters_since_deflate = 0;
            continue;
        }
        if (l == hi - 1) {
            push_block2(out, h(l, l), h(l, hi), h(hi, l), h(hi, hi));
            hi -= 2;
            iters_since_deflate = 0;
            continue;
        }
        if (--budget < 0 || !h.finite())
            throw Error(ErrorKind::NonConvergence, "eigenvalues: QR iteration budget exhausted");
        ++iters_since_deflate;
        double s, t;
        if (iters_since_deflate % 11 == 10) {
            // exceptional shift to break symmetric cycling
            double w = std::abs(h(hi, hi - 1)) + std::abs(h(hi - 1, hi - 2));
            double aa = h(hi, hi) + 0.75 * w;
            s = 2.0 * aa;
            t = aa * aa;
        } else {
            s = h(hi - 1, hi - 1) + h(hi, hi);
            t = h(hi - 1, hi - 1) * h(hi, hi) - h(hi - 1, hi) * h(hi, hi - 1);
        }
        francis_step(h, l, hi, s, t);
    }
    std::sort(out.begin(), out.end(), [](const std::complex<double>& a, const std::complex<double>& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return out;
}

// ---------------------------------------------------------------------------
// Symmetric eigenvalues: cyclic Jacobi

std::pair<double, double> eigen_extrema_symmetric(const Matrix& m) {
    if (!m.square()) throw Error(ErrorKind::Numeric, "eigen_extrema: matrix not square " + dims(m));
    const int n = m.rows;
    double maxabs = 0.0;
    for (double v : m.a) maxabs = std::max(maxabs, std::abs(v));
    double asym = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) asym = std::max(asym, std::abs(m(i, j) - m(j, i)));
    if (asym > 1e-10 * std::max(1.0, maxabs))
        throw Error(ErrorKind::Asymmetry, "eigen_extrema: matrix asymmetric by " + std::to_string(asym));

    Matrix a = m;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = a(j, i) = v;
        }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (std::sqrt(off) <= 1e-14 * std::max(1.0, maxabs)) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                double tt = ((theta >= 0.0) ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(tt * tt + 1.0);
                double s = tt * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    double lo = a(0, 0), hi = a(0, 0);
    for (int i = 1; i < n; ++i) {
        lo = std::min(lo, a(i, i));
        hi = std::max(hi, a(i, i));
    }
    return {lo, hi};
}

// ---------------------------------------------------------------------------
// Lyapunov equation

bool is_hurwitz(const Matrix& m, double margin) {
    for (const auto& ev : eigenvalues_general(m))
        if (ev.real() >= -margin) return false;
    return true;
}

Matrix solve_lyapunov(const Matrix& m) {
    if (!m.square()) throw Error(ErrorKind::Numeric, "solve_lyapunov: matrix not square " + dims(m));
    const int n = m.rows;
    if (!is_hurwitz(m)) {
        std::string roots;
        for (const auto& ev : eigenvalues_general(m))
            roots += " (" + std::to_string(ev.real()) + (ev.imag() >= 0 ? "+" : "") + std::to_string(ev.imag()) + "i)";
        throw Error(ErrorKind::NonHurwitz, "solve_lyapunov: matrix not Hurwitz; eigenvalues:" + roots);
    }
    // rows indexed by equation (i,j); unknown p_{kl} at column k*n+l
    Matrix sys(n * n, n * n);
    Vec rhs(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            int row = i * n + j;
            rhs[static_cast<std::size_t>(row)] = (i == j) ? -1.0 : 0.0;
            for (int k = 0; k < n; ++k) {
                sys(row, k * n + j) += m(k, i);
                sys(row, i * n + k) += m(k, j);
            }
        }
    Vec x = solve_linear(std::move(sys), std::move(rhs));
    Matrix p(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) p(i, j) = x[static_cast<std::size_t>(i) * n + j];
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = 0.5 * (p(i, j) + p(j, i));
            p(i, j) = p(j, i) = v;
        }
    Matrix resid = transpose(m) * p + p * m + Matrix::identity(n);
    if (matrix_norm_inf(resid) > 1e-9)
        throw Error(ErrorKind::Numeric, "solve_lyapunov: residual " + std::to_string(matrix_norm_inf(resid)));
    auto [lmin, lmax] = eigen_extrema_symmetric(p);
    (void)lmax;
    if (lmin <= 0.0)
        throw Error(ErrorKind::Indefinite,
                    "solve_lyapunov: solution not positive definite (lambda_min=" + std::to_string(lmin) + ")");
    return p;
}

// ---------------------------------------------------------------------------
// Matrix exponential

Matrix matrix_exponential(const Matrix& m, double t) {
    if (!m.square()) throw Error(ErrorKind::Numeric, "matrix_exponential: matrix not square " + dims(m));
    const int n = m.rows;
    Matrix a = t * m;
    if (!a.finite()) throw Error(ErrorKind::Overflow, "matrix_exponential: non-finite input");
    double nrm = matrix_norm_inf(a);
    int s = 0;
    if (nrm > 0.5) {
        s = static_cast<int>(std::ceil(std::log2(nrm / 0.5)));
        if (s > 50) throw Error(ErrorKind::Overflow, "matrix_exponential: scaling exceeds 50 squarings");
        double f = std::ldexp(1.0, -s);
        a = f * a;
    }
    // [6/6] Pade approximant on the scaled matrix
    double c[7];
    c[0] = 1.0;
    for (int k = 1; k <= 6; ++k) c[k] = c[k - 1] * static_cast<double>(6 - k + 1) / (k * (12 - k + 1));
    Matrix pw = Matrix::identity(n);
    Matrix num = Matrix::identity(n);
    Matrix den = Matrix::identity(n);
    for (std::size_t i = 0; i < num.a.size(); ++i) {
        num.a[i] *= c[0];
        den.a[i] *= c[0];
    }
    double sign = 1.0;
    for (int k = 1; k <= 6; ++k) {
        pw = pw * a;
        sign = -sign;
        for (std::size_t i = 0; i < pw.a.size(); ++i) {
            num.a[i] += c[k] * pw.a[i];
            den.a[i] += sign * c[k] * pw.a[i];
        }
    }
    // solve den * X = num column by column
    Lu f = lu_factor(den);
    Matrix x(n, n);
    Vec col(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = num(i, j);
        Vec sol = lu_solve(f, col);
        for (int i = 0; i < n; ++i) x(i, j) = sol[static_cast<std::size_t>(i)];
    }
    for (int k = 0; k < s; ++k) {
        x = x * x;
        if (!x.finite()) throw Error(ErrorKind::Overflow, "matrix_exponential: overflow during squaring");
    }
    return x;
}

double spectral_norm(const Matrix& m) {
    const int n = m.cols;
    Matrix g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < m.rows; ++k) s += m(k, i) * m(k, j);
            g(i, j) = g(j, i) = s;
        }
    auto [lmin, lmax] = eigen_extrema_symmetric(g);
    (void)lmin;
    return std::sqrt(std::max(0.0, lmax));
}

Matrix poly_companion(std::span<const double> alphas) {
    const int n = static_cast<int>(alphas.size());
    Matrix c(n, n);
    for (int j = 0; j < n; ++j) c(0, j) = -alphas[static_cast<std::size_t>(j)];
    for (int i = 1; i < n; ++i) c(i, i - 1) = 1.0;
    return c;
}

} // namespace ofsafe
