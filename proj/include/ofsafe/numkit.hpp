#pragma once

#include <complex>
#include <span>
#include <utility>
#include <vector>

#include "ofsafe/errors.hpp"

namespace ofsafe {

using Vec = std::vector<double>;

// Dense row-major matrix. Everything in this toolkit lives at n <= ~8
// (Lyapunov vectorization temporarily expands to n^2 x n^2), so there is
// no blocking, no views, no cleverness.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
    Matrix(int r, int c, std::initializer_list<double> vals) : rows(r), cols(c), a(vals) {}

    static Matrix identity(int n);
    static Matrix diagonal(std::span<const double> d);

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    bool square() const { return rows == cols; }
    bool finite() const;
};

Matrix operator+(const Matrix& x, const Matrix& y);
Matrix operator-(const Matrix& x, const Matrix& y);
Matrix operator*(const Matrix& x, const Matrix& y);
Matrix operator*(double s, const Matrix& x);
Matrix transpose(const Matrix& m);

Vec mat_vec(const Matrix& m, std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);
double norm_inf(std::span<const double> x);
double matrix_norm_inf(const Matrix& m); // max absolute row sum

using ComplexEigenvalues = std::vector<std::complex<double>>;

// Gaussian elimination with partial pivoting plus one refinement pass.
// Throws ErrorKind::Singular when a pivot magnitude drops below 1e-12.
Vec solve_linear(Matrix a, Vec b);

// Same elimination without the residual verification; for inverse-iteration
// style solves against intentionally near-singular matrices.
Vec solve_linear_unchecked(Matrix a, Vec b);

Matrix inverse(const Matrix& m);

// Hessenberg reduction followed by shifted (Francis double-shift) QR.
// Iteration budget 100*n^2; exceeding it, or NaN poisoning, raises
// ErrorKind::NonConvergence. Supported for n <= 8. Results are sorted by
// (real, imag) and complex values come in conjugate pairs.
ComplexEigenvalues eigenvalues_general(const Matrix& m);

// Extremal eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
// Symmetry is checked to 1e-10 (relative to the largest entry).
std::pair<double, double> eigen_extrema_symmetric(const Matrix& m);

// Solves M^T P + P M = -I by Kronecker vectorization into an n^2 linear
// system. M must be Hurwitz; the result is symmetrized, its residual is
// checked to 1e-9 and positive definiteness is verified.
Matrix solve_lyapunov(const Matrix& m);

// e^{M t} by scaling-and-squaring with a [6/6] Pade core.
Matrix matrix_exponential(const Matrix& m, double t);

// sqrt(lambda_max(M^T M)).
double spectral_norm(const Matrix& m);

// All eigenvalue real parts strictly below -margin.
bool is_hurwitz(const Matrix& m, double margin = 1e-9);

// Companion matrix of s^n + alphas[0] s^{n-1} + ... + alphas[n-1].
Matrix poly_companion(std::span<const double> alphas);

} // namespace ofsafe
