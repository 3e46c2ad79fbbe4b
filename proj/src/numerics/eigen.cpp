#include <algorithm>
#include <cmath>
#include <numeric>

#include "gqla/error.hpp"
#include "gqla/numerics.hpp"

namespace gqla {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kOffDiagonalTol = 1e-12;
constexpr double kSymmetryTol = 1e-10;

double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

// Annihilates a(p, q) with a plane rotation, updating a and the accumulated v.
void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
    const std::size_t n = a.rows();
    const double apq = a(p, q);
    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
    const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;

    for (std::size_t k = 0; k < n; ++k) {
        const double akp = a(k, p);
        const double akq = a(k, q);
        a(k, p) = c * akp - s * akq;
        a(k, q) = s * akp + c * akq;
    }
    for (std::size_t k = 0; k < n; ++k) {
        const double apk = a(p, k);
        const double aqk = a(q, k);
        a(p, k) = c * apk - s * aqk;
        a(q, k) = s * apk + c * aqk;
    }
    a(p, q) = 0.0;
    a(q, p) = 0.0;

    for (std::size_t k = 0; k < n; ++k) {
        const double vkp = v(k, p);
        const double vkq = v(k, q);
        v(k, p) = c * vkp - s * vkq;
        v(k, q) = s * vkp + c * vkq;
    }
}

} // namespace

EigenResult sym_eig(const Matrix& m) {
    if (m.rows() != m.cols()) throw ShapeError("sym_eig: matrix is not square");
    if (!is_symmetric(m, kSymmetryTol)) throw ShapeError("sym_eig: matrix is not symmetric");
    const std::size_t n = m.rows();

    Matrix a = m;
    // Work on the exactly symmetrised input so rounding in the caller cannot bias the result.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (m(i, j) + m(j, i));

    Matrix v = Matrix::identity(n);
    const double tol = kOffDiagonalTol * frobenius_norm(m);

    bool converged = off_diagonal_norm(a) <= tol;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q)
                if (a(p, q) != 0.0) rotate(a, v, p, q);
        converged = off_diagonal_norm(a) <= tol;
    }
    if (!converged) throw NumericError("sym_eig: Jacobi iteration did not converge in 100 sweeps");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenResult out{Vector(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.eigenvalues[k] = a(src, src);
        std::size_t lead = 0;
        for (std::size_t r = 1; r < n; ++r)
            if (std::abs(v(r, src)) > std::abs(v(lead, src))) lead = r;
        const double sign = v(lead, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, k) = sign * v(r, src);
    }
    return out;
}

} // namespace gqla
