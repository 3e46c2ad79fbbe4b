#include <algorithm>
#include <cmath>

#include "gqla/error.hpp"
#include "gqla/numerics.hpp"

namespace gqla {

LeastSquaresSolver::LeastSquaresSolver(const Matrix& a) : qr_(a), tau_(a.cols(), 0.0) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (n > m) throw ParameterError("LeastSquaresSolver: more columns than rows");

    double max_diag = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double sigma = 0.0;
        for (std::size_t i = k; i < m; ++i) sigma += qr_(i, k) * qr_(i, k);
        const double alpha = std::sqrt(sigma);
        if (alpha == 0.0) throw ParameterError("LeastSquaresSolver: matrix is rank deficient");
        const double beta = qr_(k, k) > 0.0 ? -alpha : alpha;
        // v = x - beta e1, normalised so v[0] = 1.
        const double v0 = qr_(k, k) - beta;
        for (std::size_t i = k + 1; i < m; ++i) qr_(i, k) /= v0;
        tau_[k] = (beta - qr_(k, k)) / beta;
        qr_(k, k) = beta;

        for (std::size_t j = k + 1; j < n; ++j) {
            double s = qr_(k, j);
            for (std::size_t i = k + 1; i < m; ++i) s += qr_(i, k) * qr_(i, j);
            s *= tau_[k];
            qr_(k, j) -= s;
            for (std::size_t i = k + 1; i < m; ++i) qr_(i, j) -= s * qr_(i, k);
        }
        max_diag = std::max(max_diag, std::abs(beta));
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (std::abs(qr_(k, k)) <= 1e-12 * max_diag)
            throw ParameterError("LeastSquaresSolver: matrix is numerically rank deficient");
    }
}

Vector LeastSquaresSolver::solve(std::span<const double> b) const {
    const std::size_t m = qr_.rows();
    const std::size_t n = qr_.cols();
    if (b.size() != m) throw ShapeError("LeastSquaresSolver::solve: rhs length mismatch");

    Vector y(b.begin(), b.end());
    for (std::size_t k = 0; k < n; ++k) {
        double s = y[k];
        for (std::size_t i = k + 1; i < m; ++i) s += qr_(i, k) * y[i];
        s *= tau_[k];
        y[k] -= s;
        for (std::size_t i = k + 1; i < m; ++i) y[i] -= s * qr_(i, k);
    }
    Vector x(n);
    for (std::size_t k = n; k-- > 0;) {
        double s = y[k];
        for (std::size_t j = k + 1; j < n; ++j) s -= qr_(k, j) * x[j];
        x[k] = s / qr_(k, k);
    }
    return x;
}

} // namespace gqla
