#include <string>

#include "gqla/error.hpp"
#include "gqla/numerics.hpp"

namespace gqla {

void CovarianceAccumulator::add(const Matrix& batch) {
    if (batch.empty()) return;
    if (batch.cols() != dim) {
        throw ShapeError("accumulate: batch has " + std::to_string(batch.cols()) + " columns, accumulator dim is " +
                         std::to_string(dim));
    }
    for (std::size_t t = 0; t < batch.rows(); ++t) {
        auto x = batch.row(t);
        for (std::size_t i = 0; i < dim; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            auto out = second_moment.row(i);
            for (std::size_t j = 0; j < dim; ++j) out[j] += xi * x[j];
        }
    }
    sample_count += batch.rows();
}

void CovarianceAccumulator::add_sample(std::span<const double> sample) {
    add(Matrix(1, sample.size(), std::vector<double>(sample.begin(), sample.end())));
}

void CovarianceAccumulator::merge(const CovarianceAccumulator& other) {
    if (other.dim != dim) throw ShapeError("CovarianceAccumulator::merge: dim mismatch");
    second_moment += other.second_moment;
    sample_count += other.sample_count;
}

Matrix CovarianceAccumulator::normalized() const {
    if (sample_count == 0) return Matrix(dim, dim);
    return second_moment * (1.0 / static_cast<double>(sample_count));
}

CovarianceAccumulator accumulate(CovarianceAccumulator acc, const Matrix& batch) {
    acc.add(batch);
    return acc;
}

LowRankFactors pca_factor(const Matrix& w, const CovarianceAccumulator& sigma, std::size_t rank) {
    if (sigma.dim != w.rows()) {
        throw ShapeError("pca_factor: covariance dim " + std::to_string(sigma.dim) + " != output dim " +
                         std::to_string(w.rows()));
    }
    if (rank > w.rows()) {
        throw ParameterError("pca_factor: rank " + std::to_string(rank) + " exceeds output dim " +
                             std::to_string(w.rows()));
    }
    const EigenResult eig = sym_eig(sigma.normalized());
    LowRankFactors f;
    f.u = eig.eigenvectors.col_block(0, rank);
    f.v = matmul_tn(f.u, w);
    return f;
}

double projection_residual(const Matrix& sigma, const Matrix& basis) {
    if (sigma.rows() != basis.rows()) throw ShapeError("projection_residual: dimension mismatch");
    // trace((I-P) S (I-P)) = trace(S) - trace(B^T S B) for orthonormal B.
    const Matrix sb = matmul(sigma, basis);
    double captured = 0.0;
    for (std::size_t c = 0; c < basis.cols(); ++c)
        for (std::size_t r = 0; r < basis.rows(); ++r) captured += basis(r, c) * sb(r, c);
    return trace(sigma) - captured;
}

} // namespace gqla
