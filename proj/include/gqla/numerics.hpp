#pragma once

#include <cstddef>
#include <span>

#include "gqla/matrix.hpp"

namespace gqla {

struct EigenResult {
    Vector eigenvalues;  // non-increasing
    Matrix eigenvectors; // column i pairs with eigenvalue i
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
//
// Sweeps stop once the off-diagonal Frobenius norm drops below 1e-12 * ||m||_F
// (cap: 100 sweeps). Eigenpairs are sorted by decreasing eigenvalue with ties
// kept in diagonal-index order, and each eigenvector is signed so that its
// largest-magnitude component is positive. Results are bit-reproducible.
EigenResult sym_eig(const Matrix& m);

// Uncentered second-moment accumulator: second_moment = sum_t a_t a_t^T.
struct CovarianceAccumulator {
    std::size_t dim = 0;
    Matrix second_moment;
    std::size_t sample_count = 0;

    CovarianceAccumulator() = default;
    explicit CovarianceAccumulator(std::size_t d) : dim(d), second_moment(d, d), sample_count(0) {}

    // batch is samples x dim.
    void add(const Matrix& batch);
    void add_sample(std::span<const double> sample);
    void merge(const CovarianceAccumulator& other);

    // second_moment / sample_count (zero matrix when empty).
    Matrix normalized() const;
};

CovarianceAccumulator accumulate(CovarianceAccumulator acc, const Matrix& batch);

struct LowRankFactors {
    Matrix u; // d_out x rank, column-orthonormal
    Matrix v; // rank x r_in, v = u^T w
};

// Covariance-weighted low-rank factorisation w ~= u v with u the top-`rank`
// eigenvectors of the normalised activation covariance.
LowRankFactors pca_factor(const Matrix& w, const CovarianceAccumulator& sigma, std::size_t rank);

// Expected squared residual of activations with second moment `sigma` after
// projecting onto span(basis): trace((I - BB^T) sigma (I - BB^T)). basis must
// be column-orthonormal. pca_factor's u minimises this over all bases of equal rank.
double projection_residual(const Matrix& sigma, const Matrix& basis);

// Householder QR of a tall full-column-rank matrix, reused across right-hand sides.
class LeastSquaresSolver {
  public:
    explicit LeastSquaresSolver(const Matrix& a);

    std::size_t rows() const { return qr_.rows(); }
    std::size_t cols() const { return qr_.cols(); }

    // argmin_x ||a x - b||.
    Vector solve(std::span<const double> b) const;

  private:
    Matrix qr_; // R in the upper triangle, Householder vectors below
    Vector tau_;
};

} // namespace gqla
