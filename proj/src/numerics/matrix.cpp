#include "gqla/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gqla/error.hpp"

namespace gqla {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

Vector Matrix::column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void Matrix::set_column(std::size_t c, std::span<const double> values) {
    if (values.size() != rows_) throw ShapeError("set_column: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix Matrix::block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    if (r0 + nr > rows_ || c0 + nc > cols_) throw ShapeError("block: out of range");
    Matrix b(nr, nc);
    for (std::size_t r = 0; r < nr; ++r)
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols_ + c0), nc,
                    b.data_.begin() + static_cast<std::ptrdiff_t>(r * nc));
    return b;
}

void Matrix::set_block(std::size_t r0, std::size_t c0, const Matrix& m) {
    if (r0 + m.rows() > rows_ || c0 + m.cols() > cols_) throw ShapeError("set_block: out of range");
    for (std::size_t r = 0; r < m.rows(); ++r)
        std::copy_n(m.data_.begin() + static_cast<std::ptrdiff_t>(r * m.cols()), m.cols(),
                    data_.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols_ + c0));
}

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw ShapeError("append_row: width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    require_same_shape(*this, o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    require_same_shape(*this, o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto arow = a.row(k);
        auto brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            auto out = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aki * brow[j];
        }
    }
    return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw ShapeError("matvec: length mismatch");
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
    return y;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) throw ShapeError("matvec_t: length mismatch");
    Vector y(a.cols(), 0.0);
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto arow = a.row(k);
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += arow[j] * x[k];
    }
    return y;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    if (top.empty()) return bottom;
    if (bottom.empty()) return top;
    if (top.cols() != bottom.cols()) throw ShapeError("vstack: column counts differ");
    Matrix m(top.rows() + bottom.rows(), top.cols());
    m.set_block(0, 0, top);
    m.set_block(top.rows(), 0, bottom);
    return m;
}

Matrix hstack(const Matrix& left, const Matrix& right) {
    if (left.empty()) return right;
    if (right.empty()) return left;
    if (left.rows() != right.rows()) throw ShapeError("hstack: row counts differ");
    Matrix m(left.rows(), left.cols() + right.cols());
    m.set_block(0, 0, left);
    m.set_block(0, left.cols(), right);
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double frobenius_norm(const Matrix& m) { return norm(m.data()); }

double trace(const Matrix& m) {
    double t = 0.0;
    for (std::size_t i = 0; i < std::min(m.rows(), m.cols()); ++i) t += m(i, i);
    return t;
}

double max_abs(std::span<const double> v) {
    double best = 0.0;
    for (double x : v) {
        if (std::isnan(x)) return x;
        best = std::max(best, std::abs(x));
    }
    return best;
}

double max_abs(const Matrix& m) { return max_abs(m.data()); }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
    double best = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(a[i] - b[i]);
        if (std::isnan(d)) return d;
        best = std::max(best, d);
    }
    return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    return max_abs_diff(a.data(), b.data());
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

bool is_symmetric(const Matrix& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(1.0, max_abs(m));
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j)
            if (std::abs(m(i, j) - m(j, i)) > rel_tol * scale) return false;
    return true;
}

Matrix random_uniform(std::size_t rows, std::size_t cols, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

Matrix random_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    if (cols > rows) throw ParameterError("random_orthonormal: cols > rows");
    // Modified Gram-Schmidt with one re-orthogonalisation pass.
    Matrix q = random_normal(rows, cols, rng);
    for (std::size_t c = 0; c < cols; ++c) {
        Vector v = q.column(c);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t p = 0; p < c; ++p) {
                Vector prev = q.column(p);
                const double proj = dot(prev, v);
                for (std::size_t r = 0; r < rows; ++r) v[r] -= proj * prev[r];
            }
        }
        const double n = norm(v);
        for (double& x : v) x /= n;
        q.set_column(c, v);
    }
    return q;
}

} // namespace gqla
