#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace gqla {

using Vector = std::vector<double>;

// Dense row-major double matrix. Value type; copies are deep.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    Vector column(std::size_t c) const;
    void set_column(std::size_t c, std::span<const double> values);

    Matrix transposed() const;
    Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;
    Matrix row_block(std::size_t r0, std::size_t nr) const { return block(r0, 0, nr, cols_); }
    Matrix col_block(std::size_t c0, std::size_t nc) const { return block(0, c0, rows_, nc); }
    void set_block(std::size_t r0, std::size_t c0, const Matrix& m);

    // Appends one row; the matrix must be empty or have matching width.
    void append_row(std::span<const double> values);

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);

    bool operator==(const Matrix& o) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
// a^T * x.
Vector matvec_t(const Matrix& a, std::span<const double> x);

Matrix vstack(const Matrix& top, const Matrix& bottom);
Matrix hstack(const Matrix& left, const Matrix& right);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
double frobenius_norm(const Matrix& m);
double trace(const Matrix& m);
double max_abs(const Matrix& m);
double max_abs(std::span<const double> v);
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
bool all_finite(const Matrix& m);
bool is_symmetric(const Matrix& m, double rel_tol);

// Entries i.i.d. uniform in [lo, hi).
Matrix random_uniform(std::size_t rows, std::size_t cols, double lo, double hi, std::mt19937_64& rng);
Matrix random_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double stddev = 1.0);
// Columns form an orthonormal basis of a uniformly random rank-`cols` subspace.
Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

} // namespace gqla
