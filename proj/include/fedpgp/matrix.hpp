#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fedpgp/errors.hpp"
#include "fedpgp/rng.hpp"

namespace fedpgp {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Reductions over entries always run in
// ascending index order so results are bit-stable across runs and platforms.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows_ * cols_ != data_.size()) {
            throw ShapeError("matrix: data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    static Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
        Matrix m(rows, cols);
        for (double& v : m.data_) v = rng.gaussian(0.0, stddev);
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    Vector col(std::size_t j) const {
        Vector out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
        return out;
    }

    Vector row(std::size_t i) const {
        Vector out(cols_);
        for (std::size_t j = 0; j < cols_; ++j) out[j] = (*this)(i, j);
        return out;
    }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* where) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(where) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "matrix add");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "matrix sub");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

inline Matrix operator*(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

inline Matrix operator*(double s, const Matrix& a) { return a * s; }

inline void add_in_place(Matrix& a, const Matrix& b, double scale = 1.0) {
    require_same_shape(a, b, "matrix add_in_place");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += scale * b.data()[i];
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

// y = M x
inline Vector matvec(const Matrix& m, const Vector& x) {
    if (m.cols() != x.size()) {
        throw ShapeError("matvec: " + std::to_string(m.cols()) + " cols vs vector of " +
                         std::to_string(x.size()));
    }
    Vector y(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) acc += m(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

// y = M^T x
inline Vector matvec_transposed(const Matrix& m, const Vector& x) {
    if (m.rows() != x.size()) {
        throw ShapeError("matvec_transposed: " + std::to_string(m.rows()) + " rows vs vector of " +
                         std::to_string(x.size()));
    }
    Vector y(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols(); ++j) y[j] += m(i, j) * xi;
    }
    return y;
}

inline bool all_finite(const Matrix& m) {
    for (double v : m.data())
        if (!std::isfinite(v)) return false;
    return true;
}

inline bool all_finite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace fedpgp
