#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace sspe {

// Dense row-major fp64 matrix. Row vectors are 1xN matrices.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix row(std::initializer_list<double> xs) {
        Matrix m(1, xs.size());
        std::size_t j = 0;
        for (double x : xs) m.data[j++] = x;
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row_ptr(std::size_t r) { return data.data() + r * cols; }
    const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }

    std::size_t size() const { return rows * cols; }
    bool empty() const { return size() == 0; }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }

    void require_same_shape(const Matrix& o, const char* what) const {
        if (!same_shape(o))
            throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str() +
                                        " vs " + o.shape_str());
    }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
};

inline Matrix operator+(Matrix a, const Matrix& b) {
    a += b;
    return a;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
    a.require_same_shape(b, "operator-");
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
    return out;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * s;
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    a.require_same_shape(b, "hadamard");
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) out(c, r) = a(r, c);
    return out;
}

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: inner dimensions " + a.shape_str() + " vs " +
                                    b.shape_str());
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

// C = A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw std::invalid_argument("matmul_nt: inner dimensions " + a.shape_str() + " vs " +
                                    b.shape_str());
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row_ptr(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            out(i, j) = acc;
        }
    }
    return out;
}

// C = A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows)
        throw std::invalid_argument("matmul_tn: inner dimensions " + a.shape_str() + " vs " +
                                    b.shape_str());
    Matrix out(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.row_ptr(k);
        const double* brow = b.row_ptr(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = out.row_ptr(i);
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
    return out;
}

}  // namespace sspe
