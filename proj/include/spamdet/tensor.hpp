#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spamdet/error.hpp"

namespace spamdet {

// Dense row-major matrix.
template <typename T>
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("matrix data size does not match " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T &operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<T> &data() { return data_; }
    const std::vector<T> &data() const { return data_; }

    bool operator==(const Matrix &) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

// C = A * B
template <typename T>
Matrix<T> matmul(const Matrix<T> &a, const Matrix<T> &b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    Matrix<T> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
        }
    }
    return c;
}

// C = A * B^T
template <typename T>
Matrix<T> matmul_bt(const Matrix<T> &a, const Matrix<T> &b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_bt: inner dimensions differ");
    Matrix<T> c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto brow = b.row(j);
            T acc{};
            for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
            c(i, j) = acc;
        }
    }
    return c;
}

// C = A^T * B
template <typename T>
Matrix<T> matmul_at(const Matrix<T> &a, const Matrix<T> &b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_at: row counts differ");
    Matrix<T> c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto arow = a.row(k);
        auto brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const T aki = arow[i];
            auto out = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aki * brow[j];
        }
    }
    return c;
}

template <typename T>
void add_row_bias(Matrix<T> &m, std::span<const T> bias) {
    if (bias.size() != m.cols()) throw ShapeError("bias length does not match matrix columns");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
    }
}

} // namespace spamdet
