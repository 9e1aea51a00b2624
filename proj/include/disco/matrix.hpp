#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "disco/errors.hpp"

namespace disco {

// Byte accounting for Matrix buffers, used to assert the O(n^2) memory
// contract of the single-shot estimator. Thread-local so parallel dataset
// generation does not interfere.
struct AllocationMeter {
    static std::size_t current_bytes();
    static std::size_t peak_bytes();
    static void note_alloc(std::size_t bytes);
    static void note_free(std::size_t bytes);
};

// RAII scope measuring the peak allocation delta above the baseline at
// construction time.
class MemoryScope {
public:
    MemoryScope();
    ~MemoryScope();
    // Peak bytes allocated above the entry baseline while the scope is live.
    std::size_t peak_delta_bytes() const;

private:
    std::size_t baseline_;
    std::size_t entry_peak_;
};

// Dense row-major float64 matrix. Values are immutable in spirit: library
// code builds a matrix once and shares it by value; mutation is only used
// while filling.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);  // zero-initialized
    Matrix(std::size_t rows, std::size_t cols, double fill);
    Matrix(const Matrix& other);
    Matrix(Matrix&& other) noexcept;
    Matrix& operator=(const Matrix& other);
    Matrix& operator=(Matrix&& other) noexcept;
    ~Matrix();

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix column(const std::vector<double>& v);
    static Matrix row(const std::vector<double>& v);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return rows_ * cols_; }
    bool empty() const { return size() == 0; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_; }
    const double* data() const { return data_; }

    bool all_finite() const;
    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    void allocate(std::size_t rows, std::size_t cols);
    void release();

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    double* data_ = nullptr;
};

// ---- plain (non-differentiated) kernels -----------------------------------
// These back both the estimator fast paths and the tape's backward closures.

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix transpose(const Matrix& a);
Matrix row_sum(const Matrix& a);  // n x m -> n x 1
Matrix col_sum(const Matrix& a);  // n x m -> 1 x m
double sum_all(const Matrix& a);
double mean_all(const Matrix& a);
double dot_all(const Matrix& a, const Matrix& b);  // sum of entrywise product
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace disco
