#include "disco/matrix.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace disco {
namespace {

thread_local std::size_t g_current_bytes = 0;
thread_local std::size_t g_peak_bytes = 0;

using EigenMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstEigenMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstEigenMap map(const Matrix& m) {
    return ConstEigenMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                         static_cast<Eigen::Index>(m.cols()));
}

EigenMap map(Matrix& m) {
    return EigenMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                             "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                             "x" + std::to_string(b.cols()));
    }
}

}  // namespace

std::size_t AllocationMeter::current_bytes() { return g_current_bytes; }
std::size_t AllocationMeter::peak_bytes() { return g_peak_bytes; }
void AllocationMeter::note_alloc(std::size_t bytes) {
    g_current_bytes += bytes;
    g_peak_bytes = std::max(g_peak_bytes, g_current_bytes);
}
void AllocationMeter::note_free(std::size_t bytes) { g_current_bytes -= bytes; }

MemoryScope::MemoryScope() : baseline_(g_current_bytes), entry_peak_(g_peak_bytes) {
    g_peak_bytes = g_current_bytes;
}
MemoryScope::~MemoryScope() { g_peak_bytes = std::max(entry_peak_, g_peak_bytes); }
std::size_t MemoryScope::peak_delta_bytes() const {
    return g_peak_bytes > baseline_ ? g_peak_bytes - baseline_ : 0;
}

void Matrix::allocate(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    if (rows_ * cols_ > 0) {
        data_ = new double[rows_ * cols_];
        AllocationMeter::note_alloc(rows_ * cols_ * sizeof(double));
    }
}

void Matrix::release() {
    if (data_ != nullptr) {
        AllocationMeter::note_free(rows_ * cols_ * sizeof(double));
        delete[] data_;
        data_ = nullptr;
    }
    rows_ = cols_ = 0;
}

Matrix::Matrix(std::size_t rows, std::size_t cols) {
    allocate(rows, cols);
    std::fill(data_, data_ + size(), 0.0);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) {
    allocate(rows, cols);
    std::fill(data_, data_ + size(), fill);
}

Matrix::Matrix(const Matrix& other) {
    allocate(other.rows_, other.cols_);
    std::memcpy(data_, other.data_, size() * sizeof(double));
}

Matrix::Matrix(Matrix&& other) noexcept
    : rows_(other.rows_), cols_(other.cols_), data_(other.data_) {
    other.rows_ = other.cols_ = 0;
    other.data_ = nullptr;
}

Matrix& Matrix::operator=(const Matrix& other) {
    if (this != &other) {
        release();
        allocate(other.rows_, other.cols_);
        std::memcpy(data_, other.data_, size() * sizeof(double));
    }
    return *this;
}

Matrix& Matrix::operator=(Matrix&& other) noexcept {
    if (this != &other) {
        release();
        rows_ = other.rows_;
        cols_ = other.cols_;
        data_ = other.data_;
        other.rows_ = other.cols_ = 0;
        other.data_ = nullptr;
    }
    return *this;
}

Matrix::~Matrix() { release(); }

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r > 0 ? rows.begin()->size() : 0;
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("from_rows: ragged initializer");
        std::size_t j = 0;
        for (const double v : row) m.at(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix Matrix::column(const std::vector<double>& v) {
    Matrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.data());
    return m;
}

Matrix Matrix::row(const std::vector<double>& v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data());
    return m;
}

bool Matrix::all_finite() const {
    for (std::size_t i = 0; i < size(); ++i) {
        if (!std::isfinite(data_[i])) return false;
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                             std::to_string(b.rows()));
    }
    Matrix out(a.rows(), b.cols());
    map(out).noalias() = map(a) * map(b);
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out(a.rows(), a.cols());
    map(out) = map(a).cwiseProduct(map(b));
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out(a.rows(), a.cols());
    map(out) = map(a) + map(b);
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out(a.rows(), a.cols());
    map(out) = map(a) - map(b);
    return out;
}

Matrix scale(const Matrix& a, double c) {
    Matrix out(a.rows(), a.cols());
    map(out) = map(a) * c;
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    map(out) = map(a).transpose();
    return out;
}

Matrix row_sum(const Matrix& a) {
    Matrix out(a.rows(), 1);
    map(out) = map(a).rowwise().sum();
    return out;
}

Matrix col_sum(const Matrix& a) {
    Matrix out(1, a.cols());
    map(out) = map(a).colwise().sum();
    return out;
}

double sum_all(const Matrix& a) { return map(a).sum(); }

double mean_all(const Matrix& a) {
    if (a.size() == 0) throw DimensionError("mean-all of empty matrix");
    return map(a).sum() / static_cast<double>(a.size());
}

double dot_all(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "dot_all");
    return map(a).cwiseProduct(map(b)).sum();
}

double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : map(a).cwiseAbs().maxCoeff(); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    if (a.size() == 0) return 0.0;
    return (map(a) - map(b)).cwiseAbs().maxCoeff();
}

}  // namespace disco
