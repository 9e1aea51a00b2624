#pragma once

#include <cstdint>
#include <vector>

#include "disco/distance.hpp"
#include "disco/tape.hpp"

namespace disco {

// Row-stochastic kernel weights over the conditioning variable. Acts as a
// local empirical conditional measure; always a gradient constant.
struct WeightMatrix {
    Matrix values;
    double bandwidth = 0.0;
    std::size_t n() const { return values.rows(); }
};

// Per-reference-point localized squared distance covariances.
struct LocalStatistics {
    std::vector<double> v_xy;
    std::vector<double> v_xx;
    std::vector<double> v_yy;
};

// w_ij = exp(-|z_i - z_j|^2 / (2 h^2)) row-normalized.
WeightMatrix rbf_weights(const PointSet& z, double bandwidth);

// Median of nonzero pairwise distances; 1.0 when all points coincide.
double median_heuristic(const PointSet& z);

WeightMatrix uniform_weights(std::size_t n);

// Locally centered matrix for one reference weight row (Method 1).
Matrix local_center_naive(const Matrix& a, const std::vector<double>& w);

// Weighted inner product of locally centered matrices; the ground-truth
// oracle the single-shot factorization is checked against.
double local_dcov_naive(const Matrix& a, const Matrix& b, const std::vector<double>& w);

// All n local covariances at once via T1 + T2 - 2*T3; memory stays at a
// constant number of n x n matrices.
LocalStatistics sdisco_components(const DistanceMatrix& a, const DistanceMatrix& b,
                                  const WeightMatrix& w);

// Mean over reference points of v_xy / sqrt(v_xx v_yy), 0/0 := 0.
double sdisco(const DistanceMatrix& a, const DistanceMatrix& b, const WeightMatrix& w);

// Mean of the local ratio at m seeded, uniformly-without-replacement sampled
// reference rows, each evaluated on the naive path.
double disco_m(const DistanceMatrix& a, const DistanceMatrix& b, const WeightMatrix& w,
               std::size_t m, std::uint64_t seed);

// ceil(0.20 * n)
std::size_t default_m(std::size_t n);

enum class Estimator { sdisco, disco_m, none };

// Differentiable graph builders. A may require gradients; B and W enter as
// given (wrap them in Tape::constant for the usual case).
Var sdisco_node(Tape& t, Var a, Var b, Var w);
Var disco_m_node(Tape& t, Var a, const Matrix& b, const Matrix& w, std::size_t m,
                 std::uint64_t seed);

// Each column shifted to zero mean and scaled to unit variance (constant
// columns are left centered only).
Matrix standardize_columns(const Matrix& m);

struct PenaltyOptions {
    double bandwidth = 0.0;  // <= 0 selects the median heuristic
    Estimator estimator = Estimator::sdisco;
    double m_fraction = 0.20;
    std::uint64_t seed = 0;  // used by disco_m row sampling
};

// Builds A from predictions (differentiable), B from per-column standardized
// bias attributes, W from the conditioning points; returns the estimator
// value node. Gradients flow only into predictions.
Var penalty_node(Tape& t, Var predictions, const Matrix& bias, const Matrix& condition,
                 const PenaltyOptions& opts);

struct PenaltyResult {
    double value = 0.0;
    Matrix grad_predictions;
};

// Standalone evaluation of the penalty and its gradient.
PenaltyResult penalty(const PointSet& predictions, const PointSet& bias,
                      const PointSet& condition, const PenaltyOptions& opts);

}  // namespace disco
