#pragma once

#include "disco/matrix.hpp"
#include "disco/rng.hpp"

namespace disco {

// Points are rows; columns are coordinates.
struct PointSet {
    Matrix coords;
    std::size_t n() const { return coords.rows(); }
    std::size_t dim() const { return coords.cols(); }
};

// Symmetric, zero-diagonal, nonnegative pairwise Euclidean distances.
struct DistanceMatrix {
    Matrix values;
    std::size_t n() const { return values.rows(); }

    // Checks symmetry (1e-12), zero diagonal, nonnegativity, and the
    // triangle inequality on randomly sampled triples (1e-9).
    bool validate(SplitRng& rng, std::size_t sampled_triples = 64) const;
};

DistanceMatrix pairwise_distance(const PointSet& p);

// A_kl - rowmean_k - colmean_l + grandmean; rows and columns of the result
// sum to zero.
Matrix double_center(const DistanceMatrix& d);

// V-statistic (1/n^2) sum of the entrywise product of double-centered
// matrices.
double dcov2(const DistanceMatrix& a, const DistanceMatrix& b);

// dcov2(A,B) / sqrt(dcov2(A,A) dcov2(B,B)) with 0/0 := 0, clamped to [0,1].
double dcor2(const DistanceMatrix& a, const DistanceMatrix& b);

}  // namespace disco
