#include "disco/distance.hpp"

#include <cmath>

namespace disco {

DistanceMatrix pairwise_distance(const PointSet& p) {
    if (p.n() < 1) throw InputError("pairwise_distance: empty point set");
    if (!p.coords.all_finite()) throw InputError("pairwise_distance: non-finite coordinate");
    const std::size_t n = p.n();
    const std::size_t d = p.dim();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = p.coords.at(i, k) - p.coords.at(j, k);
                s += diff * diff;
            }
            const double dist = std::sqrt(s);
            out.at(i, j) = dist;
            out.at(j, i) = dist;
        }
    }
    return DistanceMatrix{std::move(out)};
}

bool DistanceMatrix::validate(SplitRng& rng, std::size_t sampled_triples) const {
    const std::size_t nn = n();
    if (values.cols() != nn) return false;
    for (std::size_t i = 0; i < nn; ++i) {
        if (values.at(i, i) != 0.0) return false;
        for (std::size_t j = 0; j < nn; ++j) {
            if (values.at(i, j) < 0.0) return false;
            if (std::abs(values.at(i, j) - values.at(j, i)) > 1e-12) return false;
        }
    }
    for (std::size_t t = 0; t < sampled_triples && nn >= 3; ++t) {
        const std::size_t i = rng.uniform_int(nn);
        const std::size_t j = rng.uniform_int(nn);
        const std::size_t k = rng.uniform_int(nn);
        if (values.at(i, j) > values.at(i, k) + values.at(k, j) + 1e-9) return false;
    }
    return true;
}

Matrix double_center(const DistanceMatrix& d) {
    const std::size_t n = d.n();
    const Matrix& a = d.values;
    std::vector<double> rowmean(n, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += a.at(i, j);
        rowmean[i] = s / static_cast<double>(n);
        grand += s;
    }
    grand /= static_cast<double>(n) * static_cast<double>(n);
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            // column means equal row means by symmetry
            out.at(i, j) = a.at(i, j) - rowmean[i] - rowmean[j] + grand;
        }
    }
    return out;
}

double dcov2(const DistanceMatrix& a, const DistanceMatrix& b) {
    if (a.n() != b.n()) throw DimensionError("dcov2: sample size mismatch");
    const Matrix ca = double_center(a);
    const Matrix cb = double_center(b);
    const double n = static_cast<double>(a.n());
    return dot_all(ca, cb) / (n * n);
}

double dcor2(const DistanceMatrix& a, const DistanceMatrix& b) {
    if (a.n() != b.n()) throw DimensionError("dcor2: sample size mismatch");
    double vxy = dcov2(a, b);
    double vxx = dcov2(a, a);
    double vyy = dcov2(b, b);
    if (vxx < 0.0) vxx = 0.0;  // -1e-12 rounding tolerance
    if (vyy < 0.0) vyy = 0.0;
    const double den = std::sqrt(vxx * vyy);
    if (den == 0.0) return 0.0;  // 0/0 := 0
    double r = vxy / den;
    if (r < 0.0) r = 0.0;
    if (r > 1.0) r = 1.0;
    return r;
}

}  // namespace disco
