#include "disco/conditional.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace disco {
namespace {

double clamped_ratio(double vxy, double vxx, double vyy) {
    if (vxx < 0.0) vxx = 0.0;
    if (vyy < 0.0) vyy = 0.0;
    const double den = std::sqrt(vxx * vyy);
    if (den == 0.0) return 0.0;  // 0/0 := 0
    double r = vxy / den;
    if (r < 0.0) r = 0.0;
    if (r > 1.0) r = 1.0;
    return r;
}

void require_conforming(const DistanceMatrix& a, const DistanceMatrix& b,
                        const WeightMatrix& w) {
    if (a.n() != b.n() || a.n() != w.n()) {
        throw DimensionError("conditional estimator: A, B, W sizes differ");
    }
}

}  // namespace

WeightMatrix rbf_weights(const PointSet& z, double bandwidth) {
    if (!(bandwidth > 0.0)) throw ConfigError("rbf_weights: bandwidth must be positive");
    const std::size_t n = z.n();
    const std::size_t d = z.dim();
    Matrix w(n, n);
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = z.coords.at(i, k) - z.coords.at(j, k);
                s += diff * diff;
            }
            const double v = std::exp(-s * inv);
            w.at(i, j) = v;
            norm += v;
        }
        for (std::size_t j = 0; j < n; ++j) w.at(i, j) /= norm;
    }
    return WeightMatrix{std::move(w), bandwidth};
}

double median_heuristic(const PointSet& z) {
    const std::size_t n = z.n();
    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < z.dim(); ++k) {
                const double diff = z.coords.at(i, k) - z.coords.at(j, k);
                s += diff * diff;
            }
            if (s > 0.0) dists.push_back(std::sqrt(s));
        }
    }
    if (dists.empty()) return 1.0;
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid),
                     dists.end());
    return dists[mid];
}

WeightMatrix uniform_weights(std::size_t n) {
    return WeightMatrix{Matrix(n, n, 1.0 / static_cast<double>(n)), 0.0};
}

Matrix local_center_naive(const Matrix& a, const std::vector<double>& w) {
    const std::size_t n = a.rows();
    if (w.size() != n || a.cols() != n) {
        throw DimensionError("local_center_naive: weight length mismatch");
    }
    double wsum = 0.0;
    for (const double v : w) wsum += v;
    if (std::abs(wsum - 1.0) > 1e-9) {
        throw ContractError("local_center_naive: weights must sum to 1");
    }
    std::vector<double> colmean(n, 0.0);  // sum_k w_k a_kl
    std::vector<double> rowmean(n, 0.0);  // sum_l w_l a_kl
    double grand = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
            const double v = a.at(k, l);
            colmean[l] += w[k] * v;
            rowmean[k] += w[l] * v;
        }
        grand += w[k] * rowmean[k];
    }
    Matrix out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
            out.at(k, l) = a.at(k, l) - colmean[l] - rowmean[k] + grand;
        }
    }
    return out;
}

double local_dcov_naive(const Matrix& a, const Matrix& b, const std::vector<double>& w) {
    if (!a.same_shape(b)) throw DimensionError("local_dcov_naive: shape mismatch");
    const Matrix ca = local_center_naive(a, w);
    const Matrix cb = local_center_naive(b, w);
    const std::size_t n = a.rows();
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double inner = 0.0;
        for (std::size_t l = 0; l < n; ++l) inner += w[l] * ca.at(k, l) * cb.at(k, l);
        acc += w[k] * inner;
    }
    return acc;
}

namespace {

// v = rowsum(W o (W(P o Q))) + gP o gQ - 2 rowsum(W o MP o MQ), with the
// local row-mean matrices MP = W P and MQ = W Q supplied by the caller.
std::vector<double> local_cov_vector(const Matrix& w, const Matrix& p, const Matrix& q,
                                     const Matrix& mp, const Matrix& mq) {
    const std::size_t n = w.rows();
    const Matrix t1m = matmul(w, hadamard(p, q));
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double t1 = 0.0, gp = 0.0, gq = 0.0, t3 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double wij = w.at(i, j);
            t1 += wij * t1m.at(i, j);
            gp += wij * mp.at(i, j);
            gq += wij * mq.at(i, j);
            t3 += wij * (mp.at(i, j) * mq.at(i, j));
        }
        out[i] = t1 + gp * gq - 2.0 * t3;
    }
    return out;
}

}  // namespace

LocalStatistics sdisco_components(const DistanceMatrix& a, const DistanceMatrix& b,
                                  const WeightMatrix& w) {
    require_conforming(a, b, w);
    const Matrix mx = matmul(w.values, a.values);
    const Matrix my = matmul(w.values, b.values);
    LocalStatistics stats;
    stats.v_xy = local_cov_vector(w.values, a.values, b.values, mx, my);
    stats.v_xx = local_cov_vector(w.values, a.values, a.values, mx, mx);
    stats.v_yy = local_cov_vector(w.values, b.values, b.values, my, my);
    for (double& v : stats.v_xx) v = std::max(v, 0.0);
    for (double& v : stats.v_yy) v = std::max(v, 0.0);
    return stats;
}

double sdisco(const DistanceMatrix& a, const DistanceMatrix& b, const WeightMatrix& w) {
    const LocalStatistics s = sdisco_components(a, b, w);
    const std::size_t n = s.v_xy.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += clamped_ratio(s.v_xy[i], s.v_xx[i], s.v_yy[i]);
    }
    return acc / static_cast<double>(n);
}

double disco_m(const DistanceMatrix& a, const DistanceMatrix& b, const WeightMatrix& w,
               std::size_t m, std::uint64_t seed) {
    require_conforming(a, b, w);
    const std::size_t n = a.n();
    if (m < 1 || m > n) {
        throw ConfigError("disco_m: m must be in [1, n], got " + std::to_string(m));
    }
    SplitRng rng(seed);
    const std::vector<std::size_t> rows = rng.sample_without_replacement(n, m);
    std::vector<double> wrow(n);
    double acc = 0.0;
    for (const std::size_t i : rows) {
        for (std::size_t j = 0; j < n; ++j) wrow[j] = w.values.at(i, j);
        const double vxy = local_dcov_naive(a.values, b.values, wrow);
        const double vxx = local_dcov_naive(a.values, a.values, wrow);
        const double vyy = local_dcov_naive(b.values, b.values, wrow);
        acc += clamped_ratio(vxy, vxx, vyy);
    }
    return acc / static_cast<double>(m);
}

std::size_t default_m(std::size_t n) {
    return static_cast<std::size_t>(std::ceil(0.20 * static_cast<double>(n)));
}

namespace {

Var local_cov_node(Tape& t, Var w, Var p, Var q, Var mp, Var mq) {
    Var t1 = row_sum(hadamard(w, matmul(w, hadamard(p, q))));
    Var gp = row_sum(hadamard(w, mp));
    Var gq = row_sum(hadamard(w, mq));
    Var t3 = row_sum(hadamard(hadamard(w, mp), mq));
    return sub(add(t1, hadamard(gp, gq)), scale(t3, 2.0));
}

}  // namespace

Var sdisco_node(Tape& t, Var a, Var b, Var w) {
    Var mx = matmul(w, a);
    Var my = matmul(w, b);
    Var vxy = local_cov_node(t, w, a, b, mx, my);
    Var vxx = clamp_nonneg(local_cov_node(t, w, a, a, mx, mx));
    Var vyy = clamp_nonneg(local_cov_node(t, w, b, b, my, my));
    Var den = sqrt_clamped(hadamard(vxx, vyy));
    return mean_all(div_safe(vxy, den));
}

Var disco_m_node(Tape& t, Var a, const Matrix& b, const Matrix& w, std::size_t m,
                 std::uint64_t seed) {
    const std::size_t n = t.value(a).rows();
    if (b.rows() != n || w.rows() != n) throw DimensionError("disco_m_node: size mismatch");
    if (m < 1 || m > n) throw ConfigError("disco_m_node: m out of range");
    SplitRng rng(seed);
    const std::vector<std::size_t> rows = rng.sample_without_replacement(n, m);

    Var ones_col = t.constant(Matrix(n, 1, 1.0));
    Var ones_row = t.constant(Matrix(1, n, 1.0));
    std::vector<double> wrow(n);
    Var acc = t.scalar_constant(0.0);
    for (const std::size_t i : rows) {
        for (std::size_t j = 0; j < n; ++j) wrow[j] = w.at(i, j);
        Var wr = t.constant(Matrix::row(wrow));
        Var wc = t.constant(Matrix::column(wrow));
        // centered A: A - 1 (wA) - (Aw) 1^T + (w A w) 1 1^T
        Var wa = matmul(wr, a);                       // 1 x n
        Var aw = matmul(a, wc);                       // n x 1
        Var g = matmul(wa, wc);                       // 1 x 1
        Var ca = sub(sub(a, matmul(ones_col, wa)), matmul(aw, ones_row));
        ca = add(ca, scalar_mul(g, matmul(ones_col, ones_row)));
        Var cb = t.constant(local_center_naive(b, wrow));
        Var vxy = matmul(wr, matmul(hadamard(ca, cb), wc));
        Var vxx = clamp_nonneg(matmul(wr, matmul(hadamard(ca, ca), wc)));
        const double vyy_val = std::max(local_dcov_naive(b, b, wrow), 0.0);
        Var vyy = t.scalar_constant(vyy_val);
        Var den = sqrt_clamped(hadamard(vxx, vyy));
        acc = add(acc, div_safe(vxy, den));
    }
    return scale(acc, 1.0 / static_cast<double>(m));
}

Matrix standardize_columns(const Matrix& m) {
    const std::size_t n = m.rows();
    const std::size_t c = m.cols();
    Matrix out(n, c);
    for (std::size_t j = 0; j < c; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += m.at(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = m.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
        for (std::size_t i = 0; i < n; ++i) out.at(i, j) = (m.at(i, j) - mean) / sd;
    }
    return out;
}

Var penalty_node(Tape& t, Var predictions, const Matrix& bias, const Matrix& condition,
                 const PenaltyOptions& opts) {
    const std::size_t n = t.value(predictions).rows();
    if (n < 4) throw ContractError("penalty: estimator undefined for fewer than 4 samples");
    if (bias.rows() != n || condition.rows() != n) {
        throw DimensionError("penalty: batch size mismatch across inputs");
    }
    const PointSet bias_pts{standardize_columns(bias)};
    const Matrix b = pairwise_distance(bias_pts).values;
    const PointSet cond_pts{condition};
    const double h = opts.bandwidth > 0.0 ? opts.bandwidth : median_heuristic(cond_pts);
    const WeightMatrix w = rbf_weights(cond_pts, h);

    Var a = pairwise_dist(predictions);
    if (opts.estimator == Estimator::disco_m) {
        const std::size_t m = std::max<std::size_t>(
            1, static_cast<std::size_t>(
                   std::ceil(opts.m_fraction * static_cast<double>(n))));
        return disco_m_node(t, a, b, w.values, std::min(m, n), opts.seed);
    }
    return sdisco_node(t, a, t.constant(b), t.constant(w.values));
}

PenaltyResult penalty(const PointSet& predictions, const PointSet& bias,
                      const PointSet& condition, const PenaltyOptions& opts) {
    Tape tape;
    Var p = tape.leaf(predictions.coords);
    Var root = penalty_node(tape, p, bias.coords, condition.coords, opts);
    tape.backward(root);
    return PenaltyResult{tape.value(root).at(0, 0), tape.gradient(p)};
}

}  // namespace disco
