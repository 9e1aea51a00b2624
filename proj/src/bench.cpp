#include "disco/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

namespace disco {
namespace {

double clamped_ratio(double vxy, double vxx, double vyy) {
    if (vxx < 0.0) vxx = 0.0;
    if (vyy < 0.0) vyy = 0.0;
    const double den = std::sqrt(vxx * vyy);
    if (den == 0.0) return 0.0;
    double r = vxy / den;
    if (r < 0.0) r = 0.0;
    if (r > 1.0) r = 1.0;
    return r;
}

}  // namespace

std::vector<double> naive_full_reference_ratios(const DistanceMatrix& a,
                                                const DistanceMatrix& b,
                                                const WeightMatrix& w) {
    const std::size_t n = a.n();
    if (b.n() != n || w.n() != n) throw DimensionError("naive bench: size mismatch");
    std::vector<double> ratios(n);
    std::vector<double> wrow(n), ma(n), mb(n);
    const Matrix& A = a.values;
    const Matrix& B = b.values;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) wrow[j] = w.values.at(i, j);
        // weighted marginal means (rows equal columns: A and B symmetric)
        double ga = 0.0, gb = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double sa = 0.0, sb = 0.0;
            const double* arow = A.data() + k * n;
            const double* brow = B.data() + k * n;
            for (std::size_t l = 0; l < n; ++l) {
                sa += wrow[l] * arow[l];
                sb += wrow[l] * brow[l];
            }
            ma[k] = sa;
            mb[k] = sb;
            ga += wrow[k] * sa;
            gb += wrow[k] * sb;
        }
        double vxy = 0.0, vxx = 0.0, vyy = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double* arow = A.data() + k * n;
            const double* brow = B.data() + k * n;
            const double wk = wrow[k];
            double axy = 0.0, axx = 0.0, ayy = 0.0;
            for (std::size_t l = 0; l < n; ++l) {
                const double ca = arow[l] - ma[k] - ma[l] + ga;
                const double cb = brow[l] - mb[k] - mb[l] + gb;
                const double wl = wrow[l];
                axy += wl * (ca * cb);
                axx += wl * (ca * ca);
                ayy += wl * (cb * cb);
            }
            vxy += wk * axy;
            vxx += wk * axx;
            vyy += wk * ayy;
        }
        ratios[i] = clamped_ratio(vxy, vxx, vyy);
    }
    return ratios;
}

std::vector<double> sdisco_ratios(const DistanceMatrix& a, const DistanceMatrix& b,
                                  const WeightMatrix& w) {
    const LocalStatistics s = sdisco_components(a, b, w);
    std::vector<double> ratios(s.v_xy.size());
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        ratios[i] = clamped_ratio(s.v_xy[i], s.v_xx[i], s.v_yy[i]);
    }
    return ratios;
}

std::uint64_t ratios_checksum(const std::vector<double>& ratios) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const double r : ratios) {
        const std::int64_t q = std::llround(r / 1e-9);
        const auto* bytes = reinterpret_cast<const unsigned char*>(&q);
        for (std::size_t i = 0; i < sizeof(q); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::vector<BenchRecord> run_bench(const std::vector<std::size_t>& sizes, std::size_t reps,
                                   std::uint64_t seed) {
    if (reps < 1) throw ConfigError("bench: reps must be at least 1");
    std::vector<BenchRecord> records;
    for (const std::size_t n : sizes) {
        SplitRng rng = SplitRng(seed).split("bench_n" + std::to_string(n));
        Matrix xm(n, 2), ym(n, 1), zm(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            xm.at(i, 0) = rng.normal();
            xm.at(i, 1) = rng.normal();
            ym.at(i, 0) = rng.normal();
            zm.at(i, 0) = rng.normal();
        }
        const DistanceMatrix a = pairwise_distance(PointSet{xm});
        const DistanceMatrix b = pairwise_distance(PointSet{ym});
        const PointSet z{zm};
        const WeightMatrix w = rbf_weights(z, median_heuristic(z));

        auto timed = [&](auto&& fn, const char* name) {
            BenchRecord rec;
            rec.estimator = name;
            rec.n = n;
            std::vector<double> ratios;
            std::size_t peak_bytes = 0;
            double total = 0.0;
            for (std::size_t r = 0; r < reps; ++r) {
                MemoryScope scope;
                const auto t0 = std::chrono::steady_clock::now();
                ratios = fn();
                const auto t1 = std::chrono::steady_clock::now();
                total += std::chrono::duration<double>(t1 - t0).count();
                peak_bytes = std::max(peak_bytes, scope.peak_delta_bytes());
            }
            rec.wall_seconds = total / static_cast<double>(reps);
            rec.peak_aux_floats = peak_bytes / sizeof(double);
            rec.checksum = ratios_checksum(ratios);
            return rec;
        };
        records.push_back(timed([&] { return naive_full_reference_ratios(a, b, w); }, "naive"));
        records.push_back(timed([&] { return sdisco_ratios(a, b, w); }, "sdisco"));
    }
    return records;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRecord>& records) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "estimator,n,wall_seconds,peak_aux_floats,checksum\n";
    for (const BenchRecord& r : records) {
        os << r.estimator << "," << r.n << "," << r.wall_seconds << "," << r.peak_aux_floats
           << "," << r.checksum << "\n";
    }
    if (!os) throw IoError("write failed: " + path);
}

double fitted_allocation_exponent(const std::vector<BenchRecord>& records) {
    std::map<std::size_t, double> by_n;
    for (const BenchRecord& r : records) {
        if (r.estimator == "sdisco") by_n[r.n] = static_cast<double>(r.peak_aux_floats);
    }
    if (by_n.size() < 2) throw InputError("allocation fit needs at least two sizes");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(by_n.size());
    for (const auto& [n, floats] : by_n) {
        const double x = std::log(static_cast<double>(n));
        const double y = std::log(floats);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace disco
