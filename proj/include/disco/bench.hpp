#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disco/conditional.hpp"

namespace disco {

struct BenchRecord {
    std::string estimator;  // "naive" or "sdisco"
    std::size_t n = 0;
    double wall_seconds = 0.0;
    std::size_t peak_aux_floats = 0;
    std::uint64_t checksum = 0;  // over the 1e-9-rounded local ratios
};

// Full-reference naive evaluation (Method 1 at every reference point):
// per-row locally centered statistics, no factorization.
std::vector<double> naive_full_reference_ratios(const DistanceMatrix& a,
                                                const DistanceMatrix& b,
                                                const WeightMatrix& w);

// Local ratios from the single-shot factorization.
std::vector<double> sdisco_ratios(const DistanceMatrix& a, const DistanceMatrix& b,
                                  const WeightMatrix& w);

std::uint64_t ratios_checksum(const std::vector<double>& ratios);

// For each n: identical random inputs, both estimators, time/allocation/
// checksum per estimator, means over `reps` repetitions.
std::vector<BenchRecord> run_bench(const std::vector<std::size_t>& sizes, std::size_t reps,
                                   std::uint64_t seed);

void write_bench_csv(const std::string& path, const std::vector<BenchRecord>& records);

// Least-squares slope of log(peak floats) against log(n) over the sdisco
// records.
double fitted_allocation_exponent(const std::vector<BenchRecord>& records);

}  // namespace disco
