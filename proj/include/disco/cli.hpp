#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace disco {

// Command implementations shared by the binary and the tests. Each throws
// the library error types; exit_code_for maps them at the process boundary.
int exit_code_for_current_exception();

struct GenOutput {
    std::string dataset_path;
    std::string csv_path;
    std::size_t n_generated = 0;
    std::size_t n_retained = 0;
    std::string positivity;
};
GenOutput cmd_gen(const std::string& config_path);

struct TrainRunSummary {
    double lambda = 0.0;
    double bandwidth = 0.0;  // 0 = median heuristic
    std::size_t best_epoch = 0;
    double best_val = 0.0;
    std::string checkpoint_path;
    std::string metrics_path;
};
struct TrainOutput {
    std::vector<TrainRunSummary> runs;
    std::size_t best_run = 0;
    std::string summary_path;
};
TrainOutput cmd_train(const std::string& config_path);

struct AnalyzeOutput {
    std::string report_path;
};
AnalyzeOutput cmd_analyze(const std::string& config_path, const std::string& checkpoint_override);

struct BenchOutput {
    std::string csv_path;
    double allocation_exponent = 0.0;
    bool checksums_match = false;
};
BenchOutput cmd_bench(const std::vector<std::size_t>& sizes, std::size_t reps,
                      const std::string& out_csv, std::uint64_t seed);

// Full argv entry point (CLI11 parsing + error-to-exit-code mapping).
int run_cli(int argc, char** argv);

}  // namespace disco
