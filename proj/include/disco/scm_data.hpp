#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "disco/matrix.hpp"
#include "disco/rng.hpp"

namespace disco {

enum class Family { blob, dsprites, yaleb_like, fairface_like, waterbirds_discrete };
enum class BiasMode { biased, unbiased };
enum class Task { regression, classification };

Family family_from_string(const std::string& s);
std::string family_to_string(Family f);

struct DatasetSpec {
    Family family = Family::blob;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double label_noise = 0.0;
    BiasMode bias_mode = BiasMode::biased;
    std::size_t resolution = 0;   // 0 -> family default (blob 32, dsprites 64)
    double feature_noise = 0.1;   // embedding noise for the tabular families
    bool multibias = false;       // dsprites scale-classification scenario
    bool render = true;           // false skips features (SCM-level statistics)
};

// One generated unit. Re-running the mechanisms on `exogenous` reproduces
// `endogenous` and `features` bit-exactly; names follow a fixed per-family
// order.
struct Unit {
    std::vector<std::pair<std::string, double>> exogenous;
    std::vector<std::pair<std::string, double>> endogenous;
    std::vector<double> features;

    double exo(const std::string& name) const;
    double endo(const std::string& name) const;
    bool operator==(const Unit& other) const;
};

struct Dataset {
    DatasetSpec spec;
    Task task = Task::regression;
    std::size_t n_classes = 0;  // classification only
    std::string target_name;
    std::vector<std::string> bias_names;
    std::vector<Unit> units;
    std::vector<double> targets;  // observed targets (after any label noise)

    std::size_t n() const { return units.size(); }
    std::size_t feature_dim() const { return units.empty() ? 0 : units[0].features.size(); }
    Matrix features() const;
    Matrix target_column() const;
    Matrix bias_columns() const;
};

// ---- generators ------------------------------------------------------------

Dataset blob_sample(const DatasetSpec& spec);
Dataset dsprites_sample(const DatasetSpec& spec);
Dataset yaleb_like_sample(const DatasetSpec& spec);
Dataset fairface_like_sample(const DatasetSpec& spec);
Dataset waterbirds_discrete(std::size_t n, std::uint64_t seed,
                            BiasMode mode = BiasMode::biased, double feature_noise = 0.1);

// Dispatch on spec.family.
Dataset generate(const DatasetSpec& spec);

enum class SelectionRule { yaleb_like, fairface_like };

// Independent Bernoulli retention per unit; returns the retained indices in
// order. yaleb_like keeps pose == QuantilePartition(s, 3) with probability
// 1.0 (0.05 otherwise); fairface_like keeps aligned Y == B with 0.9 (0.1).
std::vector<std::size_t> selection_bias_filter(const std::vector<Unit>& units,
                                               SelectionRule rule, std::uint64_t seed);

// Re-executes the family mechanisms with `interventions` clamped and all
// exogenous draws reused. Intervening at the factual value is an identity.
Unit counterfactual(const DatasetSpec& spec, const Unit& unit,
                    const std::vector<std::pair<std::string, double>>& interventions);

// Endogenous variables accepted by counterfactual() for this family, with
// the uniform-intervention support used by the sensitivity analyses.
struct InterventionSupport {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
};
std::vector<InterventionSupport> intervenable_variables(const DatasetSpec& spec);

// Classification: flips to a uniformly chosen different class with
// probability rate. Regression: adds N(0, (rate * sd(targets))^2).
void apply_label_noise(Dataset& ds, double rate, std::uint64_t seed);

// ---- diagnostics and I/O ----------------------------------------------------

struct PositivityReport {
    std::size_t y_bins = 0;
    std::size_t b_bins = 0;
    double min_conditional = 0.0;  // min over (y-bin, b-bin) of P(b | y)
    bool positive = false;
    std::string format() const;
};

// Empirical overlap check P(b-bin | y-bin) > 0 on the first bias column.
PositivityReport positivity_diagnostic(const Dataset& ds, std::size_t bins = 2);

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);
void export_csv(const std::string& path, const Dataset& ds);

}  // namespace disco
