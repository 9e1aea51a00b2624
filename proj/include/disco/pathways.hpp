#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disco/matrix.hpp"
#include "disco/rng.hpp"
#include "disco/scm_data.hpp"
#include "disco/trainer.hpp"

namespace disco {

// One endogenous variable of a finite-support SCM. Declaration order must be
// topological: parents appear earlier in the variable list.
struct ScmVariable {
    std::string name;
    std::vector<double> support;
    std::vector<std::string> parents;
    std::vector<double> exo_probs;  // independent exogenous distribution
    // mechanism table indexed by (parent value indices, exogenous index),
    // exogenous index fastest; entries are value indices into `support`
    std::vector<std::size_t> table;
};

class DiscreteSCM {
public:
    static DiscreteSCM from_variables(std::vector<ScmVariable> vars);
    static DiscreteSCM from_json(const std::string& text);
    std::string to_json() const;

    std::size_t n_vars() const { return vars_.size(); }
    const ScmVariable& var(std::size_t i) const { return vars_[i]; }
    std::size_t index_of(const std::string& name) const;

    // number of joint exogenous states (product over variables)
    std::size_t exo_state_count() const;

    // value indices of all variables for one exogenous state; interventions
    // maps variable index -> clamped value index (-1 = none)
    void evaluate(const std::vector<std::size_t>& exo_state,
                  const std::vector<int>& interventions,
                  std::vector<std::size_t>& out) const;

    // walks all exogenous states in mixed-radix order, calling
    // fn(exo_state, probability)
    template <typename Fn>
    void for_each_exo_state(Fn&& fn) const {
        std::vector<std::size_t> state(vars_.size(), 0);
        const std::size_t total = exo_state_count();
        for (std::size_t s = 0; s < total; ++s) {
            double p = 1.0;
            for (std::size_t v = 0; v < vars_.size(); ++v) p *= vars_[v].exo_probs[state[v]];
            fn(static_cast<const std::vector<std::size_t>&>(state), p);
            for (std::size_t v = vars_.size(); v-- > 0;) {
                if (++state[v] < vars_[v].exo_probs.size()) break;
                state[v] = 0;
            }
        }
    }

private:
    std::vector<ScmVariable> vars_;
};

// Conditional table P(yhat | input variable); rows sum to 1.
struct PredictorTable {
    std::string input;
    std::vector<double> output_support;
    Matrix rows;  // |support(input)| x |output_support|

    static PredictorTable deterministic(const std::string& input,
                                        const std::vector<double>& output_support,
                                        const std::vector<std::size_t>& mapping);
    static PredictorTable constant(const std::string& input, std::size_t input_values,
                                   const std::vector<double>& output_support,
                                   std::size_t value_index);
};

// Which variables play the SAM roles.
struct SamRoles {
    std::string y;
    std::vector<std::string> w;
    std::vector<std::string> z;
    std::string x;
};

struct JointDistribution {
    std::vector<std::string> names;
    std::vector<std::size_t> sizes;
    std::vector<double> probs;  // mixed radix, last variable fastest

    double total() const;
    std::size_t flat_index(const std::vector<std::size_t>& assignment) const;
};

// Exact joint over all endogenous variables; capacity error above 1e7 states.
JointDistribution enumerate_joint(const DiscreteSCM& scm);

// TV_{y0,y1}(yhat) = P(yhat | y1) - P(yhat | y0) on the joint extended by the
// predictor table.
double tv(const DiscreteSCM& scm, const PredictorTable& pred, const SamRoles& roles,
          double y0, double y1, double yhat);

struct CtfEffects {
    double stable = 0.0;
    double ie = 0.0;
    double se = 0.0;
};

// Nested counterfactual effects conditioned on the realization
// {Y = y_cond, W = w_vals, Z = z_vals}, by exact exogenous enumeration.
CtfEffects ctf_effects(const DiscreteSCM& scm, const PredictorTable& pred,
                       const SamRoles& roles, double y0, double y1, double yhat,
                       double y_cond, const std::vector<double>& w_vals,
                       const std::vector<double>& z_vals);

// | TV - ( sum_{w,z} P(w,z|y0) [stable - ie] - se ) |
double verify_decomposition(const DiscreteSCM& scm, const PredictorTable& pred,
                            const SamRoles& roles, double y0, double y1, double yhat);
// Alternative reading conditioning the cell weights on y1 (diagnostic only).
double verify_decomposition_y1(const DiscreteSCM& scm, const PredictorTable& pred,
                               const SamRoles& roles, double y0, double y1, double yhat);

struct StabilityCertificate {
    bool is_ci = false;     // Yhat independent of (W, Z) given Y, exactly
    double ci_residual = 0.0;
    double max_ie = 0.0;
    double max_se = 0.0;
    double de_spread = 0.0;  // max variation of the stable effect across (w,z)
};

StabilityCertificate stability_certificate(const DiscreteSCM& scm, const PredictorTable& pred,
                                           const SamRoles& roles);

// Theorem check at tiny scale: among conditionally independent deterministic
// predictor tables, the likelihood maximizer attains the maximal stable
// effect (ties permitted). Binary target only.
bool mle_stable_maximizer_check(const DiscreteSCM& scm, const SamRoles& roles);

struct PathwayEntry {
    double y0 = 0.0, y1 = 0.0, yhat = 0.0;
    double tv = 0.0;
    double ctf_stable = 0.0;  // aggregated over (w,z) with P(w,z|y0) weights
    double ctf_ie = 0.0;
    double ctf_se = 0.0;
    double decomposition_residual = 0.0;
};

struct PathwayReport {
    std::vector<PathwayEntry> entries;
    StabilityCertificate certificate;
};

PathwayReport pathway_report(const DiscreteSCM& scm, const PredictorTable& pred,
                             const SamRoles& roles);
std::string pathway_report_to_json(const PathwayReport& report);

// Randomized SAM instances for theorem sweeps: Z -> Y -> W, X <- {Z, Y, W},
// binary exogenous variables, mechanism tables drawn uniformly.
struct RandomSamOptions {
    std::size_t z_values = 2;
    std::size_t y_values = 2;
    std::size_t w_values = 2;
    std::size_t x_values = 2;
    std::size_t exo_values = 2;
    bool x_reads_only_y = false;  // mechanism X := f(Y, U_X), for CI instances
};
DiscreteSCM random_sam(SplitRng& rng, const RandomSamOptions& opts);
SamRoles sam_roles();
PredictorTable random_predictor(SplitRng& rng, const DiscreteSCM& scm, const SamRoles& roles,
                                bool deterministic);

// ---- Monte Carlo counterfactual analysis of trained models -------------------

// Mean prediction shift under uniform interventions on `variable` with the
// exogenous noise held fixed. Classification: total-variation gap of class
// probabilities; regression: |yhat - yhat_x|.
double sensitivity(const Predictor& model, const DatasetSpec& family,
                   const std::string& variable, std::size_t n_units,
                   std::size_t n_interventions, std::uint64_t seed);

// Interventions clamped at each unit's factual value; exactly 0 by
// counterfactual consistency.
double sensitivity_factual(const Predictor& model, const DatasetSpec& family,
                           const std::string& variable, std::size_t n_units,
                           std::uint64_t seed);

// Acc_ctf: agreement of the predicted label with the intervened target on
// counterfactual inputs.
double ctf_accuracy(const Predictor& model, const DatasetSpec& family, std::size_t n_units,
                    std::size_t n_interventions, std::uint64_t seed);

// Counterfactual R^2 for regression families.
double ctf_r2(const Predictor& model, const DatasetSpec& family, std::size_t n_units,
              std::size_t n_interventions, std::uint64_t seed);

}  // namespace disco
