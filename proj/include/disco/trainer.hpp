#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "disco/conditional.hpp"
#include "disco/scm_data.hpp"

namespace disco {

enum class Activation { relu, tanh };
enum class Head { linear, logits };
enum class Optimizer { sgd, adam };

// Hyperparameter search grids used by the training harness.
inline constexpr std::array<double, 6> kLambdaGrid{10.0, 5.0, 2.0, 1.0, 0.5, 0.1};
inline constexpr std::array<double, 6> kBandwidthGrid{1.0, 0.9, 0.5, 0.1, 0.01, 0.001};

struct Predictor {
    std::vector<std::size_t> layer_sizes;  // input, hidden..., output
    std::vector<Matrix> weights;           // sizes[i] x sizes[i+1]
    std::vector<Matrix> biases;            // 1 x sizes[i+1]
    Activation activation = Activation::relu;
    Head head = Head::linear;

    static Predictor init(const std::vector<std::size_t>& sizes, Activation act, Head head,
                          std::uint64_t seed);
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
};

struct TrainConfig {
    double lambda = 0.0;
    double bandwidth = 0.0;  // <= 0 selects the per-batch median heuristic
    Estimator estimator = Estimator::sdisco;
    double m_fraction = 0.20;
    std::size_t batch_size = 128;
    std::size_t epochs = 20;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    std::uint64_t seed = 0;
    // Penalize only these bias columns (empty = all observed bias attributes).
    std::vector<std::size_t> bias_columns;
};

struct Batch {
    Matrix features;       // n x d
    Matrix targets;        // n x 1
    Matrix bias;           // n x b
    std::vector<int> labels;  // classification only
};

// Raw model outputs (regression values or logits).
Matrix forward(const Predictor& p, const Matrix& features);
// Post-softmax class probabilities (logits head only).
Matrix class_probabilities(const Predictor& p, const Matrix& features);

// MSE for the linear head, softmax cross-entropy for the logits head.
double loss(const Matrix& predictions, const Matrix& targets, Head head);

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::size_t t = 0;
};

struct StepMetrics {
    double task_loss = 0.0;
    double penalty = 0.0;
};

// One optimizer update on grad of [L + lambda * penalty(Yhat, B | Y)].
StepMetrics train_step(Predictor& p, const Batch& batch, const TrainConfig& cfg,
                       AdamState& opt, std::uint64_t step_index);

struct EvalMetrics {
    double r2 = 0.0;
    double balanced_accuracy = 0.0;
    double worst_group_accuracy = 0.0;
    bool has_wga = false;
    double primary = 0.0;  // r2 (regression) or balanced accuracy (classification)
    std::vector<std::string> warnings;
};

EvalMetrics evaluate(const Predictor& p, const Dataset& ds);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double penalty = 0.0;
    double val_metric = 0.0;
};

struct TrainResult {
    Predictor best;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
    std::vector<EpochRecord> history;
};

// Mini-batch training with best-epoch selection on the validation metric.
TrainResult train(const Dataset& train_ds, const Dataset& val_ds,
                  const std::vector<std::size_t>& hidden, Activation act,
                  const TrainConfig& cfg);

// Held-out penalty value sdisco(Yhat, B | Y) of a trained model.
double heldout_penalty(const Predictor& p, const Dataset& ds, double bandwidth = 0.0);

void save_predictor(const std::string& path, const Predictor& p);
Predictor load_predictor(const std::string& path);

}  // namespace disco
