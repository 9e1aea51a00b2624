#include "disco/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

namespace disco {
namespace {

Matrix one_hot(const std::vector<int>& labels, std::size_t k) {
    Matrix out(labels.size(), k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return out;
}

std::vector<int> labels_from_targets(const Matrix& targets) {
    std::vector<int> labels(targets.rows());
    for (std::size_t i = 0; i < targets.rows(); ++i) {
        labels[i] = static_cast<int>(targets.at(i, 0));
    }
    return labels;
}

struct ForwardGraph {
    std::vector<Var> weight_leaves;
    std::vector<Var> bias_leaves;
    Var output;  // raw outputs / logits
};

ForwardGraph forward_graph(Tape& t, const Predictor& p, const Matrix& features) {
    if (features.cols() != p.input_dim()) {
        throw DimensionError("forward: feature dim " + std::to_string(features.cols()) +
                             " does not match first layer " + std::to_string(p.input_dim()));
    }
    ForwardGraph g;
    Var ones = t.constant(Matrix(features.rows(), 1, 1.0));
    Var h = t.constant(features);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        Var w = t.leaf(p.weights[l]);
        Var b = t.leaf(p.biases[l]);
        g.weight_leaves.push_back(w);
        g.bias_leaves.push_back(b);
        h = add(matmul(h, w), matmul(ones, b));
        if (l + 1 < p.weights.size()) {
            h = p.activation == Activation::relu ? relu(h) : tanh_act(h);
        }
    }
    g.output = h;
    return g;
}

double sd_of(const std::vector<double>& v) {
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (const double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace

Predictor Predictor::init(const std::vector<std::size_t>& sizes, Activation act, Head head,
                          std::uint64_t seed) {
    if (sizes.size() < 2) throw ConfigError("predictor needs at least input and output sizes");
    Predictor p;
    p.layer_sizes = sizes;
    p.activation = act;
    p.head = head;
    SplitRng rng = SplitRng(seed).split("predictor_init");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const double fan_in = static_cast<double>(sizes[l]);
        const double sdev = act == Activation::relu ? std::sqrt(2.0 / fan_in)
                                                    : std::sqrt(1.0 / fan_in);
        Matrix w(sizes[l], sizes[l + 1]);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, sdev);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(1, sizes[l + 1]);
    }
    return p;
}

Matrix forward(const Predictor& p, const Matrix& features) {
    if (features.cols() != p.input_dim()) {
        throw DimensionError("forward: feature dim mismatch");
    }
    Matrix h = features;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        Matrix z = matmul(h, p.weights[l]);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            for (std::size_t j = 0; j < z.cols(); ++j) z.at(i, j) += p.biases[l].at(0, j);
        }
        if (l + 1 < p.weights.size()) {
            for (std::size_t i = 0; i < z.size(); ++i) {
                z[i] = p.activation == Activation::relu ? std::max(z[i], 0.0) : std::tanh(z[i]);
            }
        }
        h = std::move(z);
    }
    return h;
}

Matrix class_probabilities(const Predictor& p, const Matrix& features) {
    if (p.head != Head::logits) throw ContractError("class_probabilities: linear head");
    Matrix z = forward(p, features);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double m = z.at(i, 0);
        for (std::size_t j = 1; j < z.cols(); ++j) m = std::max(m, z.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            z.at(i, j) = std::exp(z.at(i, j) - m);
            s += z.at(i, j);
        }
        for (std::size_t j = 0; j < z.cols(); ++j) z.at(i, j) /= s;
    }
    return z;
}

double loss(const Matrix& predictions, const Matrix& targets, Head head) {
    if (predictions.rows() != targets.rows()) throw DimensionError("loss: length mismatch");
    if (head == Head::linear) {
        double acc = 0.0;
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            const double d = predictions[i] - targets[i];
            acc += d * d;
        }
        return acc / static_cast<double>(predictions.rows());
    }
    Tape t;
    Var z = t.constant(predictions);
    return t.value(softmax_xent(z, labels_from_targets(targets))).at(0, 0);
}

StepMetrics train_step(Predictor& p, const Batch& batch, const TrainConfig& cfg,
                       AdamState& opt, std::uint64_t step_index) {
    const std::size_t n = batch.features.rows();
    if (cfg.lambda > 0.0 && n < 4) {
        throw ConfigError("train_step: batch of " + std::to_string(n) +
                          " is too small for the penalty (need >= 4)");
    }
    Tape t;
    ForwardGraph g = forward_graph(t, p, batch.features);

    Var task = p.head == Head::linear
                   ? mean_all(hadamard(sub(g.output, t.constant(batch.targets)),
                                       sub(g.output, t.constant(batch.targets))))
                   : softmax_xent(g.output, batch.labels);

    StepMetrics metrics;
    metrics.task_loss = t.value(task).at(0, 0);

    Var total = task;
    const bool want_penalty = cfg.estimator != Estimator::none && n >= 4;
    if (want_penalty) {
        Var pred_points = p.head == Head::linear ? g.output : softmax_rows(g.output);
        const Matrix condition =
            p.head == Head::linear ? batch.targets : one_hot(batch.labels, p.output_dim());
        Matrix bias = batch.bias;
        if (!cfg.bias_columns.empty()) {
            bias = Matrix(n, cfg.bias_columns.size());
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < cfg.bias_columns.size(); ++j) {
                    if (cfg.bias_columns[j] >= batch.bias.cols()) {
                        throw ConfigError("bias column index out of range");
                    }
                    bias.at(i, j) = batch.bias.at(i, cfg.bias_columns[j]);
                }
            }
        }
        PenaltyOptions opts;
        opts.bandwidth = cfg.bandwidth;
        opts.estimator = cfg.estimator;
        opts.m_fraction = cfg.m_fraction;
        opts.seed = SplitRng(cfg.seed ^ step_index).split("disco_m_rows").next_u64();
        Var pen = penalty_node(t, pred_points, bias, condition, opts);
        metrics.penalty = t.value(pen).at(0, 0);
        if (cfg.lambda > 0.0) total = add(task, scale(pen, cfg.lambda));
    }

    t.backward(total);

    if (opt.m.empty()) {
        for (std::size_t l = 0; l < p.weights.size(); ++l) {
            opt.m.emplace_back(p.weights[l].rows(), p.weights[l].cols());
            opt.v.emplace_back(p.weights[l].rows(), p.weights[l].cols());
            opt.m.emplace_back(1, p.biases[l].cols());
            opt.v.emplace_back(1, p.biases[l].cols());
        }
    }
    opt.t += 1;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt.t));
    std::size_t slot = 0;
    auto update = [&](Matrix& param, const Matrix& grad) {
        if (cfg.optimizer == Optimizer::sgd) {
            for (std::size_t i = 0; i < param.size(); ++i) {
                param[i] -= cfg.learning_rate * grad[i];
            }
            return;
        }
        Matrix& m = opt.m[slot];
        Matrix& v = opt.v[slot];
        for (std::size_t i = 0; i < param.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            param[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
        ++slot;
    };
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        update(p.weights[l], t.gradient(g.weight_leaves[l]));
        update(p.biases[l], t.gradient(g.bias_leaves[l]));
    }
    return metrics;
}

EvalMetrics evaluate(const Predictor& p, const Dataset& ds) {
    EvalMetrics out;
    const Matrix features = ds.features();
    if (p.head == Head::linear) {
        const Matrix pred = forward(p, features);
        double ss_res = 0.0, ss_tot = 0.0, mean = 0.0;
        for (const double t : ds.targets) mean += t;
        mean /= static_cast<double>(ds.n());
        for (std::size_t i = 0; i < ds.n(); ++i) {
            ss_res += (ds.targets[i] - pred.at(i, 0)) * (ds.targets[i] - pred.at(i, 0));
            ss_tot += (ds.targets[i] - mean) * (ds.targets[i] - mean);
        }
        out.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
        out.primary = out.r2;
        return out;
    }

    const Matrix probs = class_probabilities(p, features);
    std::vector<int> pred_labels(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < probs.cols(); ++j) {
            if (probs.at(i, j) > probs.at(i, best)) best = j;
        }
        pred_labels[i] = static_cast<int>(best);
    }
    std::map<int, std::pair<double, double>> per_class;  // label -> (correct, total)
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const int y = static_cast<int>(ds.targets[i]);
        auto& [correct, total] = per_class[y];
        total += 1.0;
        if (pred_labels[i] == y) correct += 1.0;
    }
    double bacc = 0.0;
    for (const auto& [y, ct] : per_class) bacc += ct.first / ct.second;
    out.balanced_accuracy = bacc / static_cast<double>(per_class.size());
    out.primary = out.balanced_accuracy;

    // worst-group accuracy over (target, bias) cells for categorical bias
    const Matrix bias = ds.bias_columns();
    bool categorical = bias.cols() > 0;
    for (std::size_t i = 0; i < bias.size() && categorical; ++i) {
        if (bias[i] != std::floor(bias[i])) categorical = false;
    }
    if (categorical) {
        std::map<std::vector<int>, std::pair<double, double>> groups;
        for (std::size_t i = 0; i < ds.n(); ++i) {
            std::vector<int> key{static_cast<int>(ds.targets[i])};
            for (std::size_t j = 0; j < bias.cols(); ++j) {
                key.push_back(static_cast<int>(bias.at(i, j)));
            }
            auto& [correct, total] = groups[key];
            total += 1.0;
            if (pred_labels[i] == static_cast<int>(ds.targets[i])) correct += 1.0;
        }
        double worst = 1.0;
        for (const auto& [key, ct] : groups) {
            if (ct.second == 0.0) {
                out.warnings.push_back("empty group excluded from worst-group accuracy");
                continue;
            }
            worst = std::min(worst, ct.first / ct.second);
        }
        out.worst_group_accuracy = worst;
        out.has_wga = true;
    }
    return out;
}

TrainResult train(const Dataset& train_ds, const Dataset& val_ds,
                  const std::vector<std::size_t>& hidden, Activation act,
                  const TrainConfig& cfg) {
    if (train_ds.n() == 0) throw InputError("train: empty training set");
    const bool classification = train_ds.task == Task::classification;
    std::vector<std::size_t> sizes{train_ds.feature_dim()};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(classification ? train_ds.n_classes : 1);
    Predictor p = Predictor::init(sizes, act, classification ? Head::logits : Head::linear,
                                  cfg.seed);
    AdamState opt;
    const Matrix all_features = train_ds.features();
    const Matrix all_bias = train_ds.bias_columns();

    TrainResult result;
    result.best = p;
    result.best_val = -1e300;
    SplitRng shuffle_rng = SplitRng(cfg.seed).split("epoch_shuffle");
    std::uint64_t step_index = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = shuffle_rng.permutation(train_ds.n());
        double loss_sum = 0.0, pen_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            if (len < 4 && cfg.lambda > 0.0) break;  // drop a too-small tail batch
            Batch batch;
            batch.features = Matrix(len, train_ds.feature_dim());
            batch.targets = Matrix(len, 1);
            batch.bias = Matrix(len, all_bias.cols());
            for (std::size_t r = 0; r < len; ++r) {
                const std::size_t src = order[start + r];
                std::memcpy(batch.features.data() + r * all_features.cols(),
                            all_features.data() + src * all_features.cols(),
                            all_features.cols() * sizeof(double));
                batch.targets.at(r, 0) = train_ds.targets[src];
                for (std::size_t c = 0; c < all_bias.cols(); ++c) {
                    batch.bias.at(r, c) = all_bias.at(src, c);
                }
            }
            if (classification) batch.labels = labels_from_targets(batch.targets);
            const StepMetrics sm = train_step(p, batch, cfg, opt, step_index++);
            loss_sum += sm.task_loss;
            pen_sum += sm.penalty;
            ++steps;
        }
        const EvalMetrics val = evaluate(p, val_ds);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
        rec.penalty = steps > 0 ? pen_sum / static_cast<double>(steps) : 0.0;
        rec.val_metric = val.primary;
        result.history.push_back(rec);
        if (val.primary > result.best_val) {
            result.best_val = val.primary;
            result.best_epoch = epoch;
            result.best = p;
        }
    }
    return result;
}

double heldout_penalty(const Predictor& p, const Dataset& ds, double bandwidth) {
    const Matrix features = ds.features();
    const Matrix pred = p.head == Head::linear ? forward(p, features)
                                               : class_probabilities(p, features);
    const Matrix bias = standardize_columns(ds.bias_columns());
    Matrix condition;
    if (ds.task == Task::classification) {
        condition = one_hot(labels_from_targets(ds.target_column()), ds.n_classes);
    } else {
        condition = ds.target_column();
    }
    const PointSet cond{condition};
    const double h = bandwidth > 0.0 ? bandwidth : median_heuristic(cond);
    return sdisco(pairwise_distance(PointSet{pred}), pairwise_distance(PointSet{bias}),
                  rbf_weights(cond, h));
}

namespace {
constexpr char kCkptMagic[8] = {'D', 'S', 'C', 'K', '0', '0', '0', '1'};
}

void save_predictor(const std::string& path, const Predictor& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kCkptMagic, sizeof(kCkptMagic));
    const std::uint64_t act = p.activation == Activation::relu ? 0 : 1;
    const std::uint64_t head = p.head == Head::linear ? 0 : 1;
    const std::uint64_t nl = p.layer_sizes.size();
    os.write(reinterpret_cast<const char*>(&act), 8);
    os.write(reinterpret_cast<const char*>(&head), 8);
    os.write(reinterpret_cast<const char*>(&nl), 8);
    for (const std::size_t s : p.layer_sizes) {
        const std::uint64_t v = s;
        os.write(reinterpret_cast<const char*>(&v), 8);
    }
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        os.write(reinterpret_cast<const char*>(p.weights[l].data()),
                 static_cast<std::streamsize>(p.weights[l].size() * 8));
        os.write(reinterpret_cast<const char*>(p.biases[l].data()),
                 static_cast<std::streamsize>(p.biases[l].size() * 8));
    }
    if (!os) throw IoError("write failed: " + path);
}

Predictor load_predictor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0) {
        throw IoError("not a checkpoint: " + path);
    }
    std::uint64_t act = 0, head = 0, nl = 0;
    is.read(reinterpret_cast<char*>(&act), 8);
    is.read(reinterpret_cast<char*>(&head), 8);
    is.read(reinterpret_cast<char*>(&nl), 8);
    Predictor p;
    p.activation = act == 0 ? Activation::relu : Activation::tanh;
    p.head = head == 0 ? Head::linear : Head::logits;
    p.layer_sizes.resize(nl);
    for (auto& s : p.layer_sizes) {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 8);
        s = v;
    }
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        Matrix w(p.layer_sizes[l], p.layer_sizes[l + 1]);
        is.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * 8));
        Matrix b(1, p.layer_sizes[l + 1]);
        is.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size() * 8));
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    if (!is) throw IoError("truncated checkpoint: " + path);
    return p;
}

}  // namespace disco
