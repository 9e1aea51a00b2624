#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "disco/trainer.hpp"
#include "oracles.hpp"

using namespace disco;

namespace {

DatasetSpec blob_spec(std::size_t n, std::uint64_t seed, BiasMode mode) {
    DatasetSpec s;
    s.family = Family::blob;
    s.n = n;
    s.seed = seed;
    s.bias_mode = mode;
    return s;
}

}  // namespace

TEST_CASE("forward: zero weights and single linear layer") {
    Predictor p = Predictor::init({3, 1}, Activation::relu, Head::linear, 1);
    for (auto& w : p.weights) w = Matrix(w.rows(), w.cols());
    SplitRng rng(2);
    Matrix x = oracle::random_matrix(rng, 5, 3);
    CHECK(max_abs(forward(p, x)) == 0.0);

    Predictor lin = Predictor::init({3, 2}, Activation::relu, Head::linear, 3);
    lin.biases[0].at(0, 0) = 0.3;
    lin.biases[0].at(0, 1) = -0.1;
    Matrix expect = matmul(x, lin.weights[0]);
    for (std::size_t i = 0; i < 5; ++i) {
        expect.at(i, 0) += 0.3;
        expect.at(i, 1) -= 0.1;
    }
    CHECK(max_abs_diff(forward(lin, x), expect) < 1e-15);

    CHECK_THROWS_AS(forward(lin, Matrix(5, 4)), DimensionError);
}

TEST_CASE("forward gradient of mean output matches finite differences") {
    SplitRng rng(4);
    Matrix x = oracle::random_matrix(rng, 6, 3);
    Predictor p = Predictor::init({3, 4, 1}, Activation::tanh, Head::linear, 5);
    // check d(mean output)/d(first weight matrix)
    auto f = [&](Tape& t, Var w0) {
        Var ones = t.constant(Matrix(6, 1, 1.0));
        Var h = add(matmul(t.constant(x), w0), matmul(ones, t.constant(p.biases[0])));
        h = tanh_act(h);
        h = add(matmul(h, t.constant(p.weights[1])), matmul(ones, t.constant(p.biases[1])));
        return mean_all(h);
    };
    CHECK(finite_diff_check(f, p.weights[0], 1e-5) < 1e-5);
}

TEST_CASE("loss closed forms") {
    Matrix t = Matrix::from_rows({{0.5}, {-1.0}, {2.0}});
    CHECK(loss(t, t, Head::linear) == 0.0);

    // uniform logits over k classes cost ln k per sample
    const std::size_t k = 4;
    Matrix logits(6, k, 0.37);
    Matrix labels(6, 1);
    for (std::size_t i = 0; i < 6; ++i) labels.at(i, 0) = static_cast<double>(i % k);
    CHECK(loss(logits, labels, Head::logits) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    SplitRng rng(6);
    Matrix z = oracle::random_matrix(rng, 5, 3);
    Matrix y(5, 1);
    for (std::size_t i = 0; i < 5; ++i) y.at(i, 0) = static_cast<double>(i % 3);
    // loop reference
    double ref = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        double denom = 0.0;
        for (std::size_t j = 0; j < 3; ++j) denom += std::exp(z.at(i, j));
        ref += -std::log(std::exp(z.at(i, static_cast<std::size_t>(y.at(i, 0)))) / denom);
    }
    ref /= 5.0;
    CHECK(loss(z, y, Head::logits) == doctest::Approx(ref).epsilon(1e-12));

    Matrix bad(1, 1, 7.0);
    CHECK_THROWS_AS(loss(Matrix(1, 3), bad, Head::logits), InputError);
}

TEST_CASE("train_step: lambda 0 is plain ERM with the penalty still reported") {
    Dataset ds = blob_sample(blob_spec(64, 9, BiasMode::biased));
    Batch batch{ds.features(), ds.target_column(), ds.bias_columns(), {}};
    TrainConfig cfg;
    cfg.lambda = 0.0;
    cfg.bandwidth = 0.5;
    cfg.batch_size = 64;
    cfg.seed = 1;

    Predictor a = Predictor::init({batch.features.cols(), 8, 1}, Activation::relu,
                                  Head::linear, 11);
    Predictor b = a;
    AdamState sa, sb;
    const StepMetrics ma = train_step(a, batch, cfg, sa, 0);
    CHECK(ma.penalty > 0.0);  // reported even though unused

    TrainConfig erm = cfg;
    erm.estimator = Estimator::none;
    const StepMetrics mb = train_step(b, batch, erm, sb, 0);
    CHECK(ma.task_loss == mb.task_loss);
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        CHECK(max_abs_diff(a.weights[l], b.weights[l]) == 0.0);  // same update
    }

    cfg.lambda = 1.0;
    Batch tiny{Matrix(3, batch.features.cols()), Matrix(3, 1), Matrix(3, 1), {}};
    Predictor c = a;
    AdamState sc;
    CHECK_THROWS_AS(train_step(c, tiny, cfg, sc, 0), ConfigError);
}

TEST_CASE("train_step: a huge lambda drives the penalty down") {
    Dataset ds = blob_sample(blob_spec(64, 13, BiasMode::biased));
    Batch batch{ds.features(), ds.target_column(), ds.bias_columns(), {}};
    TrainConfig cfg;
    cfg.lambda = 1e6;
    cfg.bandwidth = 0.5;
    cfg.learning_rate = 1e-3;
    cfg.seed = 2;
    Predictor p = Predictor::init({batch.features.cols(), 8, 1}, Activation::relu,
                                  Head::linear, 17);
    AdamState opt;
    double first = 0.0, last = 0.0;
    for (std::uint64_t step = 0; step < 200; ++step) {
        const StepMetrics m = train_step(p, batch, cfg, opt, step);
        if (step == 0) first = m.penalty;
        last = m.penalty;
    }
    CHECK(last < first);
}

TEST_CASE("train determinism: identical config and seed reproduce metrics bit-exactly") {
    Dataset tr = blob_sample(blob_spec(96, 19, BiasMode::biased));
    Dataset va = blob_sample(blob_spec(48, 20, BiasMode::unbiased));
    TrainConfig cfg;
    cfg.lambda = 0.5;
    cfg.bandwidth = 0.5;
    cfg.batch_size = 32;
    cfg.epochs = 3;
    cfg.seed = 123;
    const TrainResult a = train(tr, va, {8}, Activation::relu, cfg);
    const TrainResult b = train(tr, va, {8}, Activation::relu, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].train_loss == b.history[e].train_loss);
        CHECK(a.history[e].penalty == b.history[e].penalty);
        CHECK(a.history[e].val_metric == b.history[e].val_metric);
    }
    CHECK(a.best_val == b.best_val);
}

TEST_CASE("evaluate: perfect and mean predictors, hand-tabulated WGA") {
    // regression: a predictor echoing the single feature
    Dataset reg;
    reg.task = Task::regression;
    reg.target_name = "t";
    reg.bias_names = {"b"};
    for (int i = 0; i < 8; ++i) {
        Unit u;
        u.endogenous = {{"t", 0.1 * i}, {"b", 0.0}};
        u.features = {0.1 * i};
        reg.units.push_back(u);
        reg.targets.push_back(0.1 * i);
    }
    Predictor echo = Predictor::init({1, 1}, Activation::relu, Head::linear, 1);
    echo.weights[0] = Matrix(1, 1, 1.0);
    echo.biases[0] = Matrix(1, 1, 0.0);
    CHECK(evaluate(echo, reg).r2 == doctest::Approx(1.0).epsilon(1e-12));

    Predictor constant = Predictor::init({1, 1}, Activation::relu, Head::linear, 1);
    constant.weights[0] = Matrix(1, 1, 0.0);
    double mean = 0.0;
    for (const double t : reg.targets) mean += t;
    constant.biases[0] = Matrix(1, 1, mean / 8.0);
    CHECK(evaluate(constant, reg).r2 == doctest::Approx(0.0).epsilon(1e-12));

    // classification with binary bias: 4 groups, hand-computed accuracies
    Dataset cls;
    cls.task = Task::classification;
    cls.n_classes = 2;
    cls.target_name = "y";
    cls.bias_names = {"b"};
    // feature = what the model will predict; targets chosen so that group
    // accuracies are (y=0,b=0): 1.0, (0,1): 0.5, (1,0): 0.5, (1,1): 1.0
    struct Row { int y, b, pred; };
    std::vector<Row> rows{{0, 0, 0}, {0, 0, 0}, {0, 1, 0}, {0, 1, 1},
                          {1, 0, 1}, {1, 0, 0}, {1, 1, 1}, {1, 1, 1}};
    for (const Row& r : rows) {
        Unit u;
        u.endogenous = {{"y", double(r.y)}, {"b", double(r.b)}};
        u.features = {double(r.pred)};
        cls.units.push_back(u);
        cls.targets.push_back(double(r.y));
    }
    // logits = [1-f, f] scaled: predict class = feature value
    Predictor cp = Predictor::init({1, 2}, Activation::relu, Head::logits, 1);
    cp.weights[0] = Matrix::from_rows({{-10.0, 10.0}});
    cp.biases[0] = Matrix::from_rows({{5.0, -5.0}});
    const EvalMetrics m = evaluate(cp, cls);
    CHECK(m.has_wga);
    CHECK(m.worst_group_accuracy == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.balanced_accuracy == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("ERM sanity: unbiased blob reaches R^2 > 0.6") {
    Dataset tr = blob_sample(blob_spec(2000, 101, BiasMode::unbiased));
    Dataset va = blob_sample(blob_spec(400, 102, BiasMode::unbiased));
    Dataset te = blob_sample(blob_spec(400, 103, BiasMode::unbiased));
    TrainConfig cfg;
    cfg.lambda = 0.0;
    cfg.estimator = Estimator::none;
    cfg.batch_size = 128;
    cfg.epochs = 30;
    cfg.seed = 7;
    const TrainResult r = train(tr, va, {64, 64}, Activation::relu, cfg);
    CHECK(evaluate(r.best, te).r2 > 0.6);
}

TEST_CASE("checkpoint round-trip") {
    Predictor p = Predictor::init({5, 7, 3}, Activation::tanh, Head::logits, 31);
    const std::string path =
        (std::filesystem::temp_directory_path() / "disco_ckpt.bin").string();
    save_predictor(path, p);
    Predictor q = load_predictor(path);
    CHECK(q.layer_sizes == p.layer_sizes);
    CHECK(q.activation == p.activation);
    CHECK(q.head == p.head);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        CHECK(max_abs_diff(q.weights[l], p.weights[l]) == 0.0);
        CHECK(max_abs_diff(q.biases[l], p.biases[l]) == 0.0);
    }
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_predictor("/nonexistent/x.ckpt"), IoError);
}
