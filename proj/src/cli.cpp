#include "disco/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "disco/bench.hpp"
#include "disco/pathways.hpp"
#include "disco/scm_data.hpp"
#include "disco/trainer.hpp"

namespace disco {
namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw SchemaError("config is not valid JSON: " + std::string(e.what()));
    }
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& context) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) ok = true;
        }
        if (!ok) throw SchemaError("unknown key \"" + key + "\" in " + context);
    }
}

std::optional<std::uint64_t> seed_override() {
    const char* env = std::getenv("DISCO_SEED");
    if (env == nullptr || *env == '\0') return std::nullopt;
    return static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
}

DatasetSpec parse_dataset_spec(const json& j) {
    reject_unknown_keys(j,
                        {"family", "n", "seed", "label_noise", "bias_mode", "resolution",
                         "feature_noise", "multibias", "render"},
                        "dataset spec");
    DatasetSpec spec;
    if (!j.contains("family")) throw SchemaError("dataset spec needs a family");
    spec.family = family_from_string(j.at("family").get<std::string>());
    spec.n = j.value("n", 0u);
    spec.seed = j.value("seed", 0u);
    spec.label_noise = j.value("label_noise", 0.0);
    const std::string mode = j.value("bias_mode", "biased");
    if (mode != "biased" && mode != "unbiased") {
        throw SchemaError("bias_mode must be \"biased\" or \"unbiased\"");
    }
    spec.bias_mode = mode == "biased" ? BiasMode::biased : BiasMode::unbiased;
    spec.resolution = j.value("resolution", 0u);
    spec.feature_noise = j.value("feature_noise", 0.1);
    spec.multibias = j.value("multibias", false);
    spec.render = j.value("render", true);
    if (const auto s = seed_override()) spec.seed = *s;
    return spec;
}

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw SchemaError("activation must be \"relu\" or \"tanh\"");
}

Estimator parse_estimator(const std::string& s) {
    if (s == "sdisco") return Estimator::sdisco;
    if (s == "disco_m") return Estimator::disco_m;
    if (s == "none") return Estimator::none;
    throw SchemaError("estimator must be \"sdisco\", \"disco_m\" or \"none\"");
}

}  // namespace

int exit_code_for_current_exception() {
    try {
        throw;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code()) <= 9 ? static_cast<int>(e.code()) : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

GenOutput cmd_gen(const std::string& config_path) {
    const json cfg = load_json_file(config_path);
    reject_unknown_keys(cfg, {"dataset", "out"}, "gen config");
    if (!cfg.contains("dataset") || !cfg.contains("out")) {
        throw SchemaError("gen config needs \"dataset\" and \"out\"");
    }
    const DatasetSpec spec = parse_dataset_spec(cfg.at("dataset"));
    const std::string prefix = cfg.at("out").get<std::string>();

    const Dataset ds = generate(spec);
    GenOutput out;
    out.n_generated = spec.n;
    out.n_retained = ds.n();
    out.dataset_path = prefix + ".bin";
    out.csv_path = prefix + ".csv";
    save_dataset(out.dataset_path, ds);
    export_csv(out.csv_path, ds);
    const PositivityReport rep = positivity_diagnostic(ds);
    out.positivity = rep.format();
    std::cout << out.positivity << "\n";
    std::cout << "retained " << out.n_retained << " of " << out.n_generated << " units\n";
    return out;
}

TrainOutput cmd_train(const std::string& config_path) {
    const json cfg = load_json_file(config_path);
    reject_unknown_keys(cfg, {"train_data", "val_data", "model", "train", "out_dir"},
                        "train config");
    for (const char* key : {"train_data", "val_data", "train", "out_dir"}) {
        if (!cfg.contains(key)) {
            throw SchemaError(std::string("train config needs \"") + key + "\"");
        }
    }
    const Dataset train_ds = load_dataset(cfg.at("train_data").get<std::string>());
    const Dataset val_ds = load_dataset(cfg.at("val_data").get<std::string>());

    std::vector<std::size_t> hidden{64, 64};
    Activation act = Activation::relu;
    if (cfg.contains("model")) {
        const json& m = cfg.at("model");
        reject_unknown_keys(m, {"hidden", "activation"}, "model config");
        if (m.contains("hidden")) hidden = m.at("hidden").get<std::vector<std::size_t>>();
        if (m.contains("activation")) act = parse_activation(m.at("activation"));
    }

    const json& t = cfg.at("train");
    reject_unknown_keys(t,
                        {"lambda", "bandwidth", "estimator", "m_fraction", "batch_size",
                         "epochs", "learning_rate", "optimizer", "seed", "bias_columns"},
                        "train config");
    TrainConfig base;
    base.estimator = parse_estimator(t.value("estimator", "sdisco"));
    base.m_fraction = t.value("m_fraction", 0.20);
    base.batch_size = t.value("batch_size", 128u);
    base.epochs = t.value("epochs", 20u);
    base.learning_rate = t.value("learning_rate", 1e-3);
    const std::string opt = t.value("optimizer", "adam");
    if (opt != "adam" && opt != "sgd") throw SchemaError("optimizer must be \"adam\" or \"sgd\"");
    base.optimizer = opt == "adam" ? Optimizer::adam : Optimizer::sgd;
    base.seed = t.value("seed", 0u);
    if (const auto s = seed_override()) base.seed = *s;
    if (t.contains("bias_columns")) {
        base.bias_columns = t.at("bias_columns").get<std::vector<std::size_t>>();
    }

    auto as_grid = [](const json& v, double fallback) {
        std::vector<double> grid;
        if (v.is_array()) {
            for (const auto& e : v) grid.push_back(e.get<double>());
        } else if (v.is_number()) {
            grid.push_back(v.get<double>());
        } else if (v.is_string() && v.get<std::string>() == "median") {
            grid.push_back(0.0);
        } else {
            grid.push_back(fallback);
        }
        return grid;
    };
    const std::vector<double> lambdas =
        t.contains("lambda") ? as_grid(t.at("lambda"), 0.0) : std::vector<double>{0.0};
    const std::vector<double> bandwidths =
        t.contains("bandwidth") ? as_grid(t.at("bandwidth"), 0.0) : std::vector<double>{0.0};

    const std::string out_dir = cfg.at("out_dir").get<std::string>();
    std::filesystem::create_directories(out_dir);

    TrainOutput out;
    std::size_t run_index = 0;
    for (const double lambda : lambdas) {
        for (const double bandwidth : bandwidths) {
            TrainConfig rc = base;
            rc.lambda = lambda;
            rc.bandwidth = bandwidth;
            const TrainResult result = train(train_ds, val_ds, hidden, act, rc);

            TrainRunSummary summary;
            summary.lambda = lambda;
            summary.bandwidth = bandwidth;
            summary.best_epoch = result.best_epoch;
            summary.best_val = result.best_val;
            summary.checkpoint_path =
                out_dir + "/run_" + std::to_string(run_index) + ".ckpt";
            summary.metrics_path =
                out_dir + "/run_" + std::to_string(run_index) + "_metrics.jsonl";
            save_predictor(summary.checkpoint_path, result.best);
            std::ofstream ms(summary.metrics_path);
            if (!ms) throw IoError("cannot open for writing: " + summary.metrics_path);
            for (const EpochRecord& rec : result.history) {
                json line{{"epoch", rec.epoch},
                          {"train_loss", rec.train_loss},
                          {"penalty", rec.penalty},
                          {"val_metric", rec.val_metric}};
                ms << line.dump() << "\n";
            }
            out.runs.push_back(summary);
            if (summary.best_val > out.runs[out.best_run].best_val) out.best_run = run_index;
            ++run_index;
        }
    }

    json summary;
    summary["runs"] = json::array();
    for (const TrainRunSummary& r : out.runs) {
        summary["runs"].push_back({{"lambda", r.lambda},
                                   {"bandwidth", r.bandwidth},
                                   {"best_epoch", r.best_epoch},
                                   {"best_val", r.best_val},
                                   {"checkpoint", r.checkpoint_path},
                                   {"metrics", r.metrics_path}});
    }
    summary["best_run"] = out.best_run;
    out.summary_path = out_dir + "/summary.json";
    std::ofstream ss(out.summary_path);
    if (!ss) throw IoError("cannot open for writing: " + out.summary_path);
    ss << summary.dump(2) << "\n";
    std::cout << "trained " << out.runs.size() << " run(s); best val "
              << out.runs[out.best_run].best_val << "\n";
    return out;
}

namespace {

json analyze_models(const json& cfg) {
    const DatasetSpec family = parse_dataset_spec(cfg.at("family"));
    const std::size_t n_units = cfg.value("n_units", 200u);
    const std::size_t n_interventions = cfg.value("n_interventions", 8u);
    const std::uint64_t seed = cfg.value("seed", 1u);
    std::vector<std::string> variables;
    if (cfg.contains("variables")) {
        variables = cfg.at("variables").get<std::vector<std::string>>();
    } else {
        for (const auto& v : intervenable_variables(family)) variables.push_back(v.name);
    }
    json reports = json::array();
    for (const auto& model : cfg.at("checkpoints")) {
        reject_unknown_keys(model, {"name", "path"}, "checkpoint entry");
        const Predictor p = load_predictor(model.at("path").get<std::string>());
        json entry;
        entry["name"] = model.value("name", model.at("path").get<std::string>());
        for (const std::string& var : variables) {
            entry["S_" + var] = sensitivity(p, family, var, n_units, n_interventions, seed);
        }
        if (p.head == Head::logits) {
            entry["acc_ctf"] = ctf_accuracy(p, family, n_units, n_interventions, seed);
        } else {
            entry["r2_ctf"] = ctf_r2(p, family, n_units, n_interventions, seed);
        }
        reports.push_back(entry);
    }
    return reports;
}

json analyze_scm(const json& cfg) {
    const std::string scm_path = cfg.at("scm").get<std::string>();
    std::ifstream is(scm_path);
    if (!is) throw IoError("cannot open SCM document: " + scm_path);
    std::stringstream buf;
    buf << is.rdbuf();
    const json doc = json::parse(buf.str(), nullptr, false);
    if (doc.is_discarded()) throw SchemaError("SCM document is not valid JSON");
    const DiscreteSCM scm = DiscreteSCM::from_json(buf.str());

    if (!doc.contains("roles")) throw SchemaError("SCM document needs \"roles\"");
    SamRoles roles;
    roles.y = doc.at("roles").at("y").get<std::string>();
    roles.w = doc.at("roles").value("w", std::vector<std::string>{});
    roles.z = doc.at("roles").value("z", std::vector<std::string>{});
    roles.x = doc.at("roles").at("x").get<std::string>();

    PredictorTable pred;
    if (doc.contains("predictor")) {
        const json& jp = doc.at("predictor");
        pred.input = jp.at("input").get<std::string>();
        pred.output_support = jp.at("output_support").get<std::vector<double>>();
        const auto rows = jp.at("rows").get<std::vector<std::vector<double>>>();
        pred.rows = Matrix(rows.size(), pred.output_support.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != pred.output_support.size()) {
                throw SchemaError("predictor rows must match the output support");
            }
            for (std::size_t j = 0; j < rows[i].size(); ++j) pred.rows.at(i, j) = rows[i][j];
        }
    } else {
        // default: the identity table over the target support
        const std::size_t xi = scm.index_of(roles.x);
        const std::size_t yi = scm.index_of(roles.y);
        std::vector<std::size_t> mapping;
        for (std::size_t i = 0; i < scm.var(xi).support.size(); ++i) {
            mapping.push_back(i % scm.var(yi).support.size());
        }
        pred = PredictorTable::deterministic(roles.x, scm.var(yi).support, mapping);
    }
    const PathwayReport report = pathway_report(scm, pred, roles);
    return json::parse(pathway_report_to_json(report));
}

}  // namespace

AnalyzeOutput cmd_analyze(const std::string& config_path,
                          const std::string& checkpoint_override) {
    json cfg = load_json_file(config_path);
    reject_unknown_keys(cfg,
                        {"family", "checkpoints", "variables", "n_units", "n_interventions",
                         "seed", "scm", "out"},
                        "analyze config");
    if (!cfg.contains("out")) throw SchemaError("analyze config needs \"out\"");

    if (!checkpoint_override.empty()) {
        cfg["checkpoints"] = json::array({{{"name", "model"}, {"path", checkpoint_override}}});
    }

    json report;
    if (cfg.contains("scm")) {
        report["pathways"] = analyze_scm(cfg);
    }
    if (cfg.contains("checkpoints")) {
        if (!cfg.contains("family")) {
            throw SchemaError("analyze config needs \"family\" for checkpoint analysis");
        }
        report["models"] = analyze_models(cfg);
    }
    if (report.empty()) {
        throw SchemaError("analyze config needs \"scm\" and/or \"checkpoints\"");
    }

    AnalyzeOutput out;
    out.report_path = cfg.at("out").get<std::string>();
    std::ofstream os(out.report_path);
    if (!os) throw IoError("cannot open for writing: " + out.report_path);
    os << report.dump(2) << "\n";
    std::cout << "report written to " << out.report_path << "\n";
    return out;
}

BenchOutput cmd_bench(const std::vector<std::size_t>& sizes, std::size_t reps,
                      const std::string& out_csv, std::uint64_t seed) {
    if (sizes.empty()) throw ConfigError("bench: need at least one size");
    std::uint64_t effective_seed = seed;
    if (const auto s = seed_override()) effective_seed = *s;
    const std::vector<BenchRecord> records = run_bench(sizes, reps, effective_seed);
    write_bench_csv(out_csv, records);

    BenchOutput out;
    out.csv_path = out_csv;
    out.allocation_exponent = fitted_allocation_exponent(records);
    out.checksums_match = true;
    for (std::size_t i = 0; i + 1 < records.size(); i += 2) {
        if (records[i].checksum != records[i + 1].checksum) out.checksums_match = false;
    }
    std::cout << "allocation exponent " << out.allocation_exponent << "; checksums "
              << (out.checksums_match ? "match" : "DIFFER") << "\n";
    return out;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"conditional distance correlation toolkit"};
    app.require_subcommand(1);

    std::string gen_config, train_config, analyze_config, analyze_ckpt;
    std::string bench_sizes = "128,512,2048", bench_out = "bench.csv";
    std::size_t bench_reps = 5;
    std::uint64_t bench_seed = 1;

    CLI::App* gen = app.add_subcommand("gen", "generate a dataset");
    gen->add_option("--config", gen_config, "JSON config")->required();

    CLI::App* tr = app.add_subcommand("train", "train predictors over a config grid");
    tr->add_option("--config", train_config, "JSON config")->required();

    CLI::App* an = app.add_subcommand("analyze", "counterfactual and pathway analysis");
    an->add_option("--config", analyze_config, "JSON config")->required();
    an->add_option("--checkpoint", analyze_ckpt, "checkpoint path override");

    CLI::App* be = app.add_subcommand("bench", "naive vs single-shot scaling benchmark");
    be->add_option("--sizes", bench_sizes, "comma-separated sample sizes");
    be->add_option("--reps", bench_reps, "repetitions per size");
    be->add_option("--out", bench_out, "output CSV path")->required();
    be->add_option("--seed", bench_seed, "input seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) {
            cmd_gen(gen_config);
        } else if (tr->parsed()) {
            cmd_train(train_config);
        } else if (an->parsed()) {
            cmd_analyze(analyze_config, analyze_ckpt);
        } else if (be->parsed()) {
            std::vector<std::size_t> sizes;
            std::stringstream ss(bench_sizes);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (!tok.empty()) sizes.push_back(std::stoul(tok));
            }
            cmd_bench(sizes, bench_reps, bench_out, bench_seed);
        }
    } catch (...) {
        return exit_code_for_current_exception();
    }
    return 0;
}

}  // namespace disco
