// gridsage: train / eval / classify / explain for the grid-graph GraphSAGE
// classifier. Exit codes: 0 success, 2 config error, 3 I/O or data error,
// 4 training divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gridsage/dataset.hpp"
#include "gridsage/errors.hpp"
#include "gridsage/explain.hpp"
#include "gridsage/grid_graph.hpp"
#include "gridsage/model.hpp"
#include "gridsage/model_io.hpp"
#include "gridsage/training.hpp"

namespace fs = std::filesystem;
using namespace gridsage;

namespace {

struct DataOpts {
    std::string root;
    bool synthetic = false;
    int classes = 3;
    int samples_per_class = 87;
    int size = 32;
    double sigma = 0.2;
    int shadow_offset = 3;
};

void add_data_flags(CLI::App* cmd, DataOpts& d) {
    auto* root = cmd->add_option("--data", d.root, "dataset root: one subdirectory of PGM files per class");
    auto* synth = cmd->add_flag("--synthetic", d.synthetic, "use the built-in synthetic shape dataset");
    root->excludes(synth);
    synth->excludes(root);
    cmd->add_option("--classes", d.classes, "synthetic: number of classes")
        ->check(CLI::Range(2, 10))
        ->needs(synth);
    cmd->add_option("--samples-per-class", d.samples_per_class, "synthetic: samples per class")
        ->check(CLI::NonNegativeNumber)
        ->needs(synth);
    cmd->add_option("--size", d.size, "synthetic: square image size")
        ->check(CLI::Range(16, 1024))
        ->needs(synth);
    cmd->add_option("--sigma", d.sigma, "synthetic: speckle noise level")
        ->check(CLI::NonNegativeNumber)
        ->needs(synth);
    cmd->add_option("--shadow-offset", d.shadow_offset, "synthetic: shadow cast offset in pixels")
        ->check(CLI::NonNegativeNumber)
        ->needs(synth);
}

// Returns samples plus the manifest for either data source.
LoadedDataset load_source(const DataOpts& d, std::uint64_t seed) {
    if (d.synthetic) {
        SyntheticConfig cfg;
        cfg.image_size = d.size;
        cfg.num_classes = d.classes;
        cfg.samples_per_class = d.samples_per_class;
        cfg.speckle_sigma = d.sigma;
        cfg.shadow_offset = d.shadow_offset;
        cfg.seed = seed;
        LoadedDataset ds;
        ds.samples = generate_synthetic(cfg);
        ds.manifest = synthetic_manifest(cfg);
        return ds;
    }
    return load_dataset(d.root);
}

void print_metrics(const Metrics& m, const std::vector<std::string>& names) {
    std::printf("accuracy=%.4f\n", m.accuracy);
    std::printf("mean_loss=%.6f\n", m.mean_loss);
    std::printf("confusion (rows = true class, cols = predicted):\n");
    for (std::size_t r = 0; r < m.confusion.size(); ++r) {
        std::printf("  %-12s", names[r].c_str());
        for (int v : m.confusion[r]) std::printf(" %5d", v);
        std::printf("\n");
    }
}

int run_train(const DataOpts& data, const TrainConfig& cfg, double test_fraction, int layers,
              const std::string& model_path, std::string metrics_path, double prune_tau,
              int retrain_epochs) {
    LoadedDataset ds = load_source(data, cfg.seed);
    if (ds.samples.empty()) throw InvalidInputError("data source produced no samples");

    std::vector<Sample> train_set = ds.samples, eval_set;
    if (test_fraction > 0.0) {
        SplitResult sp = split(ds.samples, test_fraction, cfg.seed);
        train_set = std::move(sp.train);
        eval_set = std::move(sp.test);
    }
    std::cerr << "training on " << train_set.size() << " samples, evaluating on "
              << (eval_set.empty() ? train_set.size() : eval_set.size()) << "\n";

    ModelArch arch = default_arch(ds.manifest.height, ds.manifest.width, ds.manifest.class_names,
                                  layers);
    arch.update_rule = cfg.update_rule;
    Rng init_rng = Rng(cfg.seed).fork(0);
    const ModelParams model = init_model(arch, init_rng);

    TrainResult result = train(model, train_set, cfg, &std::cerr);

    if (prune_tau >= 0.0) {
        auto [pruned, report] = prune_weights(result.model, prune_tau);
        std::cerr << "pruned at tau=" << prune_tau << ": overall sparsity "
                  << report.overall() << "\n";
        for (const auto& e : report.per_matrix)
            std::cerr << "  " << e.name << ": " << e.zeros << "/" << e.total << "\n";
        result.model = std::move(pruned);
        if (retrain_epochs > 0) {
            TrainConfig rcfg = cfg;
            rcfg.epochs = retrain_epochs;
            std::cerr << "retraining for " << retrain_epochs << " epoch(s) after pruning\n";
            TrainResult again = train(result.model, train_set, rcfg, &std::cerr);
            result.model = std::move(again.model);
            for (EpochStats e : again.history) {
                e.epoch += static_cast<int>(result.history.size());
                result.history.push_back(e);
            }
        }
    }

    const Metrics final_metrics =
        evaluate(result.model, eval_set.empty() ? train_set : eval_set, cfg.threads);

    save_model(result.model, model_path);
    if (metrics_path.empty()) metrics_path = model_path + ".metrics.json";
    write_metrics_json(metrics_path, result.history, final_metrics, arch.class_names);

    std::printf("accuracy=%.4f\n", final_metrics.accuracy);
    std::cerr << "wrote " << model_path << " and " << metrics_path << "\n";
    return 0;
}

int run_eval(const DataOpts& data, const std::string& model_path, const std::string& split_side,
             double test_fraction, std::uint64_t seed, int threads,
             const std::string& metrics_path) {
    const ModelParams model = load_model(model_path);
    LoadedDataset ds = load_source(data, seed);

    std::vector<Sample> chosen = std::move(ds.samples);
    if (split_side != "all") {
        SplitResult sp = split(chosen, test_fraction, seed);
        chosen = split_side == "test" ? std::move(sp.test) : std::move(sp.train);
    }
    if (chosen.empty()) throw InvalidInputError("selected split is empty");

    const Metrics m = evaluate(model, chosen, threads);
    print_metrics(m, model.arch.class_names);
    if (!metrics_path.empty()) write_metrics_json(metrics_path, {}, m, model.arch.class_names);
    return 0;
}

int run_classify(const std::string& model_path, const std::string& image_path, int top_n,
                 std::string report_path) {
    const ModelParams model = load_model(model_path);
    const Image image = read_pgm(image_path);
    const ForwardOutput out = forward(model, build_grid_graph(image));
    const auto probs = softmax_probs(*out.logits.data);
    const ClassificationReport report =
        build_report(probs, model.arch.class_names, std::min<int>(top_n, model.arch.num_classes()));

    std::fputs(report_text(report).c_str(), stdout);
    if (report_path.empty())
        report_path = fs::path(image_path).stem().string() + ".report.json";
    std::ofstream json_out(report_path);
    if (!json_out) throw IoError("cannot write report file: " + report_path);
    json_out << report_json(report, "") << "\n";
    std::cerr << "wrote " << report_path << "\n";
    return 0;
}

int run_explain(const std::string& model_path, const std::string& image_path, int top_n,
                const std::string& mode_str, double threshold, const std::string& out_dir,
                bool per_layer) {
    const SaliencyMode mode = saliency_mode_from_string(mode_str);
    const ModelParams model = load_model(model_path);
    const Image image = read_pgm(image_path);

    const ForwardOutput out = forward(model, build_grid_graph(image),
                                      mode == SaliencyMode::gradcam ? TraceMode::gradients
                                                                    : TraceMode::activations);
    const auto probs = softmax_probs(*out.logits.data);
    int predicted = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[predicted]) predicted = static_cast<int>(i);

    const auto scores = vertex_importance(*out.trace, predicted, mode);
    const SaliencyMap saliency = backproject_saliency(scores.back(), *out.trace);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);
    const std::string stem = fs::path(image_path).stem().string();
    const std::string overlay_path = (fs::path(out_dir) / (stem + "_overlay.ppm")).string();
    write_ppm(render_overlay(image, saliency, threshold), overlay_path);

    if (per_layer && !out.trace->layers.empty()) {
        for (std::size_t l = 0; l < scores.size(); ++l) {
            const SaliencyMap layer_map =
                backproject_saliency_from(scores[l], *out.trace, static_cast<int>(l) + 1);
            const std::string p =
                (fs::path(out_dir) / (stem + "_overlay_layer" + std::to_string(l + 1) + ".ppm"))
                    .string();
            write_ppm(render_overlay(image, layer_map, threshold), p);
            std::cerr << "wrote " << p << "\n";
        }
    }

    const ClassificationReport report =
        build_report(probs, model.arch.class_names,
                     std::min<int>(top_n, model.arch.num_classes()), saliency,
                     to_string(mode));
    std::fputs(report_text(report).c_str(), stdout);

    const std::string report_path = (fs::path(out_dir) / (stem + ".report.json")).string();
    std::ofstream json_out(report_path);
    if (!json_out) throw IoError("cannot write report file: " + report_path);
    json_out << report_json(report, overlay_path) << "\n";
    std::cerr << "wrote " << overlay_path << " and " << report_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"grid-graph GraphSAGE image classifier with saliency reports"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model and write it to disk");
    DataOpts train_data;
    add_data_flags(train_cmd, train_data);
    TrainConfig cfg;
    std::string model_out, metrics_out, update_rule = "product", optimizer = "adam";
    double test_fraction = 0.2, prune_tau = -1.0;
    int layers = 0, retrain_epochs = 0;
    train_cmd->add_option("--model", model_out, "output model path")->required();
    train_cmd->add_option("--metrics", metrics_out, "metrics JSON path (default <model>.metrics.json)");
    train_cmd->add_option("--epochs", cfg.epochs, "training epochs")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", cfg.learning_rate, "learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lambda", cfg.lasso_lambda, "lasso (L1) coefficient")
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--optimizer", optimizer, "adam | sgd")
        ->check(CLI::IsMember({"adam", "sgd"}));
    train_cmd->add_option("--update-rule", update_rule, "product | sum")
        ->check(CLI::IsMember({"product", "sum"}));
    train_cmd->add_option("--layers", layers, "GNN layer count (0 = auto from input size)")
        ->check(CLI::Range(0, 3));
    train_cmd->add_option("--seed", cfg.seed, "seed for init, shuffling and synthetic data");
    train_cmd->add_option("--test-fraction", test_fraction,
                          "held-out fraction for the final metrics (0 = train on everything)")
        ->check(CLI::Range(0.0, 0.95));
    train_cmd->add_option("--accum-window", cfg.accum_window,
                          "samples per gradient accumulation step")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--threads", cfg.threads, "worker threads (0 = hardware)")
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--prune-tau", prune_tau,
                          "prune weights with |w| below this after training")
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--retrain-epochs", retrain_epochs, "extra epochs after pruning")
        ->check(CLI::NonNegativeNumber);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a dataset");
    DataOpts eval_data;
    add_data_flags(eval_cmd, eval_data);
    std::string eval_model, eval_metrics, split_side = "all";
    double eval_fraction = 0.2;
    std::uint64_t eval_seed = 0;
    int eval_threads = 0;
    eval_cmd->add_option("--model", eval_model, "model path")->required();
    eval_cmd->add_option("--split", split_side, "evaluate on: all | test | train")
        ->check(CLI::IsMember({"all", "test", "train"}));
    eval_cmd->add_option("--test-fraction", eval_fraction, "fraction for --split test/train")
        ->check(CLI::Range(1e-9, 0.95));
    eval_cmd->add_option("--seed", eval_seed, "split / synthetic seed");
    eval_cmd->add_option("--threads", eval_threads, "worker threads (0 = hardware)")
        ->check(CLI::NonNegativeNumber);
    eval_cmd->add_option("--metrics", eval_metrics, "write metrics JSON here");

    // classify
    auto* cls_cmd = app.add_subcommand("classify", "classify one image and print top-N classes");
    std::string cls_model, cls_image, cls_report;
    int cls_top = 4;
    cls_cmd->add_option("--model", cls_model, "model path")->required();
    cls_cmd->add_option("image", cls_image, "input PGM image")->required();
    cls_cmd->add_option("--top", cls_top, "entries in the report")->check(CLI::PositiveNumber);
    cls_cmd->add_option("--report", cls_report, "report JSON path (default <image>.report.json)");

    // explain
    auto* exp_cmd = app.add_subcommand("explain",
                                       "classify plus saliency overlay and JSON report");
    std::string exp_model, exp_image, exp_mode = "gradcam", exp_out = ".";
    int exp_top = 4;
    double exp_threshold = 0.5;
    bool per_layer = false;
    exp_cmd->add_option("--model", exp_model, "model path")->required();
    exp_cmd->add_option("image", exp_image, "input PGM image")->required();
    exp_cmd->add_option("--top", exp_top, "entries in the report")->check(CLI::PositiveNumber);
    exp_cmd->add_option("--mode", exp_mode, "saliency scoring: gradcam | activation")
        ->check(CLI::IsMember({"gradcam", "activation"}));
    exp_cmd->add_option("--threshold", exp_threshold, "tint pixels with saliency >= threshold")
        ->check(CLI::Range(0.0, 1.0));
    exp_cmd->add_option("--out", exp_out, "output directory for overlays and the report");
    exp_cmd->add_flag("--per-layer", per_layer, "also write one overlay per GNN layer");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e);
        app.exit(e);
        return 2;
    }

    // exactly one data source is a config-level invariant
    if ((app.got_subcommand(train_cmd) && !train_data.synthetic && train_data.root.empty()) ||
        (app.got_subcommand(eval_cmd) && !eval_data.synthetic && eval_data.root.empty())) {
        std::cerr << "error: no data source selected, pass --data DIR or --synthetic\n";
        return 2;
    }

    try {
        if (app.got_subcommand(train_cmd)) {
            cfg.optimizer = optimizer == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
            cfg.update_rule = update_rule_from_string(update_rule);
            return run_train(train_data, cfg, test_fraction, layers, model_out, metrics_out,
                             prune_tau, retrain_epochs);
        }
        if (app.got_subcommand(eval_cmd))
            return run_eval(eval_data, eval_model, split_side, eval_fraction, eval_seed,
                            eval_threads, eval_metrics);
        if (app.got_subcommand(cls_cmd))
            return run_classify(cls_model, cls_image, cls_top, cls_report);
        if (app.got_subcommand(exp_cmd))
            return run_explain(exp_model, exp_image, exp_top, exp_mode, exp_threshold, exp_out,
                               per_layer);
    } catch (const DivergedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
