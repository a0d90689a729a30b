#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gridsage/dataset.hpp"
#include "gridsage/model.hpp"

namespace gridsage {

enum class OptimizerKind { sgd, adam };

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double lasso_lambda = 1e-4;  // L1 coefficient over weight matrices
    int epochs = 10;
    OptimizerKind optimizer = OptimizerKind::adam;
    AdamParams adam;
    std::uint64_t seed = 0;
    double prune_threshold = 1e-3;
    UpdateRule update_rule = UpdateRule::product;  // used when building a fresh model
    int accum_window = 8;  // samples per gradient accumulation / optimizer step
    int threads = 0;       // 0 = hardware concurrency
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
};

struct Metrics {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::vector<std::vector<int>> confusion;  // [true class][predicted class]
    int total = 0;
};

// -log softmax(logits)[true_class] + lambda * sum |w| over all weight
// matrices (biases excluded). Differentiable end to end when logits and
// params live on a tape.
Tensor loss_ce_lasso(const Tensor& logits, int true_class, const ModelParams& params,
                     double lambda);

struct TrainResult {
    ModelParams model;
    std::vector<EpochStats> history;
};

// Shuffled per-sample gradients, accumulated over cfg.accum_window samples
// per optimizer step. Deterministic for a fixed seed regardless of thread
// count: per-sample work is independent and merge order is fixed. Writes one
// `epoch=<k> loss=<mean> acc=<train-acc>` line per epoch to log when given.
TrainResult train(const ModelParams& init, const std::vector<Sample>& data,
                  const TrainConfig& cfg, std::ostream* log = nullptr);

Metrics evaluate(const ModelParams& model, const std::vector<Sample>& data, int threads = 0);

struct SparsityReport {
    struct Entry {
        std::string name;
        int zeros = 0;
        int total = 0;
    };
    std::vector<Entry> per_matrix;
    double overall() const;
};

// Zeroes every weight with |w| < tau (strict, so tau = 0 is the identity);
// biases are untouched.
std::pair<ModelParams, SparsityReport> prune_weights(const ModelParams& model, double tau);

void write_metrics_json(const std::string& path, const std::vector<EpochStats>& history,
                        const Metrics& final_metrics,
                        const std::vector<std::string>& class_names);

}  // namespace gridsage
