#include "gridsage/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "gridsage/errors.hpp"
#include "gridsage/rng.hpp"

namespace gridsage {

Tensor loss_ce_lasso(const Tensor& logits, int true_class, const ModelParams& params,
                     double lambda) {
    if (lambda < 0.0) throw InvalidInputError("lasso coefficient must be >= 0");
    Tensor loss = cross_entropy_logits(logits, true_class);
    if (lambda == 0.0) return loss;

    Tensor penalty;
    bool first = true;
    visit_params(params, [&](const std::string&, const Tensor& t, bool is_weight) {
        if (!is_weight) return;
        Tensor term = l1_sum(t);
        penalty = first ? term : add(penalty, term);
        first = false;
    });
    if (first) return loss;  // model with no weight matrices
    return add(loss, scale(penalty, lambda));
}

namespace {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

Tensor features_of(const Sample& s) {
    return Tensor::from({s.image.num_pixels(), 1}, s.image.values);
}

void check_dataset(const ModelArch& arch, const std::vector<Sample>& data) {
    if (data.empty()) throw InvalidInputError("dataset is empty");
    for (const Sample& s : data) {
        if (s.image.height != arch.input_height || s.image.width != arch.input_width)
            throw InvalidInputError("sample " + s.source + " is " +
                                    std::to_string(s.image.height) + "x" +
                                    std::to_string(s.image.width) + " but the model expects " +
                                    std::to_string(arch.input_height) + "x" +
                                    std::to_string(arch.input_width));
        if (s.label < 0 || s.label >= arch.num_classes())
            throw InvalidInputError("sample " + s.source + " has label " +
                                    std::to_string(s.label) + " outside [0, " +
                                    std::to_string(arch.num_classes()) + ")");
    }
}

int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

struct SampleGrad {
    std::vector<std::vector<double>> per_param;
    double loss = 0.0;
    int predicted = 0;
};

// Forward + backward for one sample on its own tape.
SampleGrad sample_gradients(const ModelParams& model, const std::vector<GridGraph>& pyramid,
                            const Sample& s, double lambda) {
    Tape tape;
    const ModelParams watched = watch_params(tape, model);
    const Tensor logits = forward_on(watched, pyramid, features_of(s), nullptr);
    const Tensor loss = loss_ce_lasso(logits, s.label, watched, lambda);
    tape.backward(loss);

    SampleGrad out;
    out.loss = loss.value();
    out.predicted = argmax_lowest(*logits.data);
    visit_params(watched, [&](const std::string&, const Tensor& t, bool) {
        out.per_param.push_back(tape.grad(t));
    });
    return out;
}

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const std::vector<int>& sizes) : cfg_(cfg) {
        if (cfg.optimizer == OptimizerKind::adam) {
            m_.resize(sizes.size());
            v_.resize(sizes.size());
            for (std::size_t i = 0; i < sizes.size(); ++i) {
                m_[i].assign(static_cast<std::size_t>(sizes[i]), 0.0);
                v_[i].assign(static_cast<std::size_t>(sizes[i]), 0.0);
            }
        }
    }

    void step(ModelParams& model, const std::vector<std::vector<double>>& grads) {
        ++t_;
        std::size_t pi = 0;
        visit_params(model, [&](const std::string&, Tensor& w, bool) {
            const std::vector<double>& g = grads[pi];
            std::vector<double>& wd = *w.data;
            if (cfg_.optimizer == OptimizerKind::sgd) {
                for (std::size_t i = 0; i < wd.size(); ++i)
                    wd[i] -= cfg_.learning_rate * g[i];
            } else {
                const double b1 = cfg_.adam.beta1, b2 = cfg_.adam.beta2;
                const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
                std::vector<double>& m = m_[pi];
                std::vector<double>& v = v_[pi];
                for (std::size_t i = 0; i < wd.size(); ++i) {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    wd[i] -= cfg_.learning_rate * (m[i] / c1) /
                             (std::sqrt(v[i] / c2) + cfg_.adam.epsilon);
                }
            }
            ++pi;
        });
    }

private:
    TrainConfig cfg_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace

TrainResult train(const ModelParams& init, const std::vector<Sample>& data,
                  const TrainConfig& cfg, std::ostream* log) {
    if (cfg.learning_rate < 0.0) throw InvalidInputError("learning rate must be >= 0");
    if (cfg.epochs < 1) throw InvalidInputError("epochs must be >= 1");
    if (cfg.accum_window < 1) throw InvalidInputError("accumulation window must be >= 1");
    check_dataset(init.arch, data);

    const std::vector<GridGraph> pyramid = build_pyramid(init.arch);
    const int threads = resolve_threads(cfg.threads);

    TrainResult res;
    res.model = init.clone();

    std::vector<int> sizes;
    visit_params(res.model, [&](const std::string&, const Tensor& t, bool) {
        sizes.push_back(t.numel());
    });
    Optimizer opt(cfg, sizes);

    Rng shuffle_rng = Rng(cfg.seed).fork(1);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int correct = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.accum_window) {
            const std::size_t count = std::min<std::size_t>(cfg.accum_window,
                                                            order.size() - start);
            std::vector<SampleGrad> slots(count);
            std::vector<std::exception_ptr> errors(count);

            const auto job = [&](std::size_t k) {
                try {
                    slots[k] = sample_gradients(res.model, pyramid, data[order[start + k]],
                                                cfg.lasso_lambda);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            };
            const int workers = std::min<int>(threads, static_cast<int>(count));
            if (workers <= 1) {
                for (std::size_t k = 0; k < count; ++k) job(k);
            } else {
                std::vector<std::thread> pool;
                for (int w = 0; w < workers; ++w) {
                    pool.emplace_back([&, w]() {
                        for (std::size_t k = static_cast<std::size_t>(w); k < count;
                             k += static_cast<std::size_t>(workers))
                            job(k);
                    });
                }
                for (std::thread& th : pool) th.join();
            }
            for (std::size_t k = 0; k < count; ++k) {
                if (!errors[k]) continue;
                try {
                    std::rethrow_exception(errors[k]);
                } catch (const IntegrityError& e) {
                    // Overflow inside the forward pass surfaces here.
                    throw DivergedError("training diverged at epoch " + std::to_string(epoch) +
                                        ", sample " + data[order[start + k]].source + ": " +
                                        e.what());
                }
            }

            // Merge in slot order so results do not depend on scheduling.
            std::vector<std::vector<double>> acc(sizes.size());
            for (std::size_t p = 0; p < sizes.size(); ++p)
                acc[p].assign(static_cast<std::size_t>(sizes[p]), 0.0);
            for (std::size_t k = 0; k < count; ++k) {
                if (!std::isfinite(slots[k].loss))
                    throw DivergedError("training diverged (non-finite loss) at epoch " +
                                        std::to_string(epoch) + ", sample " +
                                        data[order[start + k]].source);
                loss_sum += slots[k].loss;
                if (slots[k].predicted == data[order[start + k]].label) ++correct;
                for (std::size_t p = 0; p < acc.size(); ++p) {
                    const std::vector<double>& g = slots[k].per_param[p];
                    for (std::size_t i = 0; i < g.size(); ++i) acc[p][i] += g[i];
                }
            }
            for (std::size_t p = 0; p < acc.size(); ++p)
                for (double& g : acc[p]) g /= static_cast<double>(count);

            opt.step(res.model, acc);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / static_cast<double>(data.size());
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
        res.history.push_back(stats);
        if (log != nullptr) {
            char line[128];
            std::snprintf(line, sizeof(line), "epoch=%d loss=%.6f acc=%.4f", epoch,
                          stats.mean_loss, stats.train_accuracy);
            (*log) << line << "\n" << std::flush;
        }
    }
    return res;
}

Metrics evaluate(const ModelParams& model, const std::vector<Sample>& data, int threads) {
    check_dataset(model.arch, data);
    const std::vector<GridGraph> pyramid = build_pyramid(model.arch);
    const int classes = model.arch.num_classes();
    const int workers = std::min<int>(resolve_threads(threads), static_cast<int>(data.size()));

    std::vector<int> predicted(data.size(), 0);
    std::vector<double> losses(data.size(), 0.0);
    const auto run = [&](std::size_t begin, std::size_t step) {
        for (std::size_t i = begin; i < data.size(); i += step) {
            const Tensor logits = forward_on(model, pyramid, features_of(data[i]), nullptr);
            predicted[i] = argmax_lowest(*logits.data);
            losses[i] = cross_entropy_logits(logits, data[i].label).value();
        }
    };
    if (workers <= 1) {
        run(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(run, static_cast<std::size_t>(w), static_cast<std::size_t>(workers));
        for (std::thread& th : pool) th.join();
    }

    Metrics m;
    m.total = static_cast<int>(data.size());
    m.confusion.assign(classes, std::vector<int>(classes, 0));
    int correct = 0;
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        m.confusion[data[i].label][predicted[i]]++;
        if (predicted[i] == data[i].label) ++correct;
        loss_sum += losses[i];
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
    m.mean_loss = loss_sum / static_cast<double>(m.total);
    return m;
}

double SparsityReport::overall() const {
    long zeros = 0, total = 0;
    for (const Entry& e : per_matrix) {
        zeros += e.zeros;
        total += e.total;
    }
    return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

std::pair<ModelParams, SparsityReport> prune_weights(const ModelParams& model, double tau) {
    if (tau < 0.0) throw InvalidInputError("prune threshold must be >= 0");
    ModelParams pruned = model.clone();
    SparsityReport report;
    visit_params(pruned, [&](const std::string& name, Tensor& t, bool is_weight) {
        if (!is_weight) return;
        SparsityReport::Entry e;
        e.name = name;
        e.total = t.numel();
        for (double& v : *t.data) {
            if (std::abs(v) < tau) v = 0.0;
            if (v == 0.0) ++e.zeros;
        }
        report.per_matrix.push_back(std::move(e));
    });
    return {std::move(pruned), std::move(report)};
}

void write_metrics_json(const std::string& path, const std::vector<EpochStats>& history,
                        const Metrics& final_metrics,
                        const std::vector<std::string>& class_names) {
    nlohmann::json j;
    j["epochs"] = nlohmann::json::array();
    for (const EpochStats& e : history)
        j["epochs"].push_back(
            {{"epoch", e.epoch}, {"loss", e.mean_loss}, {"accuracy", e.train_accuracy}});
    j["final"] = {{"accuracy", final_metrics.accuracy},
                  {"mean_loss", final_metrics.mean_loss},
                  {"total", final_metrics.total},
                  {"confusion", final_metrics.confusion},
                  {"class_names", class_names}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metrics file: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("short write to metrics file: " + path);
}

}  // namespace gridsage
