#include "gridsage/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "gridsage/errors.hpp"

namespace gridsage {

std::string to_string(SaliencyMode mode) {
    return mode == SaliencyMode::gradcam ? "gradcam" : "activation";
}

SaliencyMode saliency_mode_from_string(const std::string& s) {
    if (s == "gradcam") return SaliencyMode::gradcam;
    if (s == "activation") return SaliencyMode::activation;
    throw InvalidInputError("unknown saliency mode '" + s + "' (expected gradcam or activation)");
}

namespace {

// Layer outputs to score: each trace entry's post-attention activations, or
// the raw input features for a headless (0-layer) model.
std::vector<const Tensor*> scored_tensors(const LayerTrace& trace) {
    std::vector<const Tensor*> out;
    if (trace.layers.empty()) {
        out.push_back(&trace.input_features);
    } else {
        for (const LayerTraceEntry& e : trace.layers) out.push_back(&e.output);
    }
    return out;
}

}  // namespace

std::vector<std::vector<double>> vertex_importance(const LayerTrace& trace, int target_class,
                                                   SaliencyMode mode) {
    if (trace.grids.empty() || !trace.logits.data)
        throw InvalidInputError("vertex_importance: trace was not recorded");
    if (target_class < 0 || target_class >= trace.logits.numel())
        throw InvalidInputError("vertex_importance: target class out of range");

    const std::vector<const Tensor*> acts = scored_tensors(trace);

    std::vector<std::vector<double>> per_layer;
    if (mode == SaliencyMode::activation) {
        for (const Tensor* h : acts) {
            const int n = h->shape[0], d = h->shape[1];
            std::vector<double> score(static_cast<std::size_t>(n), 0.0);
            for (int i = 0; i < n; ++i)
                for (int c = 0; c < d; ++c)
                    score[i] += std::abs(h->at(i, c));
            per_layer.push_back(std::move(score));
        }
        return per_layer;
    }

    if (!trace.tape)
        throw InvalidInputError(
            "vertex_importance: gradcam needs a trace recorded with gradients");
    Tape& tape = *trace.tape;
    tape.backward(pick(trace.logits, target_class));

    for (const Tensor* h : acts) {
        const int n = h->shape[0], d = h->shape[1];
        const std::vector<double> g = tape.grad(*h);
        std::vector<double> alpha(static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c) alpha[c] += g[static_cast<std::size_t>(i) * d + c];
        for (double& a : alpha) a /= n;

        std::vector<double> score(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += alpha[c] * h->at(i, c);
            score[i] = std::max(0.0, s);
        }
        per_layer.push_back(std::move(score));
    }
    return per_layer;
}

SaliencyMap backproject_saliency_from(const std::vector<double>& scores, const LayerTrace& trace,
                                      int layer) {
    if (trace.grids.empty()) throw InvalidInputError("backproject_saliency: trace has no grids");
    const int levels = static_cast<int>(trace.grids.size()) - 1;
    if (layer < 0 || layer > levels)
        throw InvalidInputError("backproject_saliency: layer index out of range");
    if (static_cast<int>(scores.size()) != trace.grids[layer].num_vertices())
        throw InvalidInputError("backproject_saliency: score count " +
                                std::to_string(scores.size()) + " != vertex count " +
                                std::to_string(trace.grids[layer].num_vertices()));
    for (double s : scores)
        if (!(s >= 0.0) || !std::isfinite(s))
            throw IntegrityError("backproject_saliency: scores must be finite and >= 0");
    if (layer > 0 && trace.layers.size() != trace.grids.size() - 1)
        throw IntegrityError("backproject_saliency: trace layer/grid counts disagree");

    std::vector<double> cur = scores;
    for (int l = layer - 1; l >= 0; --l) {
        const GridGraph& coarse = trace.grids[l + 1];
        const GridGraph& fine = trace.grids[l];
        const std::vector<std::int32_t>& argmax = trace.layers[l].pool_argmax;
        const int m = coarse.num_vertices();
        if (argmax.size() % static_cast<std::size_t>(m) != 0)
            throw IntegrityError("backproject_saliency: argmax table does not tile the grid");
        const int d = static_cast<int>(argmax.size() / static_cast<std::size_t>(m));

        std::vector<double> next(static_cast<std::size_t>(fine.num_vertices()), 0.0);
        for (int v = 0; v < m; ++v) {
            for (int c = 0; c < d; ++c) {
                const std::int32_t fv = argmax[static_cast<std::size_t>(v) * d + c];
                if (fv < 0 || fv >= fine.num_vertices())
                    throw IntegrityError("backproject_saliency: argmax index out of bounds");
                next[fv] = std::max(next[fv], cur[v]);
            }
        }
        cur = std::move(next);
    }

    SaliencyMap map;
    map.height = trace.grids[0].height;
    map.width = trace.grids[0].width;
    map.scores = std::move(cur);
    const double mx = *std::max_element(map.scores.begin(), map.scores.end());
    if (mx > 0.0)
        for (double& s : map.scores) s /= mx;
    return map;
}

SaliencyMap backproject_saliency(const std::vector<double>& scores, const LayerTrace& trace) {
    return backproject_saliency_from(scores, trace,
                                     static_cast<int>(trace.grids.size()) - 1);
}

RgbImage render_overlay(const Image& image, const SaliencyMap& saliency, double threshold) {
    if (image.height != saliency.height || image.width != saliency.width)
        throw InvalidInputError("render_overlay: image is " + std::to_string(image.height) + "x" +
                                std::to_string(image.width) + " but saliency is " +
                                std::to_string(saliency.height) + "x" +
                                std::to_string(saliency.width));
    RgbImage out(image.height, image.width);
    for (int i = 0; i < image.num_pixels(); ++i) {
        const auto base = static_cast<std::uint8_t>(std::lround(image.values[i] * 255.0));
        const double s = saliency.scores[i];
        std::uint8_t* px = out.rgb.data() + static_cast<std::size_t>(i) * 3;
        if (s > 0.0 && s >= threshold) {
            px[0] = 255;
            px[1] = px[2] = static_cast<std::uint8_t>(std::lround(base * (1.0 - s)));
        } else {
            px[0] = px[1] = px[2] = base;
        }
    }
    return out;
}

ClassificationReport build_report(const std::vector<double>& probs,
                                  const std::vector<std::string>& class_names, int top_n,
                                  SaliencyMap saliency, const std::string& mode) {
    if (probs.size() != class_names.size())
        throw InvalidInputError("build_report: probability and class name counts differ");
    if (top_n < 1) throw InvalidInputError("build_report: top N must be >= 1");
    if (top_n > static_cast<int>(probs.size()))
        throw InvalidInputError("build_report: top N exceeds class count");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0))
            throw InvalidInputError("build_report: probability outside [0, 1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw InvalidInputError("build_report: probabilities sum to " + std::to_string(sum));

    std::vector<int> idx(probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&probs](int a, int b) {
        return probs[a] != probs[b] ? probs[a] > probs[b] : a < b;
    });

    ClassificationReport rep;
    for (int k = 0; k < top_n; ++k) rep.top.push_back({class_names[idx[k]], probs[idx[k]]});
    rep.predicted = rep.top.front().class_name;
    rep.mode = mode;
    rep.saliency = std::move(saliency);
    return rep;
}

std::string report_text(const ClassificationReport& report) {
    std::string out;
    char line[160];
    for (const ReportEntry& e : report.top) {
        std::snprintf(line, sizeof(line), "%s: %.2f%%", e.class_name.c_str(),
                      e.probability * 100.0);
        out += line;
        out += "\n";
    }
    return out;
}

std::string report_json(const ClassificationReport& report, const std::string& saliency_file) {
    nlohmann::json j;
    j["predicted"] = report.predicted;
    if (!report.mode.empty()) j["mode"] = report.mode;
    j["topN"] = nlohmann::json::array();
    for (const ReportEntry& e : report.top)
        j["topN"].push_back({{"class", e.class_name}, {"prob", e.probability}});
    if (!saliency_file.empty()) j["saliency_file"] = saliency_file;
    return j.dump(2);
}

}  // namespace gridsage
