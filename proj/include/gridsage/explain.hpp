#pragma once

#include <string>
#include <vector>

#include "gridsage/image.hpp"
#include "gridsage/model.hpp"

namespace gridsage {

// Per-pixel importance at input resolution, max-normalized to [0, 1].
struct SaliencyMap {
    int height = 0;
    int width = 0;
    std::vector<double> scores;

    bool empty() const { return scores.empty(); }
    double at(int r, int c) const { return scores[static_cast<std::size_t>(r) * width + c]; }
};

enum class SaliencyMode { gradcam, activation };

std::string to_string(SaliencyMode mode);
SaliencyMode saliency_mode_from_string(const std::string& s);

// Vertex scores per layer, on each layer's output grid (last entry = final
// grid). gradcam weighs activations by the mean gradient of the target logit
// and needs a trace recorded with gradients; activation uses |h| only.
std::vector<std::vector<double>> vertex_importance(const LayerTrace& trace, int target_class,
                                                   SaliencyMode mode);

// Routes final-grid scores back to pixels through the recorded max-pool
// argmax chain (winner takes score, collisions keep the max), then
// max-normalizes.
SaliencyMap backproject_saliency(const std::vector<double>& scores, const LayerTrace& trace);

// As backproject_saliency but starting from layer `layer` of the trace.
SaliencyMap backproject_saliency_from(const std::vector<double>& scores, const LayerTrace& trace,
                                      int layer);

// Grayscale base replicated to RGB; pixels with saliency >= threshold (and
// > 0) tinted red: R = 255, G = B = base * (1 - saliency).
RgbImage render_overlay(const Image& image, const SaliencyMap& saliency, double threshold);

struct ReportEntry {
    std::string class_name;
    double probability = 0.0;
};

// The reporting payload: top-N class probabilities plus the saliency map.
struct ClassificationReport {
    std::vector<ReportEntry> top;  // descending probability, ties by class index
    std::string predicted;         // == top.front().class_name
    std::string mode;              // saliency scoring mode, empty if none
    SaliencyMap saliency;
};

ClassificationReport build_report(const std::vector<double>& probs,
                                  const std::vector<std::string>& class_names, int top_n,
                                  SaliencyMap saliency = {}, const std::string& mode = "");

// One "NAME: PP.PP%" line per entry.
std::string report_text(const ClassificationReport& report);
std::string report_json(const ClassificationReport& report, const std::string& saliency_file);

}  // namespace gridsage
