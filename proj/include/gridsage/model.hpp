#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridsage/grid_graph.hpp"
#include "gridsage/rng.hpp"
#include "gridsage/tensor.hpp"

namespace gridsage {

// The layer update combines the neighbour and self affine branches either by
// elementwise product (default) or by the standard additive rule.
enum class UpdateRule { product, sum };

std::string to_string(UpdateRule rule);
UpdateRule update_rule_from_string(const std::string& s);

struct SageLayerParams {
    Tensor w_neighbour;  // [d_in, d_out]
    Tensor b_neighbour;  // [d_out]
    Tensor w_self;       // [d_in, d_out]
    Tensor b_self;       // [d_out]
};

// Channel gate: shared two-layer MLP over the per-channel (avg, max) vertex
// summaries. Spatial gate: 2->1 combiner over the neighborhood-averaged
// per-vertex (avg, max) channel summaries.
struct AttentionParams {
    int reduction = 4;
    Tensor channel_w1, channel_b1;  // [d, d/r], [d/r]
    Tensor channel_w2, channel_b2;  // [d/r, d], [d]
    Tensor spatial_w, spatial_b;    // [2, 1], [1]
};

struct GnnLayerParams {
    SageLayerParams sage;
    AttentionParams attention;
    int pool_size = 2;
};

struct AffineParams {
    Tensor w, b;
};

// Architecture descriptor; fully determines every tensor shape.
struct ModelArch {
    int input_height = 128;
    int input_width = 128;
    int input_channels = 1;
    std::vector<int> layer_channels;  // d_out per GNN layer
    std::vector<int> pool_sizes;      // s per GNN layer
    int attention_reduction = 4;
    UpdateRule update_rule = UpdateRule::product;
    std::vector<int> head_hidden;  // hidden widths of the MLP head
    std::vector<std::string> class_names;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    int num_layers() const { return static_cast<int>(layer_channels.size()); }
    // Grid dims after layer `upto` pools (upto = num_layers() for the final grid).
    std::pair<int, int> grid_dims_after(int upto) const;
    int head_input_dim() const;
    void validate() const;
};

struct ModelParams {
    ModelArch arch;
    std::vector<GnnLayerParams> layers;
    std::vector<AffineParams> head;

    ModelParams clone() const;  // deep copy of all tensors
};

// 3-layer / channels 16-32-64 family, depth auto-scaled to the input size
// (layers = 0 picks the largest depth <= 3 leaving a final grid >= 8).
ModelArch default_arch(int input_height, int input_width,
                       std::vector<std::string> class_names, int layers = 0);

// Weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
ModelParams init_model(const ModelArch& arch, Rng& rng);

// Declaration-order traversal of every learnable tensor; this order defines
// the serialization layout and the optimizer slot assignment.
void visit_params(ModelParams& m,
                  const std::function<void(const std::string&, Tensor&, bool is_weight)>& fn);
void visit_params(const ModelParams& m,
                  const std::function<void(const std::string&, const Tensor&, bool is_weight)>& fn);

// Tape-bound copy: same payloads, every tensor watched for gradients.
ModelParams watch_params(Tape& tape, const ModelParams& m);

// ---- layer operations --------------------------------------------------

// z_i = mean of h over N(i) u {i}; the divisor is the in-bounds window size,
// so borders renormalize. Differentiable when h is on a tape.
Tensor sage_aggregate(const GridGraph& graph, const Tensor& h);

// h'_i = ReLU(branch_nb(z_i) o branch_self(h_i)), o = product or sum.
Tensor sage_update(const Tensor& z, const Tensor& h, const SageLayerParams& p, UpdateRule rule);

struct PoolResult {
    Tensor values;                     // [m, d]
    std::vector<std::int32_t> argmax;  // m*d: winning fine-vertex id per (coarse vertex, channel)
    GridGraph coarse;
};

// Per-channel max over each s x s window; ties go to the first vertex in
// row-major window order. The gradient routes only to the argmax entries.
PoolResult grid_max_pool(const Tensor& h, const GridGraph& grid, int s);

struct GatedResult {
    Tensor output;
    Tensor gate;
};

GatedResult channel_attention(const Tensor& h, const AttentionParams& p);
GatedResult spatial_attention(const Tensor& h, const GridGraph& grid, const AttentionParams& p);

// ---- full forward pass ---------------------------------------------------

struct LayerTraceEntry {
    Tensor pre_pool;                        // h^l on the finer grid
    std::vector<std::int32_t> pool_argmax;  // routing map coarse -> fine, per channel
    Tensor channel_gate;                    // [d]
    Tensor spatial_gate;                    // [m]
    Tensor output;                          // post-attention activations on the coarse grid
};

// Everything the explainability stage needs from one forward pass. When the
// pass was recorded with gradients the tape is kept alive here so saliency
// can differentiate the logits against any recorded activation.
struct LayerTrace {
    std::vector<LayerTraceEntry> layers;
    std::vector<GridGraph> grids;  // input grid + one per pool (num_layers + 1)
    Tensor input_features;
    Tensor logits;
    std::shared_ptr<Tape> tape;
};

enum class TraceMode { none, activations, gradients };

struct ForwardOutput {
    Tensor logits;
    std::optional<LayerTrace> trace;
};

// Topology chain for the model's input dims: input grid plus one coarse grid
// per layer. Shared across samples; forward never mutates it.
std::vector<GridGraph> build_pyramid(const ModelArch& arch);

// Hot-path forward over a prebuilt pyramid; x0 is [num_vertices, in_channels].
Tensor forward_on(const ModelParams& params, const std::vector<GridGraph>& pyramid,
                  const Tensor& x0, LayerTrace* trace);

// Validates graph dims against the model, then runs the pipeline:
// aggregate -> update -> max-pool -> channel attention -> spatial attention
// per layer, flatten, MLP head.
ForwardOutput forward(const ModelParams& model, const GridGraph& graph,
                      TraceMode mode = TraceMode::none);

// Stable softmax; probabilities sum to 1. Throws IntegrityError on
// non-finite logits.
std::vector<double> softmax_probs(const std::vector<double>& logits);

}  // namespace gridsage
