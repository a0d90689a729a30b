#include "gridsage/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gridsage/errors.hpp"

namespace gridsage {

std::string to_string(UpdateRule rule) {
    return rule == UpdateRule::product ? "product" : "sum";
}

UpdateRule update_rule_from_string(const std::string& s) {
    if (s == "product") return UpdateRule::product;
    if (s == "sum") return UpdateRule::sum;
    throw InvalidInputError("unknown update rule '" + s + "' (expected product or sum)");
}

std::pair<int, int> ModelArch::grid_dims_after(int upto) const {
    int h = input_height, w = input_width;
    for (int l = 0; l < upto; ++l) {
        const int s = pool_sizes[l];
        h = (h + s - 1) / s;
        w = (w + s - 1) / s;
    }
    return {h, w};
}

int ModelArch::head_input_dim() const {
    const auto [h, w] = grid_dims_after(num_layers());
    const int d = layer_channels.empty() ? input_channels : layer_channels.back();
    return h * w * d;
}

void ModelArch::validate() const {
    if (input_height < 1 || input_width < 1)
        throw InvalidInputError("input dims must be positive");
    if (input_channels < 1) throw InvalidInputError("input channels must be >= 1");
    if (layer_channels.size() != pool_sizes.size())
        throw InvalidInputError("layer_channels and pool_sizes must have equal length");
    if (attention_reduction < 1) throw InvalidInputError("attention reduction must be >= 1");
    for (std::size_t l = 0; l < layer_channels.size(); ++l) {
        if (layer_channels[l] < 1) throw InvalidInputError("layer channel count must be >= 1");
        if (pool_sizes[l] < 1) throw InvalidInputError("pool size must be >= 1");
        if (layer_channels[l] % attention_reduction != 0)
            throw InvalidInputError("attention reduction " + std::to_string(attention_reduction) +
                                    " does not divide layer width " +
                                    std::to_string(layer_channels[l]));
    }
    for (int d : head_hidden)
        if (d < 1) throw InvalidInputError("head hidden width must be >= 1");
    if (num_classes() < 2) throw InvalidInputError("model needs at least 2 classes");
}

ModelArch default_arch(int input_height, int input_width,
                       std::vector<std::string> class_names, int layers) {
    if (layers <= 0) {
        const int m = std::min(input_height, input_width);
        layers = 1;
        while (layers < 3 && (m >> (layers + 1)) >= 8) ++layers;
    }
    if (layers > 3) layers = 3;
    ModelArch arch;
    arch.input_height = input_height;
    arch.input_width = input_width;
    arch.input_channels = 1;
    const int widths[3] = {16, 32, 64};
    for (int l = 0; l < layers; ++l) {
        arch.layer_channels.push_back(widths[l]);
        arch.pool_sizes.push_back(2);
    }
    arch.attention_reduction = 4;
    arch.update_rule = UpdateRule::product;
    arch.head_hidden = {128};
    arch.class_names = std::move(class_names);
    return arch;
}

ModelParams init_model(const ModelArch& arch, Rng& rng) {
    arch.validate();
    ModelParams m;
    m.arch = arch;

    int d_in = arch.input_channels;
    for (int l = 0; l < arch.num_layers(); ++l) {
        const int d_out = arch.layer_channels[l];
        const int hidden = d_out / arch.attention_reduction;
        GnnLayerParams lp;
        lp.pool_size = arch.pool_sizes[l];
        lp.sage.w_neighbour = Tensor::zeros({d_in, d_out});
        lp.sage.b_neighbour = Tensor::zeros({d_out});
        lp.sage.w_self = Tensor::zeros({d_in, d_out});
        lp.sage.b_self = Tensor::zeros({d_out});
        lp.attention.reduction = arch.attention_reduction;
        lp.attention.channel_w1 = Tensor::zeros({d_out, hidden});
        lp.attention.channel_b1 = Tensor::zeros({hidden});
        lp.attention.channel_w2 = Tensor::zeros({hidden, d_out});
        lp.attention.channel_b2 = Tensor::zeros({d_out});
        lp.attention.spatial_w = Tensor::zeros({2, 1});
        lp.attention.spatial_b = Tensor::zeros({1});
        m.layers.push_back(std::move(lp));
        d_in = d_out;
    }

    int in = arch.head_input_dim();
    for (int h : arch.head_hidden) {
        m.head.push_back({Tensor::zeros({in, h}), Tensor::zeros({h})});
        in = h;
    }
    m.head.push_back({Tensor::zeros({in, arch.num_classes()}), Tensor::zeros({arch.num_classes()})});

    visit_params(m, [&rng](const std::string&, Tensor& t, bool is_weight) {
        if (!is_weight) return;
        const double bound = std::sqrt(6.0 / (t.shape[0] + t.shape[1]));
        for (double& v : *t.data) v = rng.uniform(-bound, bound);
    });
    // Under the product rule each update is (nb)(self); with zero biases both
    // branches start near zero and the product collapses the signal scale
    // layer over layer. Ones keep the branches near 1 so training can move.
    if (arch.update_rule == UpdateRule::product) {
        for (GnnLayerParams& lp : m.layers) {
            std::fill(lp.sage.b_neighbour.data->begin(), lp.sage.b_neighbour.data->end(), 1.0);
            std::fill(lp.sage.b_self.data->begin(), lp.sage.b_self.data->end(), 1.0);
        }
    }
    return m;
}

namespace {

template <typename MP, typename Fn>
void visit_impl(MP& m, Fn&& fn) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        auto& lp = m.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        fn(p + "w_neighbour", lp.sage.w_neighbour, true);
        fn(p + "b_neighbour", lp.sage.b_neighbour, false);
        fn(p + "w_self", lp.sage.w_self, true);
        fn(p + "b_self", lp.sage.b_self, false);
        fn(p + "channel_w1", lp.attention.channel_w1, true);
        fn(p + "channel_b1", lp.attention.channel_b1, false);
        fn(p + "channel_w2", lp.attention.channel_w2, true);
        fn(p + "channel_b2", lp.attention.channel_b2, false);
        fn(p + "spatial_w", lp.attention.spatial_w, true);
        fn(p + "spatial_b", lp.attention.spatial_b, false);
    }
    for (std::size_t i = 0; i < m.head.size(); ++i) {
        const std::string p = "head" + std::to_string(i) + ".";
        fn(p + "w", m.head[i].w, true);
        fn(p + "b", m.head[i].b, false);
    }
}

}  // namespace

void visit_params(ModelParams& m,
                  const std::function<void(const std::string&, Tensor&, bool)>& fn) {
    visit_impl(m, fn);
}

void visit_params(const ModelParams& m,
                  const std::function<void(const std::string&, const Tensor&, bool)>& fn) {
    visit_impl(m, fn);
}

ModelParams ModelParams::clone() const {
    ModelParams c = *this;
    visit_params(c, [](const std::string&, Tensor& t, bool) { t = t.clone(); });
    return c;
}

ModelParams watch_params(Tape& tape, const ModelParams& m) {
    ModelParams c = m;
    visit_params(c, [&tape](const std::string&, Tensor& t, bool) { t = tape.watch(t); });
    return c;
}

// ---- layer ops -----------------------------------------------------------

Tensor sage_aggregate(const GridGraph& graph, const Tensor& h) {
    if (h.shape.size() != 2 || h.shape[0] != graph.num_vertices())
        throw ShapeError("sage_aggregate: feature rows " +
                         (h.shape.empty() ? std::string("?") : std::to_string(h.shape[0])) +
                         " != vertex count " + std::to_string(graph.num_vertices()));
    const int height = graph.height, width = graph.width, d = h.shape[1];
    const int n = graph.num_vertices();

    Tensor out = Tensor::zeros({n, d});
    const double* hd = h.data->data();
    double* od = out.data->data();
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double* orow = od + (static_cast<std::size_t>(r) * width + c) * d;
            int cnt = 0;
            for (int rr = std::max(0, r - 1); rr <= std::min(height - 1, r + 1); ++rr) {
                for (int cc = std::max(0, c - 1); cc <= std::min(width - 1, c + 1); ++cc) {
                    const double* hrow = hd + (static_cast<std::size_t>(rr) * width + cc) * d;
                    for (int k = 0; k < d; ++k) orow[k] += hrow[k];
                    ++cnt;
                }
            }
            for (int k = 0; k < d; ++k) orow[k] /= cnt;
        }
    }

    if (h.tape != nullptr && h.node >= 0) {
        Tape* tp = h.tape;
        out.tape = tp;
        const int hn = h.node;
        out.node = tp->add_node(out.numel(), [hn, height, width, d](Tape& t, int self) {
            const std::vector<double>& go = t.grad_at(self);
            std::vector<double>& gh = t.grad_buf(hn);
            for (int r = 0; r < height; ++r) {
                for (int c = 0; c < width; ++c) {
                    const int r0 = std::max(0, r - 1), r1 = std::min(height - 1, r + 1);
                    const int c0 = std::max(0, c - 1), c1 = std::min(width - 1, c + 1);
                    const int cnt = (r1 - r0 + 1) * (c1 - c0 + 1);
                    const double* grow = go.data() + (static_cast<std::size_t>(r) * width + c) * d;
                    for (int rr = r0; rr <= r1; ++rr) {
                        for (int cc = c0; cc <= c1; ++cc) {
                            double* gh_row =
                                gh.data() + (static_cast<std::size_t>(rr) * width + cc) * d;
                            for (int k = 0; k < d; ++k) gh_row[k] += grow[k] / cnt;
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor sage_update(const Tensor& z, const Tensor& h, const SageLayerParams& p, UpdateRule rule) {
    const Tensor nb = affine(z, p.w_neighbour, p.b_neighbour);
    const Tensor self = affine(h, p.w_self, p.b_self);
    return relu(rule == UpdateRule::product ? hadamard(nb, self) : add(nb, self));
}

namespace {

PoolResult pool_with_coarse(const Tensor& h, const GridGraph& grid, int s, GridGraph coarse) {
    if (h.shape.size() != 2 || h.shape[0] != grid.num_vertices())
        throw ShapeError("grid_max_pool: feature rows != vertex count");
    const int d = h.shape[1];
    const int m = coarse.num_vertices();

    PoolResult res;
    res.values = Tensor::zeros({m, d});
    res.argmax.assign(static_cast<std::size_t>(m) * d, -1);
    const double* hd = h.data->data();
    double* od = res.values.data->data();
    for (int cr = 0; cr < coarse.height; ++cr) {
        for (int cc = 0; cc < coarse.width; ++cc) {
            const int v = cr * coarse.width + cc;
            const int r1 = std::min(cr * s + s, grid.height);
            const int c1 = std::min(cc * s + s, grid.width);
            for (int k = 0; k < d; ++k) {
                double best = 0.0;
                std::int32_t arg = -1;
                for (int r = cr * s; r < r1; ++r) {
                    for (int c = cc * s; c < c1; ++c) {
                        const std::int32_t fv = static_cast<std::int32_t>(r * grid.width + c);
                        const double val = hd[static_cast<std::size_t>(fv) * d + k];
                        if (arg < 0 || val > best) {
                            best = val;
                            arg = fv;
                        }
                    }
                }
                od[static_cast<std::size_t>(v) * d + k] = best;
                res.argmax[static_cast<std::size_t>(v) * d + k] = arg;
            }
        }
    }

    if (h.tape != nullptr && h.node >= 0) {
        Tape* tp = h.tape;
        res.values.tape = tp;
        const int hn = h.node;
        res.values.node =
            tp->add_node(res.values.numel(), [hn, d, idx = res.argmax](Tape& t, int self) {
                const std::vector<double>& go = t.grad_at(self);
                std::vector<double>& gh = t.grad_buf(hn);
                for (std::size_t i = 0; i < go.size(); ++i)
                    gh[static_cast<std::size_t>(idx[i]) * d + (i % d)] += go[i];
            });
    }
    res.coarse = std::move(coarse);
    return res;
}

}  // namespace

PoolResult grid_max_pool(const Tensor& h, const GridGraph& grid, int s) {
    return pool_with_coarse(h, grid, s, coarsen_grid(grid, s));
}

GatedResult channel_attention(const Tensor& h, const AttentionParams& p) {
    if (h.shape.size() != 2 || h.shape[1] != p.channel_w1.shape[0])
        throw ShapeError("channel_attention: feature width does not match attention params");
    const int n = h.shape[0], d = h.shape[1];

    const Tensor avg = reshape(mean_axis(h, 0), {1, d});
    const Tensor mx = reshape(max_axis(h, 0).values, {1, d});
    const auto mlp = [&p](const Tensor& row) {
        return affine(relu(affine(row, p.channel_w1, p.channel_b1)), p.channel_w2, p.channel_b2);
    };
    GatedResult res;
    res.gate = reshape(sigmoid(add(mlp(avg), mlp(mx))), {d});
    res.output = hadamard(h, tile_rows(res.gate, n));
    return res;
}

GatedResult spatial_attention(const Tensor& h, const GridGraph& grid, const AttentionParams& p) {
    if (h.shape.size() != 2 || h.shape[0] != grid.num_vertices())
        throw ShapeError("spatial_attention: feature rows != vertex count");
    const int n = h.shape[0], d = h.shape[1];

    const Tensor per_vertex = concat_cols(mean_axis(h, 1), max_axis(h, 1).values);  // [n,2]
    const Tensor pooled = sage_aggregate(grid, per_vertex);
    GatedResult res;
    res.gate = reshape(sigmoid(affine(pooled, p.spatial_w, p.spatial_b)), {n});
    res.output = hadamard(h, tile_cols(res.gate, d));
    return res;
}

// ---- forward ---------------------------------------------------------------

namespace {

GridGraph grid_topology(int height, int width) {
    Image blank(height, width, 0.0);
    GridGraph g = build_grid_graph(blank);
    g.channels = 0;
    g.features.clear();
    return g;
}

}  // namespace

std::vector<GridGraph> build_pyramid(const ModelArch& arch) {
    std::vector<GridGraph> pyr;
    pyr.push_back(grid_topology(arch.input_height, arch.input_width));
    for (int l = 0; l < arch.num_layers(); ++l)
        pyr.push_back(coarsen_grid(pyr.back(), arch.pool_sizes[l]));
    return pyr;
}

Tensor forward_on(const ModelParams& params, const std::vector<GridGraph>& pyramid,
                  const Tensor& x0, LayerTrace* trace) {
    const ModelArch& arch = params.arch;
    if (static_cast<int>(pyramid.size()) != arch.num_layers() + 1)
        throw IntegrityError("grid pyramid depth does not match model");
    if (x0.shape.size() != 2 || x0.shape[0] != pyramid[0].num_vertices() ||
        x0.shape[1] != arch.input_channels)
        throw ShapeError("forward: input features must be [" +
                         std::to_string(pyramid[0].num_vertices()) + ", " +
                         std::to_string(arch.input_channels) + "]");

    if (trace != nullptr) {
        trace->grids = pyramid;
        trace->input_features = x0;
        trace->layers.clear();
    }

    Tensor h = x0;
    for (int l = 0; l < arch.num_layers(); ++l) {
        const GnnLayerParams& lp = params.layers[l];
        const Tensor z = sage_aggregate(pyramid[l], h);
        const Tensor hu = sage_update(z, h, lp.sage, arch.update_rule);
        PoolResult pool = pool_with_coarse(hu, pyramid[l], lp.pool_size, pyramid[l + 1]);
        const GatedResult ca = channel_attention(pool.values, lp.attention);
        const GatedResult sa = spatial_attention(ca.output, pyramid[l + 1], lp.attention);
        if (trace != nullptr)
            trace->layers.push_back(
                LayerTraceEntry{hu, std::move(pool.argmax), ca.gate, sa.gate, sa.output});
        h = sa.output;
    }

    Tensor flat = reshape(h, {1, h.numel()});
    for (std::size_t i = 0; i + 1 < params.head.size(); ++i)
        flat = relu(affine(flat, params.head[i].w, params.head[i].b));
    Tensor logits = reshape(affine(flat, params.head.back().w, params.head.back().b),
                            {arch.num_classes()});
    if (trace != nullptr) trace->logits = logits;
    return logits;
}

ForwardOutput forward(const ModelParams& model, const GridGraph& graph, TraceMode mode) {
    const ModelArch& arch = model.arch;
    if (graph.height != arch.input_height || graph.width != arch.input_width)
        throw InvalidInputError("model expects " + std::to_string(arch.input_height) + "x" +
                                std::to_string(arch.input_width) + " input, got " +
                                std::to_string(graph.height) + "x" + std::to_string(graph.width));
    if (graph.channels != arch.input_channels)
        throw InvalidInputError("model expects " + std::to_string(arch.input_channels) +
                                " input channel(s), got " + std::to_string(graph.channels));

    const Tensor x0 = Tensor::from({graph.num_vertices(), graph.channels}, graph.features);
    const std::vector<GridGraph> pyramid = build_pyramid(arch);

    ForwardOutput out;
    if (mode == TraceMode::none) {
        out.logits = forward_on(model, pyramid, x0, nullptr);
        return out;
    }
    LayerTrace trace;
    if (mode == TraceMode::gradients) {
        trace.tape = std::make_shared<Tape>();
        out.logits = forward_on(model, pyramid, trace.tape->watch(x0), &trace);
    } else {
        out.logits = forward_on(model, pyramid, x0, &trace);
    }
    out.trace = std::move(trace);
    return out;
}

std::vector<double> softmax_probs(const std::vector<double>& logits) {
    if (logits.size() < 2) throw InvalidInputError("softmax needs at least 2 classes");
    double m = logits[0];
    for (double v : logits) {
        if (!std::isfinite(v)) throw IntegrityError("softmax: non-finite logit");
        m = std::max(m, v);
    }
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

}  // namespace gridsage
