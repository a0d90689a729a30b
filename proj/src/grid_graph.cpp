#include "gridsage/grid_graph.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "gridsage/errors.hpp"

namespace gridsage {

namespace {

void add_grid_edges(GridGraph& g) {
    // Each vertex links to its east, south-west, south, and south-east
    // neighbors; that enumerates every undirected 8-neighborhood pair once.
    g.edges.clear();
    g.edges.reserve(static_cast<std::size_t>(4) * g.height * g.width);
    for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) {
            const std::int32_t v = static_cast<std::int32_t>(g.vertex_at(r, c));
            if (c + 1 < g.width) g.edges.emplace_back(v, v + 1);
            if (r + 1 < g.height) {
                const std::int32_t below = v + g.width;
                if (c > 0) g.edges.emplace_back(v, below - 1);
                g.edges.emplace_back(v, below);
                if (c + 1 < g.width) g.edges.emplace_back(v, below + 1);
            }
        }
    }
    std::sort(g.edges.begin(), g.edges.end());
}

}  // namespace

int GridGraph::neighbors_of(int vertex, std::array<std::int32_t, 8>& out) const {
    const int r = vertex / width;
    const int c = vertex % width;
    int n = 0;
    for (int dr = -1; dr <= 1; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= height) continue;
        for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int cc = c + dc;
            if (cc < 0 || cc >= width) continue;
            out[n++] = static_cast<std::int32_t>(rr * width + cc);
        }
    }
    return n;
}

GridGraph build_grid_graph(const Image& image) {
    image.validate();
    GridGraph g;
    g.height = image.height;
    g.width = image.width;
    g.pool_stride = 1;
    g.channels = 1;
    g.features = image.values;
    g.pixel_map.resize(static_cast<std::size_t>(g.num_vertices()));
    for (int v = 0; v < g.num_vertices(); ++v) g.pixel_map[v] = g.pixel_of(v);
    add_grid_edges(g);
    return g;
}

std::vector<std::int32_t> neighbors(const GridGraph& graph, int vertex) {
    if (vertex < 0 || vertex >= graph.num_vertices())
        throw InvalidInputError("vertex id " + std::to_string(vertex) + " out of range [0, " +
                                std::to_string(graph.num_vertices()) + ")");
    std::array<std::int32_t, 8> buf;
    const int n = graph.neighbors_of(vertex, buf);
    return std::vector<std::int32_t>(buf.begin(), buf.begin() + n);
}

GridGraph coarsen_grid(const GridGraph& graph, int s) {
    if (s < 1) throw InvalidInputError("pool window size must be >= 1, got " + std::to_string(s));
    GridGraph coarse;
    coarse.height = (graph.height + s - 1) / s;
    coarse.width = (graph.width + s - 1) / s;
    coarse.pool_stride = s;
    coarse.channels = 0;
    coarse.pixel_map.resize(static_cast<std::size_t>(coarse.num_vertices()));
    for (int r = 0; r < coarse.height; ++r)
        for (int c = 0; c < coarse.width; ++c)
            coarse.pixel_map[coarse.vertex_at(r, c)] = {r * s, c * s};
    add_grid_edges(coarse);
    return coarse;
}

std::vector<PixelCoord> vertex_to_pixels(const std::vector<GridGraph>& chain, int coarse_vertex) {
    if (chain.empty()) throw InvalidInputError("empty grid chain");
    const GridGraph& last = chain.back();
    if (coarse_vertex < 0 || coarse_vertex >= last.num_vertices())
        throw InvalidInputError("vertex id " + std::to_string(coarse_vertex) + " out of range");

    for (std::size_t k = 1; k < chain.size(); ++k) {
        const int s = chain[k].pool_stride;
        if (s < 1 || chain[k].height != (chain[k - 1].height + s - 1) / s ||
            chain[k].width != (chain[k - 1].width + s - 1) / s)
            throw IntegrityError("grid chain level " + std::to_string(k) +
                                 " dims inconsistent with recorded pool stride " +
                                 std::to_string(s));
    }

    std::set<PixelCoord> current{last.pixel_of(coarse_vertex)};
    for (std::size_t k = chain.size() - 1; k >= 1; --k) {
        const int s = chain[k].pool_stride;
        const GridGraph& finer = chain[k - 1];
        std::set<PixelCoord> expanded;
        for (const PixelCoord& p : current) {
            const int r0 = p.row * s;
            const int c0 = p.col * s;
            const int r1 = std::min(r0 + s, finer.height);
            const int c1 = std::min(c0 + s, finer.width);
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c) expanded.insert({r, c});
        }
        current = std::move(expanded);
    }
    return std::vector<PixelCoord>(current.begin(), current.end());
}

}  // namespace gridsage
