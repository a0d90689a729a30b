#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "gridsage/image.hpp"

namespace gridsage {

struct PixelCoord {
    int row = 0;
    int col = 0;
    bool operator==(const PixelCoord&) const = default;
    bool operator<(const PixelCoord& o) const {
        return row != o.row ? row < o.row : col < o.col;
    }
};

// 8-connected grid graph over an image (or a pooled version of one).
// Vertices are numbered row-major from the top-left pixel. Edges are
// undirected, unweighted, stored once as (lo, hi) pairs in sorted order.
//
// pixel_map holds, per vertex, the window origin in the next-finer grid:
// for an image-level graph that is the vertex's own (row, col); for a graph
// produced by coarsen_grid it is the top-left corner of the pooling window.
struct GridGraph {
    int height = 0;
    int width = 0;
    int pool_stride = 1;  // window size that produced this grid; 1 at image level
    int channels = 0;
    std::vector<double> features;  // num_vertices x channels, row-major
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;
    std::vector<PixelCoord> pixel_map;

    int num_vertices() const { return height * width; }

    PixelCoord pixel_of(int vertex) const { return {vertex / width, vertex % width}; }
    int vertex_at(int row, int col) const { return row * width + col; }

    double feature(int vertex, int channel) const {
        return features[static_cast<std::size_t>(vertex) * channels + channel];
    }

    // In-bounds 8-neighborhood written into out, row-major order, self excluded.
    // Returns the neighbor count. No allocation; used by the aggregation hot path.
    int neighbors_of(int vertex, std::array<std::int32_t, 8>& out) const;
};

// Builds the image-level graph: one vertex per pixel, king-move edges,
// feature channel 0 = grayscale value.
GridGraph build_grid_graph(const Image& image);

// In-bounds 8-neighborhood of a vertex, row-major order.
// Throws InvalidInputError for an out-of-range id.
std::vector<std::int32_t> neighbors(const GridGraph& graph, int vertex);

// Grid of dims ceil(H/s) x ceil(W/s) with fresh 8-neighborhood edges; border
// windows may be partial. pixel_map records each coarse vertex's window
// origin in the finer grid. Carries no features.
GridGraph coarsen_grid(const GridGraph& graph, int s);

// Receptive window at input resolution of a vertex in the last grid of the
// chain (image-level grid first). Throws IntegrityError if the chain dims
// are inconsistent with the recorded strides.
std::vector<PixelCoord> vertex_to_pixels(const std::vector<GridGraph>& chain, int coarse_vertex);

}  // namespace gridsage
