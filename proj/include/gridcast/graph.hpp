#pragma once

#include <string>
#include <vector>

#include "gridcast/sparse.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

struct PixelCoord {
  int64_t row = 0;
  int64_t col = 0;
};

// Road pixels in row-major order with an 8-neighborhood adjacency.
// node_index is a dense H*W map, -1 for off-road pixels.
struct RoadGraph {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<PixelCoord> nodes;
  std::vector<int64_t> node_index;
  SparseMatrix adjacency;  // N x N, symmetric, zero diagonal

  int64_t num_nodes() const { return static_cast<int64_t>(nodes.size()); }
};

RoadGraph extract_graph(const Tensor& mask);  // (H,W) byte, nonzero = road

// D^{-1/2} (A+I) D^{-1/2} with D the degree of A+I. Isolated nodes get 1.
SparseMatrix normalized_adjacency(const RoadGraph& g);

// L_sym - I (lambda_max fixed at 2). Degree-0 nodes take L_sym diagonal 0,
// so their entry is -1.
SparseMatrix scaled_laplacian(const RoadGraph& g);

// Row-normalized adjacency D^{-1} A without self-loops; rows of isolated
// nodes are empty, which realizes a zero neighbor mean.
SparseMatrix mean_adjacency(const RoadGraph& g);

struct GraphOperators {
  SparseMatrix s_hat;     // SGConv propagation
  SparseMatrix l_tilde;   // ChebConv operator
  SparseMatrix mean_adj;  // SAGE neighbor mean
};

GraphOperators build_operators(const RoadGraph& g);

Tensor grid_to_nodes(const Tensor& grid, const RoadGraph& g);  // (C,H,W) -> (N,C)
Tensor nodes_to_grid(const Tensor& x, const RoadGraph& g, int64_t height,
                     int64_t width);  // (N,C) -> (C,H,W), zeros off-road

// Graph file: three records (nodes (N,2) u64, row_ptr, col_idx).
void save_graph(const std::string& path, const RoadGraph& g);
RoadGraph load_graph(const std::string& path, int64_t height, int64_t width);

}  // namespace gridcast
