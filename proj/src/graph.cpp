#include "gridcast/graph.hpp"

#include <cmath>

#include "gridcast/dataio.hpp"

namespace gridcast {

RoadGraph extract_graph(const Tensor& mask) {
  if (mask.rank() != 2) throw ValidationError("road mask must be (H,W)");
  RoadGraph g;
  g.height = mask.dim(0);
  g.width = mask.dim(1);
  g.node_index.assign(static_cast<size_t>(g.height * g.width), -1);
  auto on = [&](int64_t y, int64_t x) { return mask.get({y, x}) != 0.0; };
  for (int64_t y = 0; y < g.height; ++y)
    for (int64_t x = 0; x < g.width; ++x)
      if (on(y, x)) {
        g.node_index[static_cast<size_t>(y * g.width + x)] = g.num_nodes();
        g.nodes.push_back({y, x});
      }

  // 8-neighborhood scanned in row-major order keeps columns sorted.
  static constexpr int64_t kOff[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                         {0, 1},   {1, -1}, {1, 0},  {1, 1}};
  SparseMatrix& a = g.adjacency;
  a.n_rows = g.num_nodes();
  a.n_cols = g.num_nodes();
  a.row_ptr.push_back(0);
  for (const PixelCoord& p : g.nodes) {
    for (const auto& off : kOff) {
      int64_t y = p.row + off[0], x = p.col + off[1];
      if (y < 0 || y >= g.height || x < 0 || x >= g.width) continue;
      int64_t j = g.node_index[static_cast<size_t>(y * g.width + x)];
      if (j < 0) continue;
      a.col_idx.push_back(j);
      a.values.push_back(1.0);
    }
    a.row_ptr.push_back(a.nnz());
  }
  a.validate();
  return g;
}

namespace {

std::vector<int64_t> degrees(const RoadGraph& g) {
  std::vector<int64_t> d(static_cast<size_t>(g.num_nodes()));
  for (int64_t i = 0; i < g.num_nodes(); ++i)
    d[static_cast<size_t>(i)] =
        g.adjacency.row_ptr[static_cast<size_t>(i) + 1] - g.adjacency.row_ptr[static_cast<size_t>(i)];
  return d;
}

}  // namespace

SparseMatrix normalized_adjacency(const RoadGraph& g) {
  auto deg = degrees(g);
  int64_t n = g.num_nodes();
  std::vector<double> inv_sqrt(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    inv_sqrt[static_cast<size_t>(i)] = 1.0 / std::sqrt(static_cast<double>(deg[static_cast<size_t>(i)] + 1));
  SparseMatrix s;
  s.n_rows = n;
  s.n_cols = n;
  s.row_ptr.push_back(0);
  for (int64_t i = 0; i < n; ++i) {
    int64_t lo = g.adjacency.row_ptr[static_cast<size_t>(i)];
    int64_t hi = g.adjacency.row_ptr[static_cast<size_t>(i) + 1];
    bool placed_diag = false;
    auto push_diag = [&] {
      s.col_idx.push_back(i);
      s.values.push_back(inv_sqrt[static_cast<size_t>(i)] * inv_sqrt[static_cast<size_t>(i)]);
      placed_diag = true;
    };
    for (int64_t p = lo; p < hi; ++p) {
      int64_t j = g.adjacency.col_idx[static_cast<size_t>(p)];
      if (!placed_diag && j > i) push_diag();
      s.col_idx.push_back(j);
      s.values.push_back(inv_sqrt[static_cast<size_t>(i)] * inv_sqrt[static_cast<size_t>(j)]);
    }
    if (!placed_diag) push_diag();
    s.row_ptr.push_back(s.nnz());
  }
  s.validate();
  return s;
}

SparseMatrix scaled_laplacian(const RoadGraph& g) {
  auto deg = degrees(g);
  int64_t n = g.num_nodes();
  SparseMatrix s;
  s.n_rows = n;
  s.n_cols = n;
  s.row_ptr.push_back(0);
  for (int64_t i = 0; i < n; ++i) {
    int64_t lo = g.adjacency.row_ptr[static_cast<size_t>(i)];
    int64_t hi = g.adjacency.row_ptr[static_cast<size_t>(i) + 1];
    if (deg[static_cast<size_t>(i)] == 0) {
      // L_sym diagonal is 0 by the degree-0 convention, so L~ = -1 here.
      s.col_idx.push_back(i);
      s.values.push_back(-1.0);
      s.row_ptr.push_back(s.nnz());
      continue;
    }
    // Degree > 0: diagonal of L_sym - I is exactly 0, store off-diagonals only.
    for (int64_t p = lo; p < hi; ++p) {
      int64_t j = g.adjacency.col_idx[static_cast<size_t>(p)];
      double v = -1.0 / std::sqrt(static_cast<double>(deg[static_cast<size_t>(i)]) *
                                  static_cast<double>(deg[static_cast<size_t>(j)]));
      s.col_idx.push_back(j);
      s.values.push_back(v);
    }
    s.row_ptr.push_back(s.nnz());
  }
  s.validate();
  return s;
}

SparseMatrix mean_adjacency(const RoadGraph& g) {
  auto deg = degrees(g);
  SparseMatrix s = g.adjacency;
  for (int64_t i = 0; i < s.n_rows; ++i) {
    double inv = deg[static_cast<size_t>(i)] > 0 ? 1.0 / static_cast<double>(deg[static_cast<size_t>(i)]) : 0.0;
    for (int64_t p = s.row_ptr[static_cast<size_t>(i)]; p < s.row_ptr[static_cast<size_t>(i) + 1]; ++p)
      s.values[static_cast<size_t>(p)] = inv;
  }
  return s;
}

GraphOperators build_operators(const RoadGraph& g) {
  return {normalized_adjacency(g), scaled_laplacian(g), mean_adjacency(g)};
}

Tensor grid_to_nodes(const Tensor& grid, const RoadGraph& g) {
  if (grid.rank() != 3 || grid.dim(1) != g.height || grid.dim(2) != g.width)
    throw ValidationError("grid_to_nodes expects (C," + std::to_string(g.height) + "," +
                          std::to_string(g.width) + "), got " + dims_to_string(grid.dims()));
  int64_t c = grid.dim(0);
  int64_t n = g.num_nodes();
  Tensor out = Tensor::zeros({n, c}, grid.dtype());
  if (!is_float_dtype(grid.dtype())) throw ValidationError("grid_to_nodes requires float grids");
  int64_t plane = g.height * g.width;
  if (grid.dtype() == Dtype::Float32) {
    auto src = grid.f32();
    auto dst = out.f32();
    for (int64_t i = 0; i < n; ++i) {
      int64_t p = g.nodes[static_cast<size_t>(i)].row * g.width + g.nodes[static_cast<size_t>(i)].col;
      for (int64_t ch = 0; ch < c; ++ch)
        dst[static_cast<size_t>(i * c + ch)] = src[static_cast<size_t>(ch * plane + p)];
    }
  } else {
    auto src = grid.f64();
    auto dst = out.f64();
    for (int64_t i = 0; i < n; ++i) {
      int64_t p = g.nodes[static_cast<size_t>(i)].row * g.width + g.nodes[static_cast<size_t>(i)].col;
      for (int64_t ch = 0; ch < c; ++ch)
        dst[static_cast<size_t>(i * c + ch)] = src[static_cast<size_t>(ch * plane + p)];
    }
  }
  return out;
}

Tensor nodes_to_grid(const Tensor& x, const RoadGraph& g, int64_t height, int64_t width) {
  if (x.rank() != 2 || x.dim(0) != g.num_nodes())
    throw ValidationError("nodes_to_grid expects (N,C) with N = node count");
  if (height != g.height || width != g.width)
    throw ValidationError("nodes_to_grid grid dims do not match the graph");
  int64_t c = x.dim(1);
  Tensor out = Tensor::zeros({c, height, width}, x.dtype());
  if (!is_float_dtype(x.dtype())) throw ValidationError("nodes_to_grid requires float inputs");
  int64_t plane = height * width;
  if (x.dtype() == Dtype::Float32) {
    auto src = x.f32();
    auto dst = out.f32();
    for (int64_t i = 0; i < g.num_nodes(); ++i) {
      int64_t p = g.nodes[static_cast<size_t>(i)].row * width + g.nodes[static_cast<size_t>(i)].col;
      for (int64_t ch = 0; ch < c; ++ch)
        dst[static_cast<size_t>(ch * plane + p)] = src[static_cast<size_t>(i * c + ch)];
    }
  } else {
    auto src = x.f64();
    auto dst = out.f64();
    for (int64_t i = 0; i < g.num_nodes(); ++i) {
      int64_t p = g.nodes[static_cast<size_t>(i)].row * width + g.nodes[static_cast<size_t>(i)].col;
      for (int64_t ch = 0; ch < c; ++ch)
        dst[static_cast<size_t>(ch * plane + p)] = src[static_cast<size_t>(i * c + ch)];
    }
  }
  return out;
}

void save_graph(const std::string& path, const RoadGraph& g) {
  int64_t n = g.num_nodes();
  if (n == 0) throw IoError("refusing to save an empty graph (file dims must be >= 1)");
  std::vector<uint64_t> nodes(static_cast<size_t>(2 * n));
  for (int64_t i = 0; i < n; ++i) {
    nodes[static_cast<size_t>(2 * i)] = static_cast<uint64_t>(g.nodes[static_cast<size_t>(i)].row);
    nodes[static_cast<size_t>(2 * i + 1)] = static_cast<uint64_t>(g.nodes[static_cast<size_t>(i)].col);
  }
  std::vector<uint64_t> row_ptr(g.adjacency.row_ptr.begin(), g.adjacency.row_ptr.end());
  std::vector<Tensor> records;
  records.push_back(Tensor::from_u64({n, 2}, std::move(nodes)));
  records.push_back(Tensor::from_u64({n + 1}, std::move(row_ptr)));
  if (g.adjacency.nnz() > 0) {
    std::vector<uint64_t> cols(g.adjacency.col_idx.begin(), g.adjacency.col_idx.end());
    records.push_back(Tensor::from_u64({g.adjacency.nnz()}, std::move(cols)));
  } else {
    records.push_back(Tensor::from_u64({1}, {0}));  // placeholder for an edgeless graph
  }
  write_tensor_records(path, records);
}

RoadGraph load_graph(const std::string& path, int64_t height, int64_t width) {
  auto records = read_tensor_records(path, 3);
  const Tensor& nodes = records[0];
  const Tensor& row_ptr = records[1];
  const Tensor& cols = records[2];
  if (nodes.rank() != 2 || nodes.dim(1) != 2 || nodes.dtype() != Dtype::UInt64)
    throw IoError("graph file: nodes record must be (N,2) uint64");
  int64_t n = nodes.dim(0);
  if (row_ptr.dtype() != Dtype::UInt64 || row_ptr.numel() != n + 1)
    throw IoError("graph file: row_ptr record must be (N+1) uint64");
  RoadGraph g;
  g.height = height;
  g.width = width;
  g.node_index.assign(static_cast<size_t>(height * width), -1);
  auto nv = nodes.u64();
  for (int64_t i = 0; i < n; ++i) {
    int64_t r = static_cast<int64_t>(nv[static_cast<size_t>(2 * i)]);
    int64_t c = static_cast<int64_t>(nv[static_cast<size_t>(2 * i + 1)]);
    if (r >= height || c >= width) throw IoError("graph file: node outside the given grid");
    g.nodes.push_back({r, c});
    g.node_index[static_cast<size_t>(r * width + c)] = i;
  }
  auto rp = row_ptr.u64();
  int64_t nnz = static_cast<int64_t>(rp[static_cast<size_t>(n)]);
  g.adjacency.n_rows = n;
  g.adjacency.n_cols = n;
  g.adjacency.row_ptr.assign(rp.begin(), rp.end());
  auto cv = cols.u64();
  if (static_cast<int64_t>(cv.size()) < nnz) throw IoError("graph file: col_idx record too short");
  g.adjacency.col_idx.assign(cv.begin(), cv.begin() + nnz);
  g.adjacency.values.assign(static_cast<size_t>(nnz), 1.0);
  g.adjacency.validate();
  return g;
}

}  // namespace gridcast
