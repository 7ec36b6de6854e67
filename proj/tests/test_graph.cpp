#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>

#include "gridcast/dataio.hpp"
#include "gridcast/graph.hpp"
#include "oracle_utils.hpp"

using namespace gridcast;

namespace {

Eigen::MatrixXd to_eigen(const Tensor& dense) {
  Eigen::MatrixXd m(dense.dim(0), dense.dim(1));
  for (int64_t i = 0; i < dense.dim(0); ++i)
    for (int64_t j = 0; j < dense.dim(1); ++j) m(i, j) = dense.get({i, j});
  return m;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("empty mask gives an empty graph") {
  RoadGraph g = extract_graph(Tensor::zeros({4, 4}, Dtype::Byte));
  CHECK(g.num_nodes() == 0);
  CHECK(g.adjacency.nnz() == 0);
}

TEST_CASE("full 3x3 mask has the expected degrees") {
  RoadGraph g = extract_graph(Tensor::full({3, 3}, 1.0, Dtype::Byte));
  CHECK(g.num_nodes() == 9);
  auto degree = [&](int64_t i) {
    return g.adjacency.row_ptr[static_cast<size_t>(i) + 1] -
           g.adjacency.row_ptr[static_cast<size_t>(i)];
  };
  CHECK(degree(0) == 3);  // corners
  CHECK(degree(2) == 3);
  CHECK(degree(6) == 3);
  CHECK(degree(8) == 3);
  CHECK(degree(4) == 8);  // center
  CHECK(degree(1) == 5);  // edges
}

TEST_CASE("diagonal neighbors are connected") {
  Tensor mask = Tensor::zeros({3, 3}, Dtype::Byte);
  mask.set({0, 0}, 1.0);
  mask.set({1, 1}, 1.0);
  RoadGraph g = extract_graph(mask);
  CHECK(g.num_nodes() == 2);
  CHECK(g.adjacency.nnz() == 2);  // one undirected edge, stored both ways
  CHECK(g.adjacency.col_idx[0] == 1);
  CHECK(g.adjacency.col_idx[1] == 0);
}

TEST_CASE("node order is row-major and the index map inverts it") {
  Tensor mask = Tensor::zeros({3, 4}, Dtype::Byte);
  mask.set({2, 1}, 1.0);
  mask.set({0, 3}, 1.0);
  mask.set({1, 0}, 1.0);
  RoadGraph g = extract_graph(mask);
  REQUIRE(g.num_nodes() == 3);
  CHECK(g.nodes[0].row == 0);
  CHECK(g.nodes[0].col == 3);
  CHECK(g.nodes[1].row == 1);
  CHECK(g.nodes[1].col == 0);
  CHECK(g.nodes[2].row == 2);
  CHECK(g.nodes[2].col == 1);
  CHECK(g.node_index[0 * 4 + 3] == 0);
  CHECK(g.node_index[1 * 4 + 0] == 1);
  CHECK(g.node_index[2 * 4 + 1] == 2);
  CHECK(g.node_index[0] == -1);
}

TEST_CASE("adjacency is exactly symmetric") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    RoadGraph g = testutil::random_mask_graph(rng, 6, 6, 0.4);
    Tensor a = densify(g.adjacency);
    for (int64_t i = 0; i < g.num_nodes(); ++i) {
      CHECK(a.get({i, i}) == 0.0);  // no self loops
      for (int64_t j = 0; j < g.num_nodes(); ++j) CHECK(a.get({i, j}) == a.get({j, i}));
    }
  }
}

TEST_CASE("normalized adjacency handles the trivial graphs") {
  Tensor mask = Tensor::zeros({3, 3}, Dtype::Byte);
  mask.set({0, 0}, 1.0);
  RoadGraph isolated = extract_graph(mask);
  SparseMatrix s = normalized_adjacency(isolated);
  CHECK(s.nnz() == 1);
  CHECK(s.values[0] == 1.0);

  mask.set({0, 1}, 1.0);
  RoadGraph pair = extract_graph(mask);
  Tensor d = densify(normalized_adjacency(pair));
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 2; ++j) CHECK(d.get({i, j}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("normalized adjacency matches the dense formula") {
  Rng rng(22);
  for (int trial = 0; trial < 25; ++trial) {
    RoadGraph g = testutil::random_mask_graph(rng, 3, 4, 0.5);
    if (g.num_nodes() == 0) continue;
    Tensor got = densify(normalized_adjacency(g));
    CHECK(max_abs_diff(got, testutil::normalized_adjacency_oracle(g)) < 1e-12);
  }
}

TEST_CASE("scaled laplacian matches the dense formula and the hand cases") {
  Tensor mask = Tensor::zeros({3, 3}, Dtype::Byte);
  mask.set({0, 0}, 1.0);
  RoadGraph isolated = extract_graph(mask);
  SparseMatrix l = scaled_laplacian(isolated);
  CHECK(l.nnz() == 1);
  CHECK(l.values[0] == -1.0);

  mask.set({0, 1}, 1.0);
  RoadGraph pair = extract_graph(mask);
  // degree-1 nodes: L_sym = [[1,-1],[-1,1]], minus I leaves the off-diagonals
  Tensor d = densify(scaled_laplacian(pair));
  CHECK(d.get({0, 0}) == 0.0);
  CHECK(d.get({1, 1}) == 0.0);
  CHECK(d.get({0, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(d.get({1, 0}) == doctest::Approx(-1.0).epsilon(1e-15));

  Rng rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    RoadGraph g = testutil::random_mask_graph(rng, 3, 4, 0.5);
    if (g.num_nodes() == 0) continue;
    Tensor got = densify(scaled_laplacian(g));
    CHECK(max_abs_diff(got, testutil::scaled_laplacian_oracle(g)) < 1e-12);
  }
}

TEST_CASE("operator spectra stay inside the unit interval") {
  Rng rng(24);
  for (int trial = 0; trial < 8; ++trial) {
    RoadGraph g = testutil::random_mask_graph(rng, 8, 8, 0.4);
    if (g.num_nodes() == 0 || g.num_nodes() > 64) continue;
    Tensor s = densify(normalized_adjacency(g));
    Tensor l = densify(scaled_laplacian(g));
    // symmetry first
    for (int64_t i = 0; i < g.num_nodes(); ++i)
      for (int64_t j = 0; j < g.num_nodes(); ++j) {
        CHECK(std::abs(s.get({i, j}) - s.get({j, i})) < 1e-12);
        CHECK(std::abs(l.get({i, j}) - l.get({j, i})) < 1e-12);
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(s));
    CHECK(es.eigenvalues().minCoeff() >= -1.0 - 1e-9);
    CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> el(to_eigen(l));
    CHECK(el.eigenvalues().minCoeff() >= -1.0 - 1e-9);
    CHECK(el.eigenvalues().maxCoeff() <= 1.0 + 1e-9);
    // every entry of S is positive where defined, so row sums are positive
    for (int64_t i = 0; i < g.num_nodes(); ++i) {
      double row = 0.0;
      for (int64_t j = 0; j < g.num_nodes(); ++j) row += s.get({i, j});
      CHECK(row > 0.0);
    }
  }
}

TEST_CASE("mean adjacency rows sum to one on connected nodes") {
  Rng rng(25);
  RoadGraph g = testutil::random_mask_graph(rng, 6, 6, 0.5);
  SparseMatrix m = mean_adjacency(g);
  for (int64_t i = 0; i < g.num_nodes(); ++i) {
    double row = 0.0;
    for (int64_t p = m.row_ptr[static_cast<size_t>(i)]; p < m.row_ptr[static_cast<size_t>(i) + 1];
         ++p)
      row += m.values[static_cast<size_t>(p)];
    bool isolated = g.adjacency.row_ptr[static_cast<size_t>(i) + 1] ==
                    g.adjacency.row_ptr[static_cast<size_t>(i)];
    CHECK(row == doctest::Approx(isolated ? 0.0 : 1.0).epsilon(1e-12));
  }
}

TEST_CASE("grid/node gather-scatter round trip") {
  Rng rng(26);
  RoadGraph g = testutil::random_mask_graph(rng, 5, 7, 0.4);
  if (g.num_nodes() == 0) return;
  Tensor x = testutil::random_tensor(rng, {g.num_nodes(), 6}, Dtype::Float32);
  Tensor grid = nodes_to_grid(x, g, 5, 7);
  CHECK(grid.dims() == std::vector<int64_t>{6, 5, 7});
  CHECK(max_abs_diff(grid_to_nodes(grid, g), x) == 0.0);
  // off-road pixels are zero
  for (int64_t y = 0; y < 5; ++y)
    for (int64_t x2 = 0; x2 < 7; ++x2) {
      if (g.node_index[static_cast<size_t>(y * 7 + x2)] >= 0) continue;
      for (int64_t c = 0; c < 6; ++c) REQUIRE(grid.get({c, y, x2}) == 0.0);
    }
}

TEST_CASE("single node scatter places one pixel") {
  Tensor mask = Tensor::zeros({4, 5}, Dtype::Byte);
  mask.set({2, 3}, 1.0);
  RoadGraph g = extract_graph(mask);
  Tensor x = Tensor::full({1, 2}, 4.5, Dtype::Float32);
  Tensor grid = nodes_to_grid(x, g, 4, 5);
  double total = 0.0;
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t y = 0; y < 4; ++y)
      for (int64_t xx = 0; xx < 5; ++xx) total += grid.get({c, y, xx});
  CHECK(total == 9.0);
  CHECK(grid.get({0, 2, 3}) == 4.5);
  CHECK(grid.get({1, 2, 3}) == 4.5);
}

TEST_CASE("empty graph scatters to an all-zero grid") {
  RoadGraph g = extract_graph(Tensor::zeros({3, 3}, Dtype::Byte));
  Tensor grid = nodes_to_grid(Tensor::zeros({0, 4}, Dtype::Float32), g, 3, 3);
  CHECK(max_abs_diff(grid, Tensor::zeros({4, 3, 3}, Dtype::Float32)) == 0.0);
}

TEST_CASE("graph files round trip and are byte-for-byte reproducible") {
  Rng rng(27);
  RoadGraph g = testutil::random_mask_graph(rng, 8, 9, 0.45);
  REQUIRE(g.num_nodes() > 0);
  std::string p1 = temp_path("gc_g1.gct");
  std::string p2 = temp_path("gc_g2.gct");
  save_graph(p1, g);
  save_graph(p2, g);
  auto bytes = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  CHECK(bytes(p1) == bytes(p2));

  RoadGraph back = load_graph(p1, 8, 9);
  CHECK(back.num_nodes() == g.num_nodes());
  CHECK(back.adjacency.row_ptr == g.adjacency.row_ptr);
  CHECK(back.adjacency.col_idx == g.adjacency.col_idx);
  for (int64_t i = 0; i < g.num_nodes(); ++i) {
    CHECK(back.nodes[static_cast<size_t>(i)].row == g.nodes[static_cast<size_t>(i)].row);
    CHECK(back.nodes[static_cast<size_t>(i)].col == g.nodes[static_cast<size_t>(i)].col);
  }
  CHECK(back.node_index == g.node_index);
}

TEST_CASE("saving an empty graph is refused") {
  RoadGraph g = extract_graph(Tensor::zeros({3, 3}, Dtype::Byte));
  CHECK_THROWS_AS(save_graph(temp_path("gc_g3.gct"), g), IoError);
}
