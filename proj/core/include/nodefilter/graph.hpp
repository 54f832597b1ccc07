#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "nodefilter/matrix.hpp"
#include "nodefilter/rng.hpp"
#include "nodefilter/sparse.hpp"

namespace nodefilter {

using Edge = std::pair<std::size_t, std::size_t>;

// Undirected simple graph. Edges are stored once with first < second and
// the adjacency CSR holds both directions with unit weights.
class Graph {
 public:
  Graph() = default;

  // Deduplicates (i, j)/(j, i) pairs. Throws FormatError on self-loops or
  // ids outside [0, n_nodes).
  static Graph from_edges(std::size_t n_nodes, std::span<const Edge> edges);

  std::size_t n_nodes() const noexcept { return n_nodes_; }
  std::size_t n_edges() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const SparseMatrix& adjacency() const noexcept { return adjacency_; }
  std::size_t degree(std::size_t node) const;

 private:
  std::size_t n_nodes_ = 0;
  std::vector<Edge> edges_;
  SparseMatrix adjacency_;
};

// Parses "i j" or "i<TAB>j" lines with 0-based ids; blank lines and lines
// starting with '#' are skipped. Without n_nodes the count is max id + 1.
Graph load_edge_list(std::istream& in, std::optional<std::size_t> n_nodes = std::nullopt);
Graph load_edge_list(const std::filesystem::path& path, std::optional<std::size_t> n_nodes = std::nullopt);

void write_edge_list(std::ostream& out, const Graph& g);

// 4-neighborhood grid; node id = row * width + col.
Graph grid_graph(std::size_t width, std::size_t height);

// G(n, p) random graph.
Graph random_graph(std::size_t n_nodes, double edge_probability, Rng& rng);

// D^{-1/2} A D^{-1/2}; degree-0 nodes get d^{-1/2} = 0.
SparseMatrix normalized_adjacency(const Graph& g);

// I - D^{-1/2} A D^{-1/2} with an explicit unit diagonal.
SparseMatrix normalized_laplacian(const Graph& g);

// N rows of comma-separated values, optional header line.
DenseMatrix read_features_csv(std::istream& in, bool has_header = false);
DenseMatrix read_features_csv(const std::filesystem::path& path, bool has_header = false);

}  // namespace nodefilter
