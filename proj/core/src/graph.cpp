#include "nodefilter/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "nodefilter/error.hpp"

namespace nodefilter {

Graph Graph::from_edges(std::size_t n_nodes, std::span<const Edge> edges) {
  Graph g;
  g.n_nodes_ = n_nodes;
  g.edges_.reserve(edges.size());
  for (auto [i, j] : edges) {
    if (i >= n_nodes || j >= n_nodes) {
      throw FormatError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                        ") references a node outside [0, " + std::to_string(n_nodes) + ")");
    }
    if (i == j) throw FormatError("self-loop on node " + std::to_string(i));
    g.edges_.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  g.edges_.erase(std::unique(g.edges_.begin(), g.edges_.end()), g.edges_.end());

  std::vector<Triplet> entries;
  entries.reserve(2 * g.edges_.size());
  for (auto [i, j] : g.edges_) {
    entries.push_back({i, j, 1.0});
    entries.push_back({j, i, 1.0});
  }
  g.adjacency_ = SparseMatrix::from_triplets(n_nodes, n_nodes, std::move(entries));
  return g;
}

std::size_t Graph::degree(std::size_t node) const {
  const auto offsets = adjacency_.row_offsets();
  return offsets[node + 1] - offsets[node];
}

namespace {

std::size_t parse_node_id(const std::string& token, std::size_t line_no) {
  if (token.empty()) throw FormatError("empty node id", line_no);
  if (token[0] == '-') throw FormatError("negative node id '" + token + "'", line_no);
  std::size_t pos = 0;
  unsigned long long value = 0;
  try {
    value = std::stoull(token, &pos);
  } catch (const std::exception&) {
    throw FormatError("invalid node id '" + token + "'", line_no);
  }
  if (pos != token.size()) throw FormatError("invalid node id '" + token + "'", line_no);
  return static_cast<std::size_t>(value);
}

}  // namespace

Graph load_edge_list(std::istream& in, std::optional<std::size_t> n_nodes) {
  std::vector<Edge> edges;
  std::size_t max_id = 0;
  bool any = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::string a, b, extra;
    if (!(fields >> a >> b)) throw FormatError("expected two node ids", line_no);
    if (fields >> extra) throw FormatError("unexpected trailing field '" + extra + "'", line_no);
    const std::size_t i = parse_node_id(a, line_no);
    const std::size_t j = parse_node_id(b, line_no);
    if (i == j) throw FormatError("self-loop on node " + std::to_string(i), line_no);
    if (n_nodes && (i >= *n_nodes || j >= *n_nodes)) {
      throw FormatError("node id " + std::to_string(std::max(i, j)) + " >= declared node count " +
                            std::to_string(*n_nodes),
                        line_no);
    }
    max_id = std::max({max_id, i, j});
    any = true;
    edges.emplace_back(i, j);
  }
  const std::size_t n = n_nodes ? *n_nodes : (any ? max_id + 1 : 0);
  return Graph::from_edges(n, edges);
}

Graph load_edge_list(const std::filesystem::path& path, std::optional<std::size_t> n_nodes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open edge list '" + path.string() + "'");
  return load_edge_list(in, n_nodes);
}

void write_edge_list(std::ostream& out, const Graph& g) {
  for (auto [i, j] : g.edges()) out << i << ' ' << j << '\n';
}

Graph grid_graph(std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ConfigError("grid_graph: dimensions must be positive");
  std::vector<Edge> edges;
  edges.reserve(width * (height - 1) + height * (width - 1));
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t id = r * width + c;
      if (c + 1 < width) edges.emplace_back(id, id + 1);
      if (r + 1 < height) edges.emplace_back(id, id + width);
    }
  }
  return Graph::from_edges(width * height, edges);
}

Graph random_graph(std::size_t n_nodes, double edge_probability, Rng& rng) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n_nodes; ++i)
    for (std::size_t j = i + 1; j < n_nodes; ++j)
      if (rng.uniform() < edge_probability) edges.emplace_back(i, j);
  return Graph::from_edges(n_nodes, edges);
}

namespace {

std::vector<double> inv_sqrt_degrees(const Graph& g) {
  std::vector<double> out(g.n_nodes());
  for (std::size_t i = 0; i < g.n_nodes(); ++i) {
    const auto d = g.degree(i);
    out[i] = d == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(d));
  }
  return out;
}

}  // namespace

SparseMatrix normalized_adjacency(const Graph& g) {
  const auto scale = inv_sqrt_degrees(g);
  std::vector<Triplet> entries;
  entries.reserve(2 * g.n_edges());
  for (auto [i, j] : g.edges()) {
    // Same product order for both directions keeps the matrix exactly symmetric.
    const double v = scale[i] * scale[j];
    entries.push_back({i, j, v});
    entries.push_back({j, i, v});
  }
  return SparseMatrix::from_triplets(g.n_nodes(), g.n_nodes(), std::move(entries));
}

SparseMatrix normalized_laplacian(const Graph& g) {
  const auto scale = inv_sqrt_degrees(g);
  std::vector<Triplet> entries;
  entries.reserve(2 * g.n_edges() + g.n_nodes());
  for (std::size_t i = 0; i < g.n_nodes(); ++i) entries.push_back({i, i, 1.0});
  for (auto [i, j] : g.edges()) {
    const double v = -(scale[i] * scale[j]);
    entries.push_back({i, j, v});
    entries.push_back({j, i, v});
  }
  return SparseMatrix::from_triplets(g.n_nodes(), g.n_nodes(), std::move(entries));
}

DenseMatrix read_features_csv(std::istream& in, bool has_header) {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (has_header && line_no == 1) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t count = 0;
    std::stringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw FormatError("invalid number '" + cell + "'", line_no);
      }
      if (cell.find_first_not_of(" \t", pos) != std::string::npos)
        throw FormatError("invalid number '" + cell + "'", line_no);
      values.push_back(v);
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) {
      throw FormatError("expected " + std::to_string(cols) + " columns, found " + std::to_string(count),
                        line_no);
    }
    ++rows;
  }
  return DenseMatrix(rows, cols, std::move(values));
}

DenseMatrix read_features_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open feature file '" + path.string() + "'");
  return read_features_csv(in, has_header);
}

}  // namespace nodefilter
