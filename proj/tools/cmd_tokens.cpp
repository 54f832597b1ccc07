#include <chrono>
#include <filesystem>
#include <memory>
#include <ostream>
#include <string>

#include <CLI11.hpp>

#include "cli_common.hpp"
#include "commands.hpp"
#include "nodefilter/graph.hpp"
#include "nodefilter/tokens.hpp"

namespace nodefilter::cli {

namespace {

struct TokensOptions {
  std::string graph;
  std::string features;
  bool features_header = false;
  std::string basis;
  std::size_t order = 10;
  bool cheb_shifted = false;
  std::string out;
};

int run_tokens(const TokensOptions& o, Streams io) {
  const auto start = std::chrono::steady_clock::now();
  const BasisKind basis = parse_basis(o.basis);
  const DenseMatrix x = read_features_csv(std::filesystem::path(o.features), o.features_header);
  if (x.rows() == 0 || x.cols() == 0) throw FormatError("feature file '" + o.features + "' holds no values");
  const Graph g = load_edge_list(std::filesystem::path(o.graph), x.rows());

  std::vector<std::string> warnings;
  const TokenTensor tokens = compute_tokens(g, x, basis, o.order, o.cheb_shifted, &warnings);
  for (const std::string& w : warnings) io.err << "warning: " << w << '\n';
  write_token_cache(tokens, std::filesystem::path(o.out));

  const std::size_t nnz = uses_adjacency(basis) ? normalized_adjacency(g).nnz() : normalized_laplacian(g).nnz();
  io.out << Record()
                .add("command", "tokens")
                .add("basis", to_string(basis))
                .add("N", tokens.n_nodes())
                .add("K", tokens.order())
                .add("d", tokens.dim())
                .add("nnz", nnz)
                .add("bytes", std::filesystem::file_size(o.out))
                .add("wall_ms", elapsed_ms(start))
                .str()
         << '\n';
  return kOk;
}

}  // namespace

void add_tokens_command(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<TokensOptions>();
  CLI::App* sub = app.add_subcommand("tokens", "Precompute polynomial tokens into a PTK1 cache");
  sub->add_option("--graph", o->graph, "Edge list, one 'i j' pair per line")->required();
  sub->add_option("--features", o->features, "Node features CSV, one row per node")->required();
  sub->add_flag("--features-header", o->features_header, "Skip the first line of the features file");
  sub->add_option("--basis", o->basis, "mono | bern | cheb | opt")->required();
  sub->add_option("--K", o->order, "Polynomial order")->required();
  sub->add_flag("--cheb-shifted", o->cheb_shifted, "Chebyshev recurrence on L - I");
  sub->add_option("--out", o->out, "Output cache path")->required();
  sub->callback([o, &runner] { runner = [o](Streams io) { return run_tokens(*o, io); }; });
}

}  // namespace nodefilter::cli
