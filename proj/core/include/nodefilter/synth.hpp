#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nodefilter/filters.hpp"
#include "nodefilter/graph.hpp"
#include "nodefilter/linalg.hpp"
#include "nodefilter/model.hpp"
#include "nodefilter/tokens.hpp"
#include "nodefilter/training.hpp"

namespace nodefilter {

// Two-regime task: nodes with x < 0.5 follow filter1, the rest filter2.
struct TaskDefinition {
  std::string_view name;
  std::string_view filter1;
  std::string_view filter2;
};

std::span<const TaskDefinition> synthetic_tasks();
// Throws ConfigError for an unknown task name.
const TaskDefinition& find_task(std::string_view name);

struct SyntheticTask {
  std::string name;
  Graph graph;
  std::vector<double> x;
  std::vector<double> z;
  std::vector<int> regime;  // 1 where x < 0.5, else 2
  std::string filter1;
  std::string filter2;
};

// Seeded uniform [0, 1) noise.
std::vector<double> uniform_signal(std::size_t n, std::uint64_t seed);

// z = U h1(L) U^T x1 on regime-1 nodes and U h2(L) U^T x2 on regime-2
// nodes, where x1 / x2 keep their regime's entries and zero the rest.
// Throws ConfigError when x leaves [0, 1]; a single-regime signal only adds
// a warning.
SyntheticTask make_synthetic_task(const Graph& g, std::span<const double> x, std::string_view task,
                                  std::vector<std::string>* warnings = nullptr);
// Same, reusing an eigendecomposition of the graph's normalized Laplacian.
SyntheticTask make_synthetic_task(const Graph& g, const EigenDecomposition& eig, std::span<const double> x,
                                  std::string_view task, std::vector<std::string>* warnings = nullptr);
SyntheticTask make_synthetic_task(const Graph& g, const EigenDecomposition& eig, std::span<const double> x,
                                  const FilterSpec& h1, const FilterSpec& h2, std::string name,
                                  std::vector<std::string>* warnings = nullptr);

// Columns: node_id, x, z, regime.
void write_task_csv(std::ostream& out, const SyntheticTask& task);

enum class FitModel { PolyAttn, UniFilter, SelfAttn };

std::string_view to_string(FitModel model);
// "polyattn", "unifilter" or "selfattn"; throws ConfigError otherwise.
FitModel parse_fit_model(std::string_view name);

struct FitConfig {
  BasisKind basis = BasisKind::Chebyshev;
  std::size_t order = 10;
  bool cheb_shifted = true;
  std::size_t hidden = 8;
  std::size_t heads = 1;
  std::size_t mlp_factor = 2;
  double r = 1.0;
  std::size_t unifilter_width = 0;  // 0: match the attention model's parameter count
  double lr = 1e-3;
  std::size_t max_epochs = 5000;
  std::size_t patience = 400;
  std::uint64_t seed = 0;
};

struct FitResult {
  FitModel model = FitModel::PolyAttn;
  double r2 = 0.0;
  double sse = 0.0;
  std::size_t parameter_count = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::vector<double> prediction;
  DenseMatrix alpha;  // N x (K+1) effective per-node coefficients
  std::vector<EpochRecord> history;
};

// UniFilter width whose parameter count is closest to `target`.
std::size_t matched_unifilter_width(std::size_t target, std::size_t order, std::size_t input_dim = 1);
std::size_t attn_regressor_parameter_count(const FitConfig& config);

// Full-batch regression of z on every node. `tokens` must match the config
// when given; otherwise they are computed from the task's signal.
FitResult fit_task(const SyntheticTask& task, FitModel model, const FitConfig& config,
                   const TokenTensor* tokens = nullptr);

struct FilterClusters {
  KMeansResult kmeans;
  std::vector<double> lambdas;
  DenseMatrix curves;  // lambdas.size() x k centroid responses
};

// k-means over the rows of alpha, centroid responses on an evenly spaced
// grid over [0, 2].
FilterClusters cluster_learned_filters(const DenseMatrix& alpha, std::size_t k, BasisKind basis,
                                       const BasisOptions& options = {}, std::size_t grid_points = 256,
                                       std::uint64_t seed = 0);

// Fraction of nodes whose cluster agrees with their regime under the best
// matching of the two cluster ids; requires k = 2.
double regime_agreement(std::span<const std::size_t> assignments, std::span<const int> regime);

// Columns: lambda, cluster_0 .. cluster_{k-1}.
void write_curves_csv(std::ostream& out, const FilterClusters& clusters);
// Columns: node_id, alpha_0 .. alpha_K.
void write_alpha_csv(std::ostream& out, const DenseMatrix& alpha);

}  // namespace nodefilter
