#include "nodefilter/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <memory>
#include <ostream>

#include "nodefilter/error.hpp"
#include "nodefilter/rng.hpp"

namespace nodefilter {

namespace {

constexpr std::array<TaskDefinition, 6> kTasks{{
    {"mixed-low-pass", "low-pass-5", "low-pass-20"},
    {"mixed-high-pass", "high-pass-5", "high-pass-20"},
    {"mixed-band-pass", "band-pass-5", "band-pass-20"},
    {"mixed-rejection-pass", "rejection-pass-5", "rejection-pass-20"},
    {"low-and-high-pass", "low-pass-10", "high-pass-10"},
    {"band-and-rejection-pass", "band-pass-10", "rejection-pass-10"},
}};

}  // namespace

std::span<const TaskDefinition> synthetic_tasks() { return kTasks; }

const TaskDefinition& find_task(std::string_view name) {
  for (const TaskDefinition& t : kTasks)
    if (t.name == name) return t;
  std::string known;
  for (const TaskDefinition& t : kTasks) known += (known.empty() ? "" : ", ") + std::string(t.name);
  throw ConfigError("unknown synthetic task '" + std::string(name) + "' (known: " + known + ")");
}

std::vector<double> uniform_signal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = rng.uniform();
  return x;
}

SyntheticTask make_synthetic_task(const Graph& g, std::span<const double> x, std::string_view task,
                                  std::vector<std::string>* warnings) {
  const TaskDefinition& def = find_task(task);
  const EigenDecomposition eig = jacobi_eigh(normalized_laplacian(g).to_dense());
  return make_synthetic_task(g, eig, x, FilterSpec::named(def.filter1), FilterSpec::named(def.filter2),
                             std::string(def.name), warnings);
}

SyntheticTask make_synthetic_task(const Graph& g, const EigenDecomposition& eig, std::span<const double> x,
                                  std::string_view task, std::vector<std::string>* warnings) {
  const TaskDefinition& def = find_task(task);
  return make_synthetic_task(g, eig, x, FilterSpec::named(def.filter1), FilterSpec::named(def.filter2),
                             std::string(def.name), warnings);
}

SyntheticTask make_synthetic_task(const Graph& g, const EigenDecomposition& eig, std::span<const double> x,
                                  const FilterSpec& h1, const FilterSpec& h2, std::string name,
                                  std::vector<std::string>* warnings) {
  const std::size_t n = g.n_nodes();
  if (x.size() != n) throw ShapeError("synthetic task: signal length differs from node count");
  if (eig.eigenvalues.size() != n) throw ShapeError("synthetic task: eigendecomposition size differs from node count");
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("synthetic task: signal values must lie in [0, 1]");
  }
  SyntheticTask t;
  t.name = std::move(name);
  t.graph = g;
  t.x.assign(x.begin(), x.end());
  t.filter1 = h1.name();
  t.filter2 = h2.name();
  t.regime.resize(n);
  DenseMatrix x1(n, 1), x2(n, 1);
  std::size_t count1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    t.regime[i] = x[i] < 0.5 ? 1 : 2;
    if (t.regime[i] == 1) {
      x1(i, 0) = x[i];
      ++count1;
    } else {
      x2(i, 0) = x[i];
    }
  }
  if (warnings != nullptr && (count1 == 0 || count1 == n)) {
    warnings->push_back("synthetic task '" + t.name + "': every node falls in regime " + (count1 ? "1" : "2"));
  }
  const DenseMatrix z1 = spectral_filter(eig, h1, x1);
  const DenseMatrix z2 = spectral_filter(eig, h2, x2);
  t.z.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.z[i] = t.regime[i] == 1 ? z1(i, 0) : z2(i, 0);
  return t;
}

void write_task_csv(std::ostream& out, const SyntheticTask& task) {
  out << "node_id,x,z,regime\n" << std::setprecision(17);
  for (std::size_t i = 0; i < task.x.size(); ++i) out << i << ',' << task.x[i] << ',' << task.z[i] << ',' << task.regime[i] << '\n';
}

std::string_view to_string(FitModel model) {
  switch (model) {
    case FitModel::PolyAttn: return "polyattn";
    case FitModel::UniFilter: return "unifilter";
    case FitModel::SelfAttn: return "selfattn";
  }
  return "unknown";
}

FitModel parse_fit_model(std::string_view name) {
  if (name == "polyattn") return FitModel::PolyAttn;
  if (name == "unifilter") return FitModel::UniFilter;
  if (name == "selfattn") return FitModel::SelfAttn;
  throw ConfigError("unknown model '" + std::string(name) + "' (expected polyattn, unifilter or selfattn)");
}

namespace {

AttnRegressorConfig regressor_config(const FitConfig& c, Activation activation) {
  AttnRegressorConfig a;
  a.order = c.order;
  a.input_dim = 1;
  a.hidden = c.hidden;
  a.heads = c.heads;
  a.mlp_factor = c.mlp_factor;
  a.r = c.r;
  a.activation = activation;
  a.seed = c.seed;
  return a;
}

}  // namespace

std::size_t attn_regressor_parameter_count(const FitConfig& config) {
  AttnRegressor model(regressor_config(config, Activation::Tanh));
  return model.parameter_count();
}

std::size_t matched_unifilter_width(std::size_t target, std::size_t order, std::size_t input_dim) {
  // (d_in + K+1 + 2) w + 1 parameters
  const double per_width = static_cast<double>(input_dim + order + 3);
  const double w = std::round((static_cast<double>(target) - 1.0) / per_width);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::max(w, 1.0)));
}

FitResult fit_task(const SyntheticTask& task, FitModel kind, const FitConfig& config, const TokenTensor* tokens) {
  const std::size_t n = task.graph.n_nodes();
  DenseMatrix x(n, 1, task.x);
  TokenTensor computed;
  if (tokens == nullptr) {
    computed = compute_tokens(task.graph, x, config.basis, config.order, config.cheb_shifted);
    tokens = &computed;
  }
  if (tokens->basis() != config.basis || tokens->order() != config.order || tokens->dim() != 1 ||
      tokens->n_nodes() != n || (config.basis == BasisKind::Chebyshev && tokens->cheb_shifted() != config.cheb_shifted)) {
    throw MismatchError("fit_task: supplied tokens do not match the fit configuration");
  }

  std::unique_ptr<Model> model;
  AttnRegressor* attn = nullptr;
  UniFilterModel* uni = nullptr;
  if (kind == FitModel::UniFilter) {
    UniFilterConfig u;
    u.order = config.order;
    u.input_dim = 1;
    u.width = config.unifilter_width != 0
                  ? config.unifilter_width
                  : matched_unifilter_width(attn_regressor_parameter_count(config), config.order);
    u.seed = config.seed;
    auto m = std::make_unique<UniFilterModel>(u);
    uni = m.get();
    model = std::move(m);
  } else {
    auto m = std::make_unique<AttnRegressor>(
        regressor_config(config, kind == FitModel::PolyAttn ? Activation::Tanh : Activation::Softmax));
    attn = m.get();
    model = std::move(m);
  }

  TrainConfig train;
  train.lr = config.lr;
  train.max_epochs = config.max_epochs;
  train.patience = std::min(config.patience, config.max_epochs);
  train.batch_size = 0;
  train.loss = LossKind::MeanSquaredError;
  train.seed = config.seed;
  TrainTargets targets;
  targets.values = task.z;
  const TrainResult trained = train_loop(*model, *tokens, targets, SplitMasks::all(n), train);

  FitResult r;
  r.model = kind;
  r.parameter_count = model->parameter_count();
  r.epochs_run = trained.history.size();
  r.best_epoch = trained.best_epoch;
  r.history = trained.history;
  const DenseMatrix out = predict(*model, *tokens);  // also refreshes attention scores
  r.prediction = out.column(0);
  r.sse = sse(r.prediction, task.z);
  r.r2 = r2_score(r.prediction, task.z);
  if (attn != nullptr) {
    r.alpha = attn->effective_coefficients();
  } else {
    const std::vector<double> a = uni->effective_coefficients();
    r.alpha = DenseMatrix(n, a.size());
    for (std::size_t i = 0; i < n; ++i) std::copy(a.begin(), a.end(), r.alpha.row(i).begin());
  }
  return r;
}

FilterClusters cluster_learned_filters(const DenseMatrix& alpha, std::size_t k, BasisKind basis,
                                       const BasisOptions& options, std::size_t grid_points, std::uint64_t seed) {
  if (grid_points < 2) throw ConfigError("cluster_learned_filters: need at least two grid points");
  FilterClusters out;
  out.kmeans = kmeans(alpha, k, seed);
  out.lambdas.resize(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) out.lambdas[i] = 2.0 * static_cast<double>(i) / static_cast<double>(grid_points - 1);
  out.curves = DenseMatrix(grid_points, k);
  for (std::size_t c = 0; c < k; ++c) {
    const std::vector<double> curve = filter_response(out.kmeans.centroids.row(c), basis, out.lambdas, options);
    out.curves.set_column(c, curve);
  }
  return out;
}

double regime_agreement(std::span<const std::size_t> assignments, std::span<const int> regime) {
  if (assignments.size() != regime.size() || assignments.empty()) {
    throw ShapeError("regime_agreement: assignment and regime lengths differ");
  }
  std::size_t direct = 0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] > 1) throw ConfigError("regime_agreement: expects two clusters");
    direct += (assignments[i] == 0) == (regime[i] == 1);
  }
  const double n = static_cast<double>(assignments.size());
  return std::max(static_cast<double>(direct), n - static_cast<double>(direct)) / n;
}

void write_curves_csv(std::ostream& out, const FilterClusters& clusters) {
  out << "lambda";
  for (std::size_t c = 0; c < clusters.curves.cols(); ++c) out << ",cluster_" << c;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < clusters.lambdas.size(); ++i) {
    out << clusters.lambdas[i];
    for (std::size_t c = 0; c < clusters.curves.cols(); ++c) out << ',' << clusters.curves(i, c);
    out << '\n';
  }
}

void write_alpha_csv(std::ostream& out, const DenseMatrix& alpha) {
  out << "node_id";
  for (std::size_t k = 0; k < alpha.cols(); ++k) out << ",alpha_" << k;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < alpha.rows(); ++i) {
    out << i;
    for (double v : alpha.row(i)) out << ',' << v;
    out << '\n';
  }
}

}  // namespace nodefilter
