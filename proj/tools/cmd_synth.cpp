#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cli_common.hpp"
#include "commands.hpp"
#include "nodefilter/synth.hpp"

namespace nodefilter::cli {

namespace {

struct SynthOptions {
  std::string config;
  std::string out;
  std::optional<std::string> task, grid, basis, model, signal;
  std::optional<std::size_t> epochs, patience, order, hidden, heads, mlp_factor, clusters, unifilter_width;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, r;
  std::optional<bool> cheb_shifted;
};

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
  const auto x = text.find('x');
  std::size_t w = 0, h = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument("no separator");
    std::size_t p1 = 0, p2 = 0;
    w = std::stoul(text.substr(0, x), &p1);
    h = std::stoul(text.substr(x + 1), &p2);
    if (p1 != x || p2 != text.size() - x - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("grid must look like WxH, got '" + text + "'");
  }
  if (w == 0 || h == 0) throw ConfigError("grid dimensions must be positive");
  return {w, h};
}

template <typename T>
void apply(json& obj, const char* key, const std::optional<T>& flag) {
  if (flag) obj[key] = *flag;
}

template <typename T>
T read(const json& obj, const char* key) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config.synth.") + key + " has the wrong type");
  }
}

int run_synth(const SynthOptions& o, Streams io) {
  const auto start = std::chrono::steady_clock::now();
  json cfg = o.config.empty() ? json::object() : load_json(o.config);
  reject_unknown_keys(cfg, {"synth"}, "config");
  json s = cfg.value("synth", json::object());
  reject_unknown_keys(s, {"basis", "cheb_shifted", "clusters", "epochs", "grid", "heads", "hidden", "lr", "mlp_factor",
                          "model", "order", "patience", "r", "seed", "signal", "task", "unifilter_width"},
                      "config.synth");
  apply(s, "task", o.task);
  apply(s, "grid", o.grid);
  apply(s, "basis", o.basis);
  apply(s, "model", o.model);
  apply(s, "signal", o.signal);
  apply(s, "epochs", o.epochs);
  apply(s, "patience", o.patience);
  apply(s, "order", o.order);
  apply(s, "hidden", o.hidden);
  apply(s, "heads", o.heads);
  apply(s, "mlp_factor", o.mlp_factor);
  apply(s, "clusters", o.clusters);
  apply(s, "unifilter_width", o.unifilter_width);
  apply(s, "seed", o.seed);
  apply(s, "lr", o.lr);
  apply(s, "r", o.r);
  apply(s, "cheb_shifted", o.cheb_shifted);

  const FitConfig defaults;
  const json fallback = {{"grid", "24x24"},
                         {"basis", "cheb"},
                         {"model", "polyattn"},
                         {"signal", ""},
                         {"epochs", defaults.max_epochs},
                         {"patience", defaults.patience},
                         {"order", defaults.order},
                         {"hidden", defaults.hidden},
                         {"heads", defaults.heads},
                         {"mlp_factor", defaults.mlp_factor},
                         {"clusters", 2},
                         {"unifilter_width", 0},
                         {"seed", 0},
                         {"lr", defaults.lr},
                         {"r", defaults.r},
                         {"cheb_shifted", defaults.cheb_shifted}};
  for (const auto& [key, value] : fallback.items())
    if (!s.contains(key)) s[key] = value;
  if (!s.contains("task")) throw ConfigError("no task given (--task or synth.task)");

  const TaskDefinition& def = find_task(read<std::string>(s, "task"));
  const auto [width, height] = parse_grid(read<std::string>(s, "grid"));
  FitConfig fc;
  fc.basis = parse_basis(read<std::string>(s, "basis"));
  const FitModel kind = parse_fit_model(read<std::string>(s, "model"));
  fc.max_epochs = read<std::size_t>(s, "epochs");
  fc.patience = read<std::size_t>(s, "patience");
  fc.order = read<std::size_t>(s, "order");
  fc.hidden = read<std::size_t>(s, "hidden");
  fc.heads = read<std::size_t>(s, "heads");
  fc.mlp_factor = read<std::size_t>(s, "mlp_factor");
  fc.unifilter_width = read<std::size_t>(s, "unifilter_width");
  fc.seed = read<std::uint64_t>(s, "seed");
  fc.lr = read<double>(s, "lr");
  fc.r = read<double>(s, "r");
  fc.cheb_shifted = read<bool>(s, "cheb_shifted");
  const std::size_t k = read<std::size_t>(s, "clusters");
  const std::string signal_path = read<std::string>(s, "signal");

  const Graph g = grid_graph(width, height);
  std::vector<double> x;
  if (signal_path.empty()) {
    x = uniform_signal(g.n_nodes(), fc.seed);
  } else {
    const DenseMatrix m = read_features_csv(std::filesystem::path(signal_path));
    if (m.rows() != g.n_nodes() || m.cols() != 1) {
      throw FormatError("signal file must hold one value per grid node (" + std::to_string(g.n_nodes()) + " rows)");
    }
    x = m.column(0);
  }

  const EigenDecomposition eig = jacobi_eigh(normalized_laplacian(g).to_dense());
  std::vector<std::string> warnings;
  const SyntheticTask task = make_synthetic_task(g, eig, x, def.name, &warnings);
  const TokenTensor tokens =
      compute_tokens(g, DenseMatrix(g.n_nodes(), 1, x), fc.basis, fc.order, fc.cheb_shifted, &warnings);
  for (const std::string& w : warnings) io.err << "warning: " << w << '\n';

  const std::filesystem::path out_dir(o.out);
  ensure_directory(out_dir);
  write_text(out_dir / "config.json", json{{"synth", s}}.dump(2) + "\n");

  const FitResult fit = fit_task(task, kind, fc, &tokens);

  BasisOptions options;
  options.cheb_shifted = fc.cheb_shifted;
  if (fc.basis == BasisKind::Optimal) options.recurrence = &tokens.opt_coeffs()->channels.front();
  const FilterClusters clusters = cluster_learned_filters(fit.alpha, k, fc.basis, options, 256, fc.seed);

  std::ostringstream task_csv, alpha_csv, curves_csv, history_csv;
  write_task_csv(task_csv, task);
  write_alpha_csv(alpha_csv, fit.alpha);
  write_curves_csv(curves_csv, clusters);
  write_history_csv(history_csv, fit.history);
  write_text(out_dir / "task.csv", task_csv.str());
  write_text(out_dir / "alpha.csv", alpha_csv.str());
  write_text(out_dir / "curves.csv", curves_csv.str());
  write_text(out_dir / "history.csv", history_csv.str());

  Record record;
  record.add("command", "synth")
      .add("task", def.name)
      .add("model", to_string(kind))
      .add("basis", to_string(fc.basis))
      .add("grid", std::to_string(width) + "x" + std::to_string(height))
      .add("seed", fc.seed)
      .add("r2", fit.r2)
      .add("sse", fit.sse)
      .add("params", fit.parameter_count)
      .add("epochs", fit.epochs_run)
      .add("best_epoch", fit.best_epoch);
  if (k == 2) record.add("regime_agreement", regime_agreement(clusters.kmeans.assignments, task.regime));
  record.add("wall_ms", elapsed_ms(start));
  write_text(out_dir / "metrics.txt", record.str() + "\n");
  io.out << record.str() << '\n';
  return kOk;
}

}  // namespace

void add_synth_command(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<SynthOptions>();
  CLI::App* sub = app.add_subcommand("synth", "Fit a two-regime synthetic filtering task on a grid graph");
  sub->add_option("--config", o->config, "JSON config with a 'synth' section");
  sub->add_option("--task", o->task, "Task name, e.g. low-and-high-pass");
  sub->add_option("--grid", o->grid, "Grid size WxH (default 24x24)");
  sub->add_option("--basis", o->basis, "mono | bern | cheb | opt (default cheb)");
  sub->add_option("--model", o->model, "polyattn | unifilter | selfattn (default polyattn)");
  sub->add_option("--signal", o->signal, "Optional one-column CSV of pixel values in [0, 1]");
  sub->add_option("--epochs", o->epochs, "Maximum epochs (default 5000)");
  sub->add_option("--patience", o->patience, "Early-stopping patience (default 400)");
  sub->add_option("--K", o->order, "Polynomial order (default 10)");
  sub->add_option("--hidden", o->hidden, "Attention width (default 8)");
  sub->add_option("--heads", o->heads, "Attention heads (default 1)");
  sub->add_option("--mlp-factor", o->mlp_factor, "Order-wise MLP width factor (default 2)");
  sub->add_option("--r", o->r, "Attention bias decay exponent (default 1)");
  sub->add_option("--lr", o->lr, "Adam learning rate (default 0.001)");
  sub->add_option("--unifilter-width", o->unifilter_width, "UniFilter channels, 0 = match parameter count");
  sub->add_option("--cheb-shifted", o->cheb_shifted, "Chebyshev recurrence on L - I (default true)");
  sub->add_option("--clusters", o->clusters, "k for clustering learned filters (default 2)");
  sub->add_option("--seed", o->seed, "Seed for signal, initialization and clustering (default 0)");
  sub->add_option("--out", o->out, "Output directory")->required();
  sub->callback([o, &runner] { runner = [o](Streams io) { return run_synth(*o, io); }; });
}

}  // namespace nodefilter::cli
