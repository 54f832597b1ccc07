#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cli_common.hpp"
#include "commands.hpp"
#include "nodefilter/checkpoint.hpp"
#include "nodefilter/model.hpp"
#include "nodefilter/tokens.hpp"
#include "nodefilter/training.hpp"

namespace nodefilter::cli {

namespace {

struct TrainOptions {
  std::string tokens;
  std::string labels;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> patience;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
};

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const char* where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + "." + key + " has the wrong type");
  }
}

std::size_t parse_class_label(const std::string& text, std::size_t node) {
  std::size_t pos = 0;
  long long v = -1;
  try {
    v = std::stoll(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size() || v < 0) {
    throw FormatError("node " + std::to_string(node) + ": label '" + text + "' is not a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

double parse_value_label(const std::string& text, std::size_t node) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) throw FormatError("node " + std::to_string(node) + ": target '" + text + "' is not a number");
  return v;
}

int run_train(const TrainOptions& o, Streams io) {
  json cfg = o.config.empty() ? json::object() : load_json(o.config);
  reject_unknown_keys(cfg, {"data", "model", "train"}, "config");
  json data = cfg.value("data", json::object());
  json model = cfg.value("model", json::object());
  json train = cfg.value("train", json::object());
  reject_unknown_keys(data, {"labels", "tokens"}, "config.data");
  reject_unknown_keys(model, {"activation", "basis", "blocks", "cheb_shifted", "classes", "dropout", "ffn_hidden", "heads",
                              "hidden", "input_dim", "mlp_factor", "order", "r", "readout_hidden", "seed"},
                      "config.model");
  reject_unknown_keys(train, {"batch_size", "lr", "max_epochs", "patience", "seed", "split", "task", "weight_decay"},
                      "config.train");

  if (!o.tokens.empty()) data["tokens"] = o.tokens;
  if (!o.labels.empty()) data["labels"] = o.labels;
  if (o.seed) {
    train["seed"] = *o.seed;
    model["seed"] = *o.seed;
  }
  if (o.epochs) train["max_epochs"] = *o.epochs;
  if (o.patience) train["patience"] = *o.patience;
  if (o.batch_size) train["batch_size"] = *o.batch_size;
  if (o.lr) train["lr"] = *o.lr;
  const std::string tokens_path = get_or<std::string>(data, "tokens", "", "config.data");
  const std::string labels_path = get_or<std::string>(data, "labels", "", "config.data");
  if (tokens_path.empty()) throw ConfigError("no token cache given (--tokens or data.tokens)");
  if (labels_path.empty()) throw ConfigError("no label file given (--labels or data.labels)");

  const TokenTensor tokens = read_token_cache(std::filesystem::path(tokens_path));

  TrainConfig tc;
  const std::string task = get_or<std::string>(train, "task", "classification", "config.train");
  if (task != "classification" && task != "regression") {
    throw ConfigError("config.train.task must be 'classification' or 'regression'");
  }
  tc.loss = task == "classification" ? LossKind::CrossEntropy : LossKind::MeanSquaredError;
  tc.lr = get_or<double>(train, "lr", tc.lr, "config.train");
  tc.weight_decay = get_or<double>(train, "weight_decay", 0.0, "config.train");
  tc.max_epochs = get_or<std::size_t>(train, "max_epochs", 500, "config.train");
  tc.patience = get_or<std::size_t>(train, "patience", std::min<std::size_t>(100, tc.max_epochs), "config.train");
  tc.batch_size = get_or<std::size_t>(train, "batch_size", 0, "config.train");
  tc.seed = get_or<std::uint64_t>(train, "seed", 0, "config.train");
  const auto split = get_or<std::vector<double>>(train, "split", {0.6, 0.2, 0.2}, "config.train");
  if (split.size() != 3) throw ConfigError("config.train.split needs three fractions");
  tc.validate();

  // cache header fills whatever the config leaves open
  if (!model.contains("basis")) model["basis"] = std::string(to_string(tokens.basis()));
  if (!model.contains("order")) model["order"] = tokens.order();
  if (!model.contains("input_dim")) model["input_dim"] = tokens.dim();
  if (!model.contains("cheb_shifted")) model["cheb_shifted"] = tokens.cheb_shifted();

  const std::vector<std::string> raw = read_label_column(labels_path, tokens.n_nodes());
  TrainTargets targets;
  if (tc.loss == LossKind::CrossEntropy) {
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      targets.labels.push_back(parse_class_label(raw[i], i));
      max_label = std::max(max_label, targets.labels.back());
    }
    if (!model.contains("classes")) model["classes"] = std::max<std::size_t>(2, max_label + 1);
  } else {
    for (std::size_t i = 0; i < raw.size(); ++i) targets.values.push_back(parse_value_label(raw[i], i));
    if (!model.contains("classes")) model["classes"] = 1;
  }

  const ModelConfig mc = model_config_from_json(model.dump());
  mc.validate();
  check_tokens_match(tokens, mc);
  if (tc.loss == LossKind::MeanSquaredError && mc.classes != 1) throw ConfigError("regression needs model.classes = 1");
  for (std::size_t label : targets.labels) {
    if (label >= mc.classes) {
      throw FormatError("label " + std::to_string(label) + " outside [0, " + std::to_string(mc.classes) + ")");
    }
  }

  const std::filesystem::path out_dir(o.out);
  ensure_directory(out_dir);
  json resolved;
  resolved["data"] = {{"tokens", tokens_path}, {"labels", labels_path}};
  resolved["model"] = json::parse(model_config_to_json(mc));
  resolved["train"] = {{"task", task},         {"lr", tc.lr},           {"weight_decay", tc.weight_decay},
                       {"max_epochs", tc.max_epochs}, {"patience", tc.patience}, {"batch_size", tc.batch_size},
                       {"seed", tc.seed},      {"split", split}};
  write_text(out_dir / "config.json", resolved.dump(2) + "\n");

  PolyFormerModel net(mc);
  const SplitMasks masks = split_nodes(tokens.n_nodes(), {split[0], split[1], split[2]}, tc.seed);
  const TrainResult result = train_loop(net, tokens, targets, masks, tc);

  write_checkpoint(mc, net.state(), out_dir / "model.pfm");
  std::ostringstream history;
  write_history_csv(history, result.history);
  write_text(out_dir / "history.csv", history.str());

  const std::string record = Record()
                                 .add("command", "train")
                                 .add("basis", to_string(mc.basis))
                                 .add("K", mc.order)
                                 .add("seed", tc.seed)
                                 .add("metric", tc.loss == LossKind::CrossEntropy ? "accuracy" : "r2")
                                 .add("epochs", result.history.size())
                                 .add("best_epoch", result.best_epoch)
                                 .add("train_metric", result.train_metric)
                                 .add("val_metric", result.val_metric)
                                 .add("test_metric", result.test_metric)
                                 .add("params", net.parameter_count())
                                 .str();
  write_text(out_dir / "metrics.txt", record + "\n");
  io.out << record << '\n';
  return kOk;
}

}  // namespace

void add_train_command(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<TrainOptions>();
  CLI::App* sub = app.add_subcommand("train", "Train a PolyFormer on cached tokens");
  sub->add_option("--tokens", o->tokens, "PTK1 token cache");
  sub->add_option("--labels", o->labels, "Labels CSV: node_id,label");
  sub->add_option("--config", o->config, "JSON run config with model/train/data sections");
  sub->add_option("--seed", o->seed, "Seed for initialization, splits and batching");
  sub->add_option("--epochs", o->epochs, "Maximum epochs");
  sub->add_option("--patience", o->patience, "Early-stopping patience, 0 disables");
  sub->add_option("--batch-size", o->batch_size, "Nodes per batch, 0 = full batch");
  sub->add_option("--lr", o->lr, "Adam learning rate");
  sub->add_option("--out", o->out, "Output directory")->required();
  sub->callback([o, &runner] { runner = [o](Streams io) { return run_train(*o, io); }; });
}

}  // namespace nodefilter::cli
