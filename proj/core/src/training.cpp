#include "nodefilter/training.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "nodefilter/error.hpp"
#include "nodefilter/rng.hpp"

namespace nodefilter {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> target, const char* what) {
  if (pred.size() != target.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(target.size()) + " targets");
  }
  if (pred.empty()) throw ShapeError(std::string(what) + ": empty input");
}

void check_labels(const DenseMatrix& logits, std::span<const std::size_t> labels, const char* what) {
  if (logits.rows() != labels.size()) throw ShapeError(std::string(what) + ": row count differs from label count");
  if (labels.empty() || logits.cols() == 0) throw ShapeError(std::string(what) + ": empty input");
  for (std::size_t label : labels) {
    if (label >= logits.cols()) {
      throw std::out_of_range(std::string(what) + ": label " + std::to_string(label) + " outside [0, " +
                              std::to_string(logits.cols()) + ")");
    }
  }
}

}  // namespace

double sse(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "sse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s;
}

double mse(std::span<const double> pred, std::span<const double> target) {
  return sse(pred, target) / static_cast<double>(pred.size());
}

double r2_score(std::span<const double> pred, std::span<const double> target) {
  const double err = sse(pred, target);
  const double mean = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(target.size());
  double total = 0.0;
  for (double t : target) total += (t - mean) * (t - mean);
  if (total == 0.0) throw std::domain_error("r2_score: target has zero variance");
  return 1.0 - err / total;
}

double cross_entropy_loss(const DenseMatrix& logits, std::span<const std::size_t> labels) {
  check_labels(logits, labels, "cross_entropy_loss");
  double loss = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    loss += mx + std::log(sum) - row[labels[r]];
  }
  return loss / static_cast<double>(logits.rows());
}

double accuracy(const DenseMatrix& logits, std::span<const std::size_t> labels) {
  check_labels(logits, labels, "accuracy");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    hits += best == labels[r];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

ConfidenceInterval accuracy_ci(std::span<const double> accuracies) {
  const std::size_t n = accuracies.size();
  if (n < 2) throw std::invalid_argument("accuracy_ci: need at least two runs");
  const double mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double a : accuracies) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(n))};
}

void adam_step(std::span<ad::Parameter* const> params, AdamState& state, const AdamOptions& o) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const ad::Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = *params[i];
    if (p.grad.size() != p.value.size()) p.zero_grad();
    ad::Tensor& m = state.m[i];
    ad::Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j] + o.weight_decay * p.value[j];
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g * g;
      p.value[j] -= o.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + o.eps);
    }
  }
}

SplitMasks SplitMasks::all(std::size_t n) {
  SplitMasks s;
  s.train.assign(n, true);
  s.val.assign(n, true);
  s.test.assign(n, true);
  s.fractions = {1.0, 1.0, 1.0};
  return s;
}

namespace {

std::vector<std::size_t> indices_of(const std::vector<bool>& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

}  // namespace

std::vector<std::size_t> SplitMasks::train_nodes() const { return indices_of(train); }
std::vector<std::size_t> SplitMasks::val_nodes() const { return indices_of(val); }
std::vector<std::size_t> SplitMasks::test_nodes() const { return indices_of(test); }

SplitMasks split_nodes(std::size_t n, std::array<double, 3> fractions, std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split_nodes: fractions must be non-negative");
    sum += f;
  }
  if (sum > 1.0 + 1e-12) throw ConfigError("split_nodes: fractions sum to " + std::to_string(sum) + " > 1");
  const auto count = [n](double f) { return static_cast<std::size_t>(std::llround(f * static_cast<double>(n))); };
  std::size_t n_train = std::min(count(fractions[0]), n);
  std::size_t n_val = std::min(count(fractions[1]), n - n_train);
  std::size_t n_test = std::abs(sum - 1.0) <= 1e-12 ? n - n_train - n_val : std::min(count(fractions[2]), n - n_train - n_val);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  SplitMasks s;
  s.seed = seed;
  s.fractions = fractions;
  s.train.assign(n, false);
  s.val.assign(n, false);
  s.test.assign(n, false);
  for (std::size_t i = 0; i < n_train; ++i) s.train[order[i]] = true;
  for (std::size_t i = n_train; i < n_train + n_val; ++i) s.val[order[i]] = true;
  for (std::size_t i = n_train + n_val; i < n_train + n_val + n_test; ++i) s.test[order[i]] = true;
  return s;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: learning rate must be finite and >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight decay must be >= 0");
  if (max_epochs == 0) throw ConfigError("train: max_epochs must be positive");
  if (patience > max_epochs) throw ConfigError("train: patience exceeds max_epochs");
}

ad::Tensor gather_tokens(const TokenTensor& tokens, std::span<const std::size_t> nodes) {
  const std::size_t t = tokens.order() + 1, d = tokens.dim();
  ad::Tensor out({nodes.size(), t, d});
  for (std::size_t b = 0; b < nodes.size(); ++b) {
    if (nodes[b] >= tokens.n_nodes()) throw std::out_of_range("gather_tokens: node index out of range");
    for (std::size_t k = 0; k < t; ++k)
      for (std::size_t c = 0; c < d; ++c) out[(b * t + k) * d + c] = tokens(k, nodes[b], c);
  }
  return out;
}

namespace {

DenseMatrix to_matrix(const ad::Tensor& t) {
  const std::size_t cols = t.rank() == 2 ? t.dim(1) : 1;
  return DenseMatrix(t.size() / cols, cols, std::vector<double>(t.values().begin(), t.values().end()));
}

DenseMatrix eval_outputs(Model& model, const ad::Tensor& batch) {
  ad::Tape tape;
  const ad::Var out = model.forward(tape, tape.constant(batch), false);
  return to_matrix(out.value());
}

double metric(LossKind loss, const DenseMatrix& outputs, const TrainTargets& targets, std::span<const std::size_t> nodes,
              bool allow_undefined) {
  if (nodes.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (loss == LossKind::CrossEntropy) {
    DenseMatrix sub(nodes.size(), outputs.cols());
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::size_t c = 0; c < outputs.cols(); ++c) sub(i, c) = outputs(nodes[i], c);
      labels.push_back(targets.labels[nodes[i]]);
    }
    return accuracy(sub, labels);
  }
  std::vector<double> pred, truth;
  for (std::size_t i : nodes) {
    pred.push_back(outputs(i, 0));
    truth.push_back(targets.values[i]);
  }
  try {
    return r2_score(pred, truth);
  } catch (const std::domain_error&) {
    if (allow_undefined) return std::numeric_limits<double>::quiet_NaN();
    throw;
  }
}

ad::Var batch_loss(ad::Tape& tape, const ad::Var& outputs, const TrainTargets& targets, std::span<const std::size_t> nodes,
                   LossKind loss) {
  if (loss == LossKind::CrossEntropy) {
    std::vector<std::size_t> labels;
    labels.reserve(nodes.size());
    for (std::size_t i : nodes) labels.push_back(targets.labels[i]);
    return ad::cross_entropy(outputs, labels);
  }
  ad::Tensor t(outputs.shape());
  for (std::size_t b = 0; b < nodes.size(); ++b) t[b] = targets.values[nodes[b]];
  const ad::Var diff = ad::sub(outputs, tape.constant(std::move(t)));
  return ad::mean_all(ad::hadamard(diff, diff));
}

}  // namespace

DenseMatrix predict(Model& model, const TokenTensor& tokens) {
  std::vector<std::size_t> all(tokens.n_nodes());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return eval_outputs(model, gather_tokens(tokens, all));
}

TrainResult train_loop(Model& model, const TokenTensor& tokens, const TrainTargets& targets, const SplitMasks& masks,
                       const TrainConfig& config) {
  config.validate();
  const std::size_t n = tokens.n_nodes();
  model.check_tokens(tokens);
  if (masks.train.size() != n || masks.val.size() != n || masks.test.size() != n) {
    throw ShapeError("train: split masks do not cover the token tensor's nodes");
  }
  if (config.loss == LossKind::CrossEntropy ? targets.labels.size() != n : targets.values.size() != n) {
    throw ShapeError("train: one target per node required");
  }
  const std::vector<std::size_t> train_nodes = masks.train_nodes();
  const std::vector<std::size_t> val_nodes = masks.val_nodes();
  const std::vector<std::size_t> test_nodes = masks.test_nodes();
  if (train_nodes.empty()) throw ConfigError("train: empty training split");
  if (val_nodes.empty()) throw ConfigError("train: empty validation split");

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const ad::Tensor all_tokens = gather_tokens(tokens, all);
  const bool full_batch = config.batch_size == 0 || config.batch_size >= train_nodes.size();
  const ad::Tensor train_tokens = full_batch ? gather_tokens(tokens, train_nodes) : ad::Tensor();
  const std::size_t batch_size = full_batch ? train_nodes.size() : config.batch_size;

  const std::vector<ad::Parameter*> params = model.parameters();
  AdamState adam;
  const AdamOptions adam_options{config.lr, 0.9, 0.999, 1e-8, config.weight_decay};
  Rng rng(config.seed);

  TrainResult result;
  result.best_val_metric = -std::numeric_limits<double>::infinity();
  std::vector<ad::Tensor> best(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
  std::size_t since_best = 0;
  std::vector<std::size_t> order = train_nodes;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (!full_batch) rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      const std::span<const std::size_t> nodes(order.data() + begin, end - begin);
      ad::Tape tape;
      const ad::Var input = tape.constant(full_batch ? train_tokens : gather_tokens(tokens, nodes));
      const ad::Var outputs = model.forward(tape, input, true);
      const ad::Var loss = batch_loss(tape, outputs, targets, nodes, config.loss);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                             std::to_string(begin));
      }
      for (ad::Parameter* p : params) p->zero_grad();
      tape.backward(loss);
      adam_step(params, adam, adam_options);
      loss_sum += lv * static_cast<double>(nodes.size());
    }

    const DenseMatrix outputs = eval_outputs(model, all_tokens);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_metric = metric(config.loss, outputs, targets, val_nodes, false);
    rec.test_metric = metric(config.loss, outputs, targets, test_nodes, true);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(rec.val_metric)) {
      throw NumericalError("non-finite validation metric at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);

    if (rec.val_metric > result.best_val_metric) {
      result.best_val_metric = rec.val_metric;
      result.best_epoch = epoch;
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = best[i];
    params[i]->zero_grad();
  }
  const DenseMatrix outputs = eval_outputs(model, all_tokens);
  result.train_metric = metric(config.loss, outputs, targets, train_nodes, true);
  result.val_metric = metric(config.loss, outputs, targets, val_nodes, true);
  result.test_metric = metric(config.loss, outputs, targets, test_nodes, true);
  return result;
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,train_loss,val_metric,test_metric,wall_ms\n";
  out << std::setprecision(17);
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val_metric << ',' << r.test_metric << ',' << std::setprecision(6)
        << r.wall_ms << std::setprecision(17) << '\n';
  }
}

}  // namespace nodefilter
