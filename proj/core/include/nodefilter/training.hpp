#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "nodefilter/autodiff.hpp"
#include "nodefilter/matrix.hpp"
#include "nodefilter/model.hpp"
#include "nodefilter/tokens.hpp"

namespace nodefilter {

// -- metrics ------------------------------------------------------------------
// All throw ShapeError on length mismatch or empty input.

double sse(std::span<const double> pred, std::span<const double> target);
double mse(std::span<const double> pred, std::span<const double> target);
// Throws std::domain_error when the target has zero variance.
double r2_score(std::span<const double> pred, std::span<const double> target);
// Mean -log softmax(logits)[label]; throws std::out_of_range for bad labels.
double cross_entropy_loss(const DenseMatrix& logits, std::span<const std::size_t> labels);
// Ties go to the lowest class index.
double accuracy(const DenseMatrix& logits, std::span<const std::size_t> labels);

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
};

// mean +- 1.96 sd / sqrt(n), sample standard deviation; needs n >= 2.
ConfidenceInterval accuracy_ci(std::span<const double> accuracies);

// -- optimizer ----------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // added to the gradient
};

struct AdamState {
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
  std::size_t step = 0;
};

// One bias-corrected Adam update from the parameters' gradient slots.
void adam_step(std::span<ad::Parameter* const> params, AdamState& state, const AdamOptions& options);

// -- splits -------------------------------------------------------------------

struct SplitMasks {
  std::vector<bool> train, val, test;
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{};

  static SplitMasks all(std::size_t n);  // every node in every split
  std::vector<std::size_t> train_nodes() const;
  std::vector<std::size_t> val_nodes() const;
  std::vector<std::size_t> test_nodes() const;
};

// Seeded shuffle, then contiguous train/val/test blocks of round(f * n)
// nodes. When the fractions sum to one the test block takes the remainder.
// Throws ConfigError for negative fractions or a sum above one.
SplitMasks split_nodes(std::size_t n, std::array<double, 3> fractions, std::uint64_t seed);

// -- training loop --------------------------------------------------------------

enum class LossKind { MeanSquaredError, CrossEntropy };

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t max_epochs = 1000;
  std::size_t patience = 100;  // 0 disables early stopping
  std::size_t batch_size = 0;  // 0 means full batch
  LossKind loss = LossKind::CrossEntropy;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Regression uses `values` (one per node, single output); classification
// uses `labels`.
struct TrainTargets {
  std::vector<double> values;
  std::vector<std::size_t> labels;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;   // R^2 or accuracy
  double test_metric = 0.0;  // NaN when the test split is empty
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_metric = 0.0;
  bool stopped_early = false;
  // metrics of the restored best state
  double train_metric = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
};

// (B, K+1, d) batch of the given nodes' token matrices.
ad::Tensor gather_tokens(const TokenTensor& tokens, std::span<const std::size_t> nodes);

// Evaluation-mode outputs for every node: N x c.
DenseMatrix predict(Model& model, const TokenTensor& tokens);

// Per epoch: seeded shuffle of the train nodes into batches (last partial
// batch kept), one Adam step per batch, then one evaluation pass. The
// parameters of the best validation epoch are restored before returning;
// training stops after `patience` epochs without strict improvement.
// Throws NumericalError on a non-finite loss.
TrainResult train_loop(Model& model, const TokenTensor& tokens, const TrainTargets& targets, const SplitMasks& masks,
                       const TrainConfig& config);

// Columns: epoch, train_loss, val_metric, test_metric, wall_ms.
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace nodefilter
