#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "nodefilter/autodiff.hpp"
#include "nodefilter/basis.hpp"
#include "nodefilter/matrix.hpp"
#include "nodefilter/polyattn.hpp"
#include "nodefilter/rng.hpp"
#include "nodefilter/tokens.hpp"

namespace nodefilter {

// Trainable map from a batch of token matrices (B, K+1, d_in) to outputs (B, c).
class Model {
 public:
  virtual ~Model() = default;
  virtual std::vector<ad::Parameter*> parameters() = 0;
  virtual ad::Var forward(ad::Tape& tape, const ad::Var& tokens, bool training) = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t order() const = 0;
  // Throws MismatchError when a token tensor cannot feed this model.
  virtual void check_tokens(const TokenTensor& tokens) const;

  std::size_t parameter_count();
};

// Seeded inverted dropout; masks are constants on the tape.
struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;

  ad::Var apply(ad::Tape& tape, const ad::Var& x) const;
};

// -- PolyFormer ---------------------------------------------------------------

struct ModelConfig {
  BasisKind basis = BasisKind::Chebyshev;
  bool cheb_shifted = false;
  std::size_t order = 10;  // K
  std::size_t input_dim = 1;
  std::size_t blocks = 1;  // L
  std::size_t heads = 1;
  std::size_t hidden = 16;  // d
  std::size_t ffn_hidden = 32;
  std::size_t classes = 2;  // c; 1 for signal regression
  std::size_t readout_hidden = 16;  // d'
  std::size_t mlp_factor = 2;
  double r = 1.0;
  Activation activation = Activation::Tanh;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  PolyAttnConfig attention() const;
  bool operator==(const ModelConfig&) const = default;
};

struct BlockParams {
  ad::Parameter ln1_gain, ln1_offset;
  PolyAttnParams attn;
  ad::Parameter ln2_gain, ln2_offset;
  ad::Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;

  std::vector<ad::Parameter*> parameters();
};

struct ModelState {
  ad::Parameter input_weight;  // (d_in, d)
  ad::Parameter input_bias;    // (d)
  std::vector<BlockParams> blocks;
  ad::Parameter readout_w1;  // (d, d')
  ad::Parameter readout_w2;  // (d', c)

  static ModelState init(const ModelConfig& config);
  static ModelState zeros(const ModelConfig& config);

  // Fixed order with stable names; the checkpoint format relies on it.
  std::vector<ad::Parameter*> parameters();
};

// H' = PolyAttn(LN(H)) + H;  H = FFN(LN(H')) + H'.
ad::Var block_forward(ad::Tape& tape, const ad::Var& tokens, BlockParams& block, const Dropout* dropout = nullptr);

// ReLU((sum_k H_k) W1) W2.
ad::Var readout(ad::Tape& tape, const ad::Var& tokens, ModelState& state);

// Input projection, L blocks, readout.
ad::Var model_forward(ad::Tape& tape, const ad::Var& tokens, const ModelConfig& config, ModelState& state,
                      const Dropout* dropout = nullptr);

// Throws MismatchError when the cache was built for another basis, order,
// Chebyshev variant or feature width.
void check_tokens_match(const TokenTensor& tokens, const ModelConfig& config);

class PolyFormerModel : public Model {
 public:
  explicit PolyFormerModel(ModelConfig config);
  PolyFormerModel(ModelConfig config, ModelState state);

  std::vector<ad::Parameter*> parameters() override { return state_.parameters(); }
  ad::Var forward(ad::Tape& tape, const ad::Var& tokens, bool training) override;
  std::size_t input_dim() const override { return config_.input_dim; }
  std::size_t order() const override { return config_.order; }
  void check_tokens(const TokenTensor& tokens) const override;

  const ModelConfig& config() const noexcept { return config_; }
  ModelState& state() noexcept { return state_; }

 private:
  ModelConfig config_;
  ModelState state_;
  Rng dropout_rng_;
};

// -- node-unified filter ------------------------------------------------------

// Z_i = sum_k alpha_k * H_k[i, :], alpha of shape (K+1) or per channel (K+1, d).
ad::Var unifilter_forward(ad::Tape& tape, const ad::Var& tokens, const ad::Var& alpha);

struct UniFilterConfig {
  std::size_t order = 10;
  std::size_t input_dim = 1;
  std::size_t width = 8;  // channels after the input projection
  std::size_t outputs = 1;
  bool per_channel = true;
  bool input_projection = true;  // false: width must equal input_dim
  std::uint64_t seed = 0;

  void validate() const;
};

class UniFilterModel : public Model {
 public:
  explicit UniFilterModel(UniFilterConfig config);

  std::vector<ad::Parameter*> parameters() override;
  ad::Var forward(ad::Tape& tape, const ad::Var& tokens, bool training) override;
  std::size_t input_dim() const override { return config_.input_dim; }
  std::size_t order() const override { return config_.order; }

  const UniFilterConfig& config() const noexcept { return config_; }
  // Scalar coefficients of the end-to-end map from each input channel's
  // tokens to output 0: sum_c alpha[k, c] W_in[0, c] W_out[c, 0].
  std::vector<double> effective_coefficients() const;

  ad::Parameter input_weight, input_bias, alpha, head_weight, head_bias;

 private:
  UniFilterConfig config_;
};

// -- single-layer attention regressor (synthetic fitting) ---------------------

struct AttnRegressorConfig {
  std::size_t order = 10;
  std::size_t input_dim = 1;
  std::size_t hidden = 8;
  std::size_t heads = 1;
  std::size_t mlp_factor = 2;
  double r = 1.0;
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;
};

// Affine input projection, one attention layer, order sum, linear head.
class AttnRegressor : public Model {
 public:
  explicit AttnRegressor(AttnRegressorConfig config);

  std::vector<ad::Parameter*> parameters() override;
  ad::Var forward(ad::Tape& tape, const ad::Var& tokens, bool training) override;
  std::size_t input_dim() const override { return config_.input_dim; }
  std::size_t order() const override { return config_.order; }

  const AttnRegressorConfig& config() const noexcept { return config_; }
  const AttnScores& last_scores() const noexcept { return last_scores_; }

  // Per-node scalar coefficients of the input channel 0 -> output map,
  // from the scores of the latest forward pass: (B, K+1).
  DenseMatrix effective_coefficients() const;

  ad::Parameter input_weight, input_bias;
  PolyAttnParams attn;
  ad::Parameter head_weight, head_bias;

 private:
  AttnRegressorConfig config_;
  AttnScores last_scores_;
};

}  // namespace nodefilter
