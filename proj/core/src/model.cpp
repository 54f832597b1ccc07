#include "nodefilter/model.hpp"

#include <cmath>
#include <string>

#include "nodefilter/error.hpp"

namespace nodefilter {

void Model::check_tokens(const TokenTensor& tokens) const {
  if (tokens.order() != order() || tokens.dim() != input_dim()) {
    throw MismatchError("token tensor shape (K=" + std::to_string(tokens.order()) + ", d=" +
                        std::to_string(tokens.dim()) + ") does not match the model");
  }
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (const ad::Parameter* p : parameters()) n += p->value.size();
  return n;
}

ad::Var Dropout::apply(ad::Tape& tape, const ad::Var& x) const {
  if (rate <= 0.0 || rng == nullptr) return x;
  const double keep = 1.0 - rate;
  ad::Tensor mask(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
  return ad::hadamard(x, tape.constant(std::move(mask)));
}

namespace {

ad::Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng) {
  ad::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

double fan_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

std::vector<ad::Parameter*> prefixed(std::vector<ad::Parameter*> params, const std::string& prefix) {
  for (ad::Parameter* p : params) {
    if (p->name.rfind(prefix, 0) != 0) p->name = prefix + p->name;
  }
  return params;
}

// (B, T, d) x (d, e) + bias(e)
ad::Var affine_rows(ad::Tape& tape, const ad::Var& x, ad::Parameter& w, ad::Parameter& b) {
  ad::Var y = ad::matmul(x, tape.param(w));
  ad::Shape leading(y.shape().begin(), y.shape().end() - 1);
  return ad::add(y, ad::broadcast_row(tape.param(b), leading));
}

void check_token_shape(const ad::Var& tokens, std::size_t order, std::size_t input_dim) {
  const ad::Shape& s = tokens.shape();
  if (s.size() != 3 || s[1] != order + 1 || s[2] != input_dim) {
    throw ShapeError("model: tokens " + ad::shape_string(s) + " do not match (B, " + std::to_string(order + 1) +
                     ", " + std::to_string(input_dim) + ")");
  }
}

}  // namespace

// -- PolyFormer ---------------------------------------------------------------

void ModelConfig::validate() const {
  if (input_dim == 0) throw ConfigError("model: input_dim must be positive");
  if (blocks == 0) throw ConfigError("model: need at least one block");
  if (hidden == 0 || ffn_hidden == 0 || readout_hidden == 0) throw ConfigError("model: widths must be positive");
  if (classes == 0) throw ConfigError("model: classes must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0, 1)");
  if (basis == BasisKind::Bernstein && order > kMaxBernsteinOrder) {
    throw ConfigError("model: Bernstein order above " + std::to_string(kMaxBernsteinOrder));
  }
  attention().validate();
}

PolyAttnConfig ModelConfig::attention() const {
  PolyAttnConfig a;
  a.dim = hidden;
  a.order = order;
  a.heads = heads;
  a.mlp_factor = mlp_factor;
  a.r = r;
  a.activation = activation;
  return a;
}

std::vector<ad::Parameter*> BlockParams::parameters() {
  std::vector<ad::Parameter*> out{&ln1_gain, &ln1_offset};
  for (ad::Parameter* p : attn.parameters()) out.push_back(p);
  for (ad::Parameter* p : {&ln2_gain, &ln2_offset, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2}) out.push_back(p);
  return out;
}

ModelState ModelState::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.hidden, f = config.ffn_hidden;
  ModelState s;
  s.input_weight = ad::Parameter("input.weight", ad::Tensor({config.input_dim, d}));
  s.input_bias = ad::Parameter("input.bias", ad::Tensor({d}));
  for (std::size_t l = 0; l < config.blocks; ++l) {
    BlockParams b;
    b.ln1_gain = ad::Parameter("ln1.gain", ad::Tensor({d}));
    b.ln1_offset = ad::Parameter("ln1.offset", ad::Tensor({d}));
    b.attn = PolyAttnParams::zeros(config.attention());
    for (ad::Parameter* p : b.attn.parameters()) p->name = "attn." + p->name;
    b.ln2_gain = ad::Parameter("ln2.gain", ad::Tensor({d}));
    b.ln2_offset = ad::Parameter("ln2.offset", ad::Tensor({d}));
    b.ffn_w1 = ad::Parameter("ffn.w1", ad::Tensor({d, f}));
    b.ffn_b1 = ad::Parameter("ffn.b1", ad::Tensor({f}));
    b.ffn_w2 = ad::Parameter("ffn.w2", ad::Tensor({f, d}));
    b.ffn_b2 = ad::Parameter("ffn.b2", ad::Tensor({d}));
    prefixed(b.parameters(), "block" + std::to_string(l) + ".");
    s.blocks.push_back(std::move(b));
  }
  s.readout_w1 = ad::Parameter("readout.w1", ad::Tensor({d, config.readout_hidden}));
  s.readout_w2 = ad::Parameter("readout.w2", ad::Tensor({config.readout_hidden, config.classes}));
  return s;
}

ModelState ModelState::init(const ModelConfig& config) {
  ModelState s = zeros(config);
  Rng rng(config.seed);
  const std::size_t d = config.hidden, f = config.ffn_hidden;
  s.input_weight.value = uniform_tensor({config.input_dim, d}, fan_bound(config.input_dim), rng);
  s.input_bias.value = uniform_tensor({d}, fan_bound(config.input_dim), rng);
  for (BlockParams& b : s.blocks) {
    b.ln1_gain.value = ad::Tensor({d}, 1.0);
    b.ln2_gain.value = ad::Tensor({d}, 1.0);
    const PolyAttnParams fresh = PolyAttnParams::init(config.attention(), rng);
    b.attn.w_q.value = fresh.w_q.value;
    b.attn.w_k.value = fresh.w_k.value;
    b.attn.mlp_w1.value = fresh.mlp_w1.value;
    b.attn.mlp_b1.value = fresh.mlp_b1.value;
    b.attn.mlp_w2.value = fresh.mlp_w2.value;
    b.attn.mlp_b2.value = fresh.mlp_b2.value;
    b.attn.beta.value = fresh.beta.value;
    b.ffn_w1.value = uniform_tensor({d, f}, fan_bound(d), rng);
    b.ffn_b1.value = uniform_tensor({f}, fan_bound(d), rng);
    b.ffn_w2.value = uniform_tensor({f, d}, fan_bound(f), rng);
    b.ffn_b2.value = uniform_tensor({d}, fan_bound(f), rng);
  }
  s.readout_w1.value = uniform_tensor({d, config.readout_hidden}, fan_bound(d), rng);
  s.readout_w2.value = uniform_tensor({config.readout_hidden, config.classes}, fan_bound(config.readout_hidden), rng);
  return s;
}

std::vector<ad::Parameter*> ModelState::parameters() {
  std::vector<ad::Parameter*> out{&input_weight, &input_bias};
  for (BlockParams& b : blocks)
    for (ad::Parameter* p : b.parameters()) out.push_back(p);
  out.push_back(&readout_w1);
  out.push_back(&readout_w2);
  return out;
}

ad::Var block_forward(ad::Tape& tape, const ad::Var& tokens, BlockParams& block, const Dropout* dropout) {
  const ad::Var normed = ad::layer_norm_rows(tokens, tape.param(block.ln1_gain), tape.param(block.ln1_offset));
  ad::Var attended = multihead_polyattn_forward(tape, normed, block.attn).tokens;
  if (dropout != nullptr) attended = dropout->apply(tape, attended);
  const ad::Var mid = ad::add(attended, tokens);

  const ad::Var normed2 = ad::layer_norm_rows(mid, tape.param(block.ln2_gain), tape.param(block.ln2_offset));
  ad::Var hidden = ad::relu(affine_rows(tape, normed2, block.ffn_w1, block.ffn_b1));
  if (dropout != nullptr) hidden = dropout->apply(tape, hidden);
  return ad::add(affine_rows(tape, hidden, block.ffn_w2, block.ffn_b2), mid);
}

ad::Var readout(ad::Tape& tape, const ad::Var& tokens, ModelState& state) {
  const ad::Var pooled = ad::sum_rows(tokens);
  const ad::Var hidden = ad::relu(ad::matmul(pooled, tape.param(state.readout_w1)));
  return ad::matmul(hidden, tape.param(state.readout_w2));
}

ad::Var model_forward(ad::Tape& tape, const ad::Var& tokens, const ModelConfig& config, ModelState& state,
                      const Dropout* dropout) {
  check_token_shape(tokens, config.order, config.input_dim);
  if (state.blocks.size() != config.blocks) throw ShapeError("model: state block count differs from config");
  ad::Var h = affine_rows(tape, tokens, state.input_weight, state.input_bias);
  for (BlockParams& block : state.blocks) h = block_forward(tape, h, block, dropout);
  return readout(tape, h, state);
}

void PolyFormerModel::check_tokens(const TokenTensor& tokens) const { check_tokens_match(tokens, config_); }

void check_tokens_match(const TokenTensor& tokens, const ModelConfig& config) {
  if (tokens.basis() != config.basis) {
    throw MismatchError("token cache basis " + std::string(to_string(tokens.basis())) + " but config expects " +
                        std::string(to_string(config.basis)));
  }
  if (tokens.order() != config.order) {
    throw MismatchError("token cache order K=" + std::to_string(tokens.order()) + " but config expects K=" +
                        std::to_string(config.order));
  }
  if (config.basis == BasisKind::Chebyshev && tokens.cheb_shifted() != config.cheb_shifted) {
    throw MismatchError("token cache and config disagree on the shifted Chebyshev recurrence");
  }
  if (tokens.dim() != config.input_dim) {
    throw MismatchError("token cache has d=" + std::to_string(tokens.dim()) + " but config expects input_dim=" +
                        std::to_string(config.input_dim));
  }
}

PolyFormerModel::PolyFormerModel(ModelConfig config)
    : config_(config), state_(ModelState::init(config)), dropout_rng_(config.seed ^ 0x9e3779b97f4a7c15ULL) {}

PolyFormerModel::PolyFormerModel(ModelConfig config, ModelState state)
    : config_(config), state_(std::move(state)), dropout_rng_(config.seed ^ 0x9e3779b97f4a7c15ULL) {
  config_.validate();
}

ad::Var PolyFormerModel::forward(ad::Tape& tape, const ad::Var& tokens, bool training) {
  const Dropout dropout{config_.dropout, &dropout_rng_};
  return model_forward(tape, tokens, config_, state_, training && config_.dropout > 0.0 ? &dropout : nullptr);
}

// -- node-unified filter ------------------------------------------------------

ad::Var unifilter_forward(ad::Tape& tape, const ad::Var& tokens, const ad::Var& alpha) {
  const ad::Shape& s = tokens.shape();
  if (s.size() != 3) throw ShapeError("unifilter: tokens must be (B, K+1, d), got " + ad::shape_string(s));
  const std::size_t batch = s[0], t = s[1], d = s[2];
  ad::Var weights = alpha;
  if (alpha.shape() == ad::Shape{t}) {
    weights = ad::matmul(ad::reshape(alpha, {t, 1}), tape.constant(ad::Tensor({1, d}, 1.0)));
  } else if (alpha.shape() != ad::Shape{t, d}) {
    throw ShapeError("unifilter: coefficients " + ad::shape_string(alpha.shape()) + " for tokens " +
                     ad::shape_string(s));
  }
  return ad::sum_rows(ad::hadamard(tokens, ad::broadcast_row(weights, {batch})));
}

void UniFilterConfig::validate() const {
  if (input_dim == 0 || width == 0 || outputs == 0) throw ConfigError("unifilter: widths must be positive");
  if (!input_projection && width != input_dim) {
    throw ConfigError("unifilter: without input projection the width must equal input_dim");
  }
}

UniFilterModel::UniFilterModel(UniFilterConfig config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const std::size_t w = config_.width, t = config_.order + 1;
  if (config_.input_projection) {
    input_weight = ad::Parameter("input.weight", uniform_tensor({config_.input_dim, w}, fan_bound(config_.input_dim), rng));
    input_bias = ad::Parameter("input.bias", uniform_tensor({w}, fan_bound(config_.input_dim), rng));
  }
  alpha = ad::Parameter("alpha", config_.per_channel ? ad::Tensor({t, w}, 1.0 / static_cast<double>(t))
                                                     : ad::Tensor({t}, 1.0 / static_cast<double>(t)));
  head_weight = ad::Parameter("head.weight", uniform_tensor({w, config_.outputs}, fan_bound(w), rng));
  head_bias = ad::Parameter("head.bias", uniform_tensor({config_.outputs}, fan_bound(w), rng));
}

std::vector<ad::Parameter*> UniFilterModel::parameters() {
  if (config_.input_projection) return {&input_weight, &input_bias, &alpha, &head_weight, &head_bias};
  return {&alpha, &head_weight, &head_bias};
}

namespace {

// M[(k, i), c] = alpha[k, c] * w[i, c] (alpha (T, w) or shared (T)), so that
// sum_k alpha[k, c] (H_k W)[b, c] = (H flattened to (B, T*d_in)) M.
ad::Var coefficient_mix(ad::Tape& tape, const ad::Var& alpha, const ad::Var& w) {
  const ad::Tensor& a = alpha.value();
  const ad::Tensor& wv = w.value();
  const std::size_t t = a.dim(0), din = wv.dim(0), width = wv.dim(1);
  const bool shared = a.rank() == 1;
  ad::Tensor out({t * din, width});
  for (std::size_t k = 0; k < t; ++k)
    for (std::size_t i = 0; i < din; ++i)
      for (std::size_t c = 0; c < width; ++c)
        out[(k * din + i) * width + c] = (shared ? a[k] : a[k * width + c]) * wv[i * width + c];
  const std::size_t ia = alpha.id(), iw = w.id();
  return tape.record(std::move(out), [ia, iw, t, din, width, shared](ad::Tape& tp, const ad::Tensor&, const ad::Tensor& g) {
    const ad::Tensor& av = tp.value(ia);
    const ad::Tensor& wv2 = tp.value(iw);
    ad::Tensor& ga = tp.grad(ia);
    ad::Tensor& gw = tp.grad(iw);
    for (std::size_t k = 0; k < t; ++k)
      for (std::size_t i = 0; i < din; ++i)
        for (std::size_t c = 0; c < width; ++c) {
          const double gk = g[(k * din + i) * width + c];
          const double ak = shared ? av[k] : av[k * width + c];
          (shared ? ga[k] : ga[k * width + c]) += gk * wv2[i * width + c];
          gw[i * width + c] += gk * ak;
        }
  });
}

}  // namespace

ad::Var UniFilterModel::forward(ad::Tape& tape, const ad::Var& tokens, bool) {
  check_token_shape(tokens, config_.order, config_.input_dim);
  if (!config_.input_projection) {
    const ad::Var z = unifilter_forward(tape, tokens, tape.param(alpha));
    return affine_rows(tape, z, head_weight, head_bias);
  }
  // Same map as projecting every token and filtering, without materializing
  // the (B, K+1, width) projection.
  const std::size_t batch = tokens.shape()[0], t = config_.order + 1;
  const ad::Var a = tape.param(alpha);
  const ad::Var mix = coefficient_mix(tape, a, tape.param(input_weight));
  ad::Var alpha_sum = ad::sum_rows(config_.per_channel ? a : ad::reshape(a, {t, 1}));
  if (!config_.per_channel) {
    alpha_sum = ad::matmul(ad::reshape(alpha_sum, {1, 1}), tape.constant(ad::Tensor({1, config_.width}, 1.0)));
    alpha_sum = ad::reshape(alpha_sum, {config_.width});
  }
  const ad::Var offset = ad::hadamard(tape.param(input_bias), alpha_sum);
  ad::Var z = ad::matmul(ad::reshape(tokens, {batch, t * config_.input_dim}), mix);
  z = ad::add(z, ad::broadcast_row(offset, {batch}));
  return affine_rows(tape, z, head_weight, head_bias);
}

std::vector<double> UniFilterModel::effective_coefficients() const {
  const std::size_t w = config_.width, t = config_.order + 1;
  std::vector<double> out(t, 0.0);
  for (std::size_t k = 0; k < t; ++k) {
    for (std::size_t c = 0; c < w; ++c) {
      const double a = config_.per_channel ? alpha.value[k * w + c] : alpha.value[k];
      const double in = config_.input_projection ? input_weight.value[c] : (c == 0 ? 1.0 : 0.0);
      out[k] += a * in * head_weight.value[c * config_.outputs];
    }
  }
  return out;
}

// -- attention regressor ------------------------------------------------------

AttnRegressor::AttnRegressor(AttnRegressorConfig config) : config_(config) {
  Rng rng(config_.seed);
  const std::size_t d = config_.hidden;
  input_weight = ad::Parameter("input.weight", uniform_tensor({config_.input_dim, d}, fan_bound(config_.input_dim), rng));
  input_bias = ad::Parameter("input.bias", uniform_tensor({d}, fan_bound(config_.input_dim), rng));
  PolyAttnConfig a;
  a.dim = d;
  a.order = config_.order;
  a.heads = config_.heads;
  a.mlp_factor = config_.mlp_factor;
  a.r = config_.r;
  a.activation = config_.activation;
  attn = PolyAttnParams::init(a, rng);
  for (ad::Parameter* p : attn.parameters()) p->name = "attn." + p->name;
  head_weight = ad::Parameter("head.weight", uniform_tensor({d, 1}, fan_bound(d), rng));
  head_bias = ad::Parameter("head.bias", uniform_tensor({1}, fan_bound(d), rng));
}

std::vector<ad::Parameter*> AttnRegressor::parameters() {
  std::vector<ad::Parameter*> out{&input_weight, &input_bias};
  for (ad::Parameter* p : attn.parameters()) out.push_back(p);
  out.push_back(&head_weight);
  out.push_back(&head_bias);
  return out;
}

ad::Var AttnRegressor::forward(ad::Tape& tape, const ad::Var& tokens, bool) {
  check_token_shape(tokens, config_.order, config_.input_dim);
  const ad::Var h = affine_rows(tape, tokens, input_weight, input_bias);
  PolyAttnOutput out = multihead_polyattn_forward(tape, h, attn);
  last_scores_ = std::move(out.scores);
  const ad::Var pooled = ad::sum_rows(out.tokens);
  return affine_rows(tape, pooled, head_weight, head_bias);
}

DenseMatrix AttnRegressor::effective_coefficients() const {
  const NodeCoefficients alpha = extract_node_coefficients(last_scores_);
  const std::size_t heads = alpha.heads, t = alpha.orders, d = config_.hidden, dh = d / heads;
  std::vector<double> gain(heads, 0.0);
  for (std::size_t m = 0; m < heads; ++m)
    for (std::size_t c = m * dh; c < (m + 1) * dh; ++c) gain[m] += input_weight.value[c] * head_weight.value[c];
  DenseMatrix out(alpha.batch, t);
  for (std::size_t b = 0; b < alpha.batch; ++b)
    for (std::size_t m = 0; m < heads; ++m)
      for (std::size_t j = 0; j < t; ++j) out(b, j) += alpha(b, m, j) * gain[m];
  return out;
}

}  // namespace nodefilter
