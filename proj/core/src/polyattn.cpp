#include "nodefilter/polyattn.hpp"

#include <cmath>
#include <string>

#include "nodefilter/error.hpp"

namespace nodefilter {

std::string_view to_string(Activation activation) {
  return activation == Activation::Tanh ? "tanh" : "softmax";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "softmax") return Activation::Softmax;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected tanh or softmax)");
}

void PolyAttnConfig::validate() const {
  if (dim == 0) throw ConfigError("attention: token dimension must be positive");
  if (heads == 0) throw ConfigError("attention: need at least one head");
  if (mlp_factor == 0) throw ConfigError("attention: MLP factor must be positive");
  if (r < 0.0 || !std::isfinite(r)) throw ConfigError("attention: bias decay r must be >= 0");
  if (dim % heads != 0) {
    throw ConfigError("attention: hidden dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (resolved_qk_dim() % heads != 0) {
    throw ConfigError("attention: query/key dim " + std::to_string(resolved_qk_dim()) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

namespace {

ad::Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng) {
  ad::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

PolyAttnParams PolyAttnParams::zeros(const PolyAttnConfig& config) {
  config.validate();
  const std::size_t d = config.dim, dq = config.resolved_qk_dim(), t = config.order + 1;
  const std::size_t md = config.mlp_factor * d;
  PolyAttnParams p;
  p.config = config;
  p.w_q = ad::Parameter("w_q", ad::Tensor({d, dq}));
  p.w_k = ad::Parameter("w_k", ad::Tensor({d, dq}));
  p.mlp_w1 = ad::Parameter("mlp_w1", ad::Tensor({t, d, md}));
  p.mlp_b1 = ad::Parameter("mlp_b1", ad::Tensor({t, md}));
  p.mlp_w2 = ad::Parameter("mlp_w2", ad::Tensor({t, md, d}));
  p.mlp_b2 = ad::Parameter("mlp_b2", ad::Tensor({t, d}));
  p.beta = ad::Parameter("beta", ad::Tensor({config.heads, t}));
  return p;
}

PolyAttnParams PolyAttnParams::init(const PolyAttnConfig& config, Rng& rng) {
  PolyAttnParams p = zeros(config);
  const std::size_t d = config.dim, dq = config.resolved_qk_dim(), t = config.order + 1;
  const std::size_t md = config.mlp_factor * d;
  const double qk_bound = 1.0 / std::sqrt(static_cast<double>(d));
  p.w_q.value = uniform_tensor({d, dq}, qk_bound, rng);
  p.w_k.value = uniform_tensor({d, dq}, qk_bound, rng);
  p.mlp_w1.value = uniform_tensor({t, d, md}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  p.mlp_b1.value = uniform_tensor({t, md}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  p.mlp_w2.value = uniform_tensor({t, md, d}, 1.0 / std::sqrt(static_cast<double>(md)), rng);
  p.mlp_b2.value = uniform_tensor({t, d}, 1.0 / std::sqrt(static_cast<double>(md)), rng);
  p.beta.value = ad::Tensor({config.heads, t}, 1.0 / static_cast<double>(t));
  return p;
}

std::vector<ad::Parameter*> PolyAttnParams::parameters() {
  return {&w_q, &w_k, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2, &beta};
}

namespace {

PolyAttnOutput attention(ad::Tape& tape, const ad::Var& tokens, PolyAttnParams& params, const ad::Var* values) {
  const PolyAttnConfig& cfg = params.config;
  cfg.validate();
  const ad::Shape& shape = tokens.shape();
  const std::size_t t = cfg.order + 1;
  if (shape.size() != 3 || shape[1] != t || shape[2] != cfg.dim) {
    throw ShapeError("attention: tokens " + ad::shape_string(shape) + " do not match (B, " + std::to_string(t) +
                     ", " + std::to_string(cfg.dim) + ")");
  }
  const std::size_t batch = shape[0];
  const ad::Var v = values != nullptr ? *values : tokens;
  if (v.shape().size() != 3 || v.shape()[0] != batch || v.shape()[1] != t) {
    throw ShapeError("attention: values " + ad::shape_string(v.shape()) + " do not match the tokens");
  }
  const std::size_t heads = cfg.heads;
  const std::size_t value_dim = v.shape()[2];
  if (value_dim % heads != 0) throw ShapeError("attention: value width not divisible by the head count");

  // order-wise MLP, one per token order
  ad::Var hidden = ad::orderwise_matmul(tokens, tape.param(params.mlp_w1));
  hidden = ad::relu(ad::add(hidden, ad::broadcast_row(tape.param(params.mlp_b1), {batch})));
  ad::Var mixed = ad::orderwise_matmul(hidden, tape.param(params.mlp_w2));
  mixed = ad::add(mixed, ad::broadcast_row(tape.param(params.mlp_b2), {batch}));

  const ad::Var q = ad::matmul(mixed, tape.param(params.w_q));
  const ad::Var k = ad::matmul(mixed, tape.param(params.w_k));

  ad::Tensor decay({t});
  for (std::size_t j = 0; j < t; ++j) decay[j] = 1.0 / std::pow(static_cast<double>(j + 1), cfg.r);
  const ad::Var decay_v = tape.constant(std::move(decay));
  const ad::Var beta_flat = ad::reshape(tape.param(params.beta), {1, heads * t});

  const std::size_t dq = cfg.resolved_qk_dim() / heads;
  const std::size_t dv = value_dim / heads;
  std::vector<ad::Var> head_out;
  AttnScores scores{batch, heads, t, std::vector<double>(batch * heads * t * t)};
  for (std::size_t m = 0; m < heads; ++m) {
    const ad::Var qm = heads == 1 ? q : ad::slice_cols(q, m * dq, (m + 1) * dq);
    const ad::Var km = heads == 1 ? k : ad::slice_cols(k, m * dq, (m + 1) * dq);
    ad::Var logits = ad::bmm_nt(qm, km);
    logits = cfg.activation == Activation::Tanh ? ad::tanh(logits) : ad::softmax_rows(logits);
    const ad::Var beta_m = ad::reshape(ad::slice_cols(beta_flat, m * t, (m + 1) * t), {t});
    const ad::Var bias = ad::broadcast_row(ad::hadamard(beta_m, decay_v), {batch, t});
    const ad::Var s = ad::hadamard(logits, bias);

    const ad::Tensor& sv = s.value();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t e = 0; e < t * t; ++e) scores.values[(b * heads + m) * t * t + e] = sv[b * t * t + e];

    const ad::Var vm = heads == 1 ? v : ad::slice_cols(v, m * dv, (m + 1) * dv);
    head_out.push_back(ad::bmm(s, vm));
  }
  const ad::Var out = heads == 1 ? head_out.front() : ad::concat_cols(head_out);
  return PolyAttnOutput{out, std::move(scores)};
}

}  // namespace

PolyAttnOutput polyattn_forward(ad::Tape& tape, const ad::Var& tokens, PolyAttnParams& params,
                                const ad::Var* values) {
  if (params.config.heads != 1) throw ConfigError("polyattn_forward: parameters hold more than one head");
  return attention(tape, tokens, params, values);
}

PolyAttnOutput multihead_polyattn_forward(ad::Tape& tape, const ad::Var& tokens, PolyAttnParams& params) {
  return attention(tape, tokens, params, nullptr);
}

NodeCoefficients extract_node_coefficients(const AttnScores& scores) {
  const std::size_t t = scores.orders;
  NodeCoefficients out{scores.batch, scores.heads, t, std::vector<double>(scores.batch * scores.heads * t)};
  for (std::size_t b = 0; b < scores.batch; ++b)
    for (std::size_t m = 0; m < scores.heads; ++m)
      for (std::size_t k = 0; k < t; ++k)
        for (std::size_t j = 0; j < t; ++j) out.values[(b * scores.heads + m) * t + j] += scores(b, m, k, j);
  return out;
}

std::vector<double> filter_response(std::span<const double> alpha, BasisKind basis, std::span<const double> lambdas,
                                    const BasisOptions& options) {
  if (alpha.empty()) throw ShapeError("filter_response: empty coefficient vector");
  if (basis == BasisKind::Optimal && options.recurrence == nullptr) {
    throw ConfigError("filter_response: optimal basis needs the stored recurrence coefficients");
  }
  const std::size_t order = alpha.size() - 1;
  std::vector<double> out;
  out.reserve(lambdas.size());
  for (double lambda : lambdas) {
    const std::vector<double> t = basis_responses(basis, order, lambda, options);
    double s = 0.0;
    for (std::size_t k = 0; k <= order; ++k) s += alpha[k] * t[k];
    out.push_back(s);
  }
  return out;
}

}  // namespace nodefilter
