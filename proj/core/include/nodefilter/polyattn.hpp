#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "nodefilter/autodiff.hpp"
#include "nodefilter/basis.hpp"
#include "nodefilter/rng.hpp"

namespace nodefilter {

enum class Activation { Tanh, Softmax };

std::string_view to_string(Activation activation);
// "tanh" or "softmax"; throws ConfigError otherwise.
Activation parse_activation(std::string_view name);

struct PolyAttnConfig {
  std::size_t dim = 16;         // token width d
  std::size_t qk_dim = 0;       // d'; 0 means d
  std::size_t order = 10;       // K, so K + 1 tokens per node
  std::size_t heads = 1;
  std::size_t mlp_factor = 2;   // order-wise MLP hidden width m * d
  double r = 1.0;               // bias decay B_kj = beta_j / (j + 1)^r
  Activation activation = Activation::Tanh;

  std::size_t resolved_qk_dim() const noexcept { return qk_dim == 0 ? dim : qk_dim; }
  // Throws ConfigError when d or d' is not divisible by the head count.
  void validate() const;
};

// Learnable state of one attention layer. Per-order MLP weights are stacked
// along the leading axis.
struct PolyAttnParams {
  PolyAttnConfig config;
  ad::Parameter w_q;     // (d, d')
  ad::Parameter w_k;     // (d, d')
  ad::Parameter mlp_w1;  // (K+1, d, m*d)
  ad::Parameter mlp_b1;  // (K+1, m*d)
  ad::Parameter mlp_w2;  // (K+1, m*d, d)
  ad::Parameter mlp_b2;  // (K+1, d)
  ad::Parameter beta;    // (h, K+1)

  // beta = 1/(K+1); W_Q, W_K ~ U(+-1/sqrt(d)); MLP weights ~ U(+-1/sqrt(fan_in)).
  static PolyAttnParams init(const PolyAttnConfig& config, Rng& rng);
  // All-zero tensors with the configured shapes.
  static PolyAttnParams zeros(const PolyAttnConfig& config);

  std::vector<ad::Parameter*> parameters();
};

// Attention scores S per node and head, [node][head][k][j].
struct AttnScores {
  std::size_t batch = 0;
  std::size_t heads = 0;
  std::size_t orders = 0;
  std::vector<double> values;

  double operator()(std::size_t node, std::size_t head, std::size_t k, std::size_t j) const {
    return values[((node * heads + head) * orders + k) * orders + j];
  }
};

// Per-node polynomial coefficients alpha_j = sum_k S_kj, [node][head][j].
struct NodeCoefficients {
  std::size_t batch = 0;
  std::size_t heads = 0;
  std::size_t orders = 0;
  std::vector<double> values;

  double operator()(std::size_t node, std::size_t head, std::size_t j) const {
    return values[(node * heads + head) * orders + j];
  }
  std::span<const double> of(std::size_t node, std::size_t head = 0) const {
    return std::span<const double>(values).subspan((node * heads + head) * orders, orders);
  }
};

struct PolyAttnOutput {
  ad::Var tokens;  // (B, K+1, d)
  AttnScores scores;
};

// Single-head layer on tokens (B, K+1, d). Values default to the input
// tokens; `values` (B, K+1, e) substitutes another value matrix.
// Throws ConfigError if params hold more than one head.
PolyAttnOutput polyattn_forward(ad::Tape& tape, const ad::Var& tokens, PolyAttnParams& params,
                                const ad::Var* values = nullptr);

// Head m uses Q/K columns [m d'/h, (m+1) d'/h), bias row m and value
// columns [m d/h, (m+1) d/h); head outputs are concatenated.
PolyAttnOutput multihead_polyattn_forward(ad::Tape& tape, const ad::Var& tokens, PolyAttnParams& params);

NodeCoefficients extract_node_coefficients(const AttnScores& scores);

// sum_k alpha_k t_k(lambda) for every lambda, t_k the scalar basis response.
std::vector<double> filter_response(std::span<const double> alpha, BasisKind basis, std::span<const double> lambdas,
                                    const BasisOptions& options = {});

}  // namespace nodefilter
