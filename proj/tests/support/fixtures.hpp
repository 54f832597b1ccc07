#pragma once

#include "nodefilter/autodiff.hpp"
#include "nodefilter/polyattn.hpp"

namespace fixture {

// One-channel, two-order layer whose MLP is the identity (ReLU(x) - ReLU(-x))
// and whose query/key maps are 1, so S_kj = tanh(h_k h_j) beta_j / (j + 1).
// Node 0 has tokens (1, 1), node 1 has (-1, 2); alpha_0 is 2 tanh(1) > 0 for
// node 0 and tanh(1) - tanh(2) < 0 for node 1.
struct SignFlip {
  nodefilter::PolyAttnParams params;
  nodefilter::ad::Tensor tokens;
};

inline SignFlip tanh_sign_flip() {
  nodefilter::PolyAttnConfig cfg;
  cfg.dim = 1;
  cfg.order = 1;
  cfg.mlp_factor = 2;
  cfg.activation = nodefilter::Activation::Tanh;
  SignFlip f{nodefilter::PolyAttnParams::zeros(cfg), nodefilter::ad::Tensor({2, 2, 1}, {1.0, 1.0, -1.0, 2.0})};
  f.params.w_q.value[0] = 1.0;
  f.params.w_k.value[0] = 1.0;
  for (std::size_t k = 0; k < 2; ++k) {
    f.params.mlp_w1.value[k * 2 + 0] = 1.0;
    f.params.mlp_w1.value[k * 2 + 1] = -1.0;
    f.params.mlp_w2.value[k * 2 + 0] = 1.0;
    f.params.mlp_w2.value[k * 2 + 1] = -1.0;
  }
  f.params.beta.value[0] = 1.0;
  f.params.beta.value[1] = 1.0;
  return f;
}

}  // namespace fixture
