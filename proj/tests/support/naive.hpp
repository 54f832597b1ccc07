#pragma once

// Per-node straight-line evaluations of the attention layer and the full
// model, used as oracles for the batched tape implementations.

#include <Eigen/Dense>

#include <cmath>

#include "nodefilter/model.hpp"
#include "nodefilter/polyattn.hpp"

namespace naive {

using Mat = Eigen::MatrixXd;
using Row = Eigen::RowVectorXd;

inline Mat slab(const nodefilter::ad::Tensor& t, std::size_t lead, std::size_t rows, std::size_t cols) {
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = t[(lead * rows + i) * cols + j];
  return m;
}

inline Row row_of(const nodefilter::ad::Tensor& t) { return slab(t, 0, 1, t.size()); }

inline Mat attention_layer(const Mat& h, const nodefilter::PolyAttnParams& p) {
  const nodefilter::PolyAttnConfig& c = p.config;
  const std::size_t t = c.order + 1, d = c.dim, dq = c.resolved_qk_dim(), md = c.mlp_factor * c.dim;
  Mat hm(t, d);
  for (std::size_t k = 0; k < t; ++k) {
    Row z = h.row(k) * slab(p.mlp_w1.value, k, d, md) + slab(p.mlp_b1.value, k, 1, md);
    z = z.cwiseMax(0.0);
    hm.row(k) = z * slab(p.mlp_w2.value, k, md, d) + slab(p.mlp_b2.value, k, 1, d);
  }
  const Mat q = hm * slab(p.w_q.value, 0, d, dq);
  const Mat kk = hm * slab(p.w_k.value, 0, d, dq);
  Mat out(t, d);
  const std::size_t gq = dq / c.heads, gv = d / c.heads;
  for (std::size_t m = 0; m < c.heads; ++m) {
    Mat s = q.middleCols(m * gq, gq) * kk.middleCols(m * gq, gq).transpose();
    for (std::size_t k = 0; k < t; ++k) {
      if (c.activation == nodefilter::Activation::Tanh) {
        s.row(k) = s.row(k).array().tanh();
      } else {
        const Row e = (s.row(k).array() - s.row(k).maxCoeff()).exp();
        s.row(k) = e / e.sum();
      }
      for (std::size_t j = 0; j < t; ++j) s(k, j) *= p.beta.value[m * t + j] / std::pow(j + 1.0, c.r);
    }
    out.middleCols(m * gv, gv) = s * h.middleCols(m * gv, gv);
  }
  return out;
}

inline Mat layer_norm(const Mat& x, const Row& gain, const Row& offset) {
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    y.row(i) = ((x.row(i).array() - mean) / std::sqrt(var + 1e-5)).matrix().cwiseProduct(gain) + offset;
  }
  return y;
}

// Logits of one node from its (K+1, d_in) token matrix.
inline Row model(const Mat& tokens, const nodefilter::ModelConfig& cfg, const nodefilter::ModelState& s) {
  const std::size_t d = cfg.hidden, f = cfg.ffn_hidden;
  Mat h = tokens * slab(s.input_weight.value, 0, cfg.input_dim, d);
  h.rowwise() += row_of(s.input_bias.value);
  for (const nodefilter::BlockParams& b : s.blocks) {
    h += attention_layer(layer_norm(h, row_of(b.ln1_gain.value), row_of(b.ln1_offset.value)), b.attn);
    Mat z = layer_norm(h, row_of(b.ln2_gain.value), row_of(b.ln2_offset.value)) * slab(b.ffn_w1.value, 0, d, f);
    z.rowwise() += row_of(b.ffn_b1.value);
    z = z.cwiseMax(0.0) * slab(b.ffn_w2.value, 0, f, d);
    z.rowwise() += row_of(b.ffn_b2.value);
    h += z;
  }
  const Row pooled = h.colwise().sum();
  return (pooled * slab(s.readout_w1.value, 0, d, cfg.readout_hidden)).cwiseMax(0.0) *
         slab(s.readout_w2.value, 0, cfg.readout_hidden, cfg.classes);
}

}  // namespace naive
