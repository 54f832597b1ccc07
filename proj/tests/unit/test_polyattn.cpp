#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "naive.hpp"
#include "nodefilter/basis.hpp"
#include "nodefilter/error.hpp"
#include "nodefilter/linalg.hpp"
#include "nodefilter/polyattn.hpp"
#include "nodefilter/tokens.hpp"
#include "oracles.hpp"

using namespace nodefilter;
using oracle::Mat;
using naive::slab;

namespace {

ad::Tensor random_tensor(ad::Shape shape, Rng& rng, double bound = 1.0) {
  ad::Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

PolyAttnParams random_params(const PolyAttnConfig& cfg, Rng& rng) {
  PolyAttnParams p = PolyAttnParams::init(cfg, rng);
  for (ad::Parameter* q : p.parameters())
    for (double& v : q->value.values()) v = rng.uniform(-1, 1);
  return p;
}

}  // namespace

TEST(PolyAttn, ForwardMatchesNaiveOracle) {
  Rng rng(1);
  for (Activation act : {Activation::Tanh, Activation::Softmax}) {
    for (std::size_t heads : {1u, 2u, 4u}) {
      PolyAttnConfig cfg;
      cfg.dim = 8;
      cfg.qk_dim = 12;
      cfg.order = 4;
      cfg.heads = heads;
      cfg.r = 0.7;
      cfg.activation = act;
      PolyAttnParams p = random_params(cfg, rng);
      const ad::Tensor h = random_tensor({3, 5, 8}, rng);
      ad::Tape tape;
      const ad::Tensor out = multihead_polyattn_forward(tape, tape.constant(h), p).tokens.value();
      for (std::size_t b = 0; b < 3; ++b) {
        const Mat want = naive::attention_layer(slab(h, b, 5, 8), p);
        EXPECT_LT((slab(out, b, 5, 8) - want).cwiseAbs().maxCoeff(), 1e-12) << "heads=" << heads;
      }
    }
  }
}

TEST(PolyAttn, OutputEqualsNodeCoefficientCombination) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    PolyAttnConfig cfg;
    cfg.dim = 1 + rng.below(6);
    cfg.order = rng.below(8);
    cfg.r = rng.uniform(0, 2);
    PolyAttnParams p = random_params(cfg, rng);
    const std::size_t t = cfg.order + 1, d = cfg.dim;
    const ad::Tensor h = random_tensor({4, t, d}, rng, 2.0);
    ad::Tape tape;
    const PolyAttnOutput out = polyattn_forward(tape, tape.constant(h), p);
    const NodeCoefficients alpha = extract_node_coefficients(out.scores);
    for (std::size_t b = 0; b < 4; ++b) {
      const Mat hb = slab(h, b, t, d);
      const Eigen::RowVectorXd lhs = slab(out.tokens.value(), b, t, d).colwise().sum();
      Eigen::RowVectorXd rhs = Eigen::RowVectorXd::Zero(d);
      for (std::size_t j = 0; j < t; ++j) rhs += alpha(b, 0, j) * hb.row(j);
      ASSERT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(PolyAttn, CoefficientsAreScoreColumnSums) {
  Rng rng(3);
  PolyAttnConfig cfg;
  cfg.dim = 4;
  cfg.order = 3;
  cfg.heads = 2;
  PolyAttnParams p = random_params(cfg, rng);
  ad::Tape tape;
  const PolyAttnOutput out = multihead_polyattn_forward(tape, tape.constant(random_tensor({2, 4, 4}, rng)), p);
  const NodeCoefficients alpha = extract_node_coefficients(out.scores);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t j = 0; j < 4; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += out.scores(b, m, k, j);
        EXPECT_DOUBLE_EQ(alpha(b, m, j), s);
      }
}

TEST(PolyAttn, MultiHeadGroupsEqualSingleHeadOnSlices) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t heads = trial % 2 ? 4 : 2;
    PolyAttnConfig cfg;
    cfg.dim = 8;
    cfg.order = 5;
    cfg.heads = heads;
    PolyAttnParams p = random_params(cfg, rng);
    const ad::Tensor h = random_tensor({3, 6, 8}, rng);
    ad::Tape tape;
    const ad::Var tokens = tape.constant(h);
    const ad::Tensor full = multihead_polyattn_forward(tape, tokens, p).tokens.value();
    const std::size_t g = 8 / heads;
    for (std::size_t m = 0; m < heads; ++m) {
      PolyAttnConfig sc = cfg;
      sc.heads = 1;
      sc.qk_dim = g;
      PolyAttnParams s = PolyAttnParams::zeros(sc);
      s.mlp_w1.value = p.mlp_w1.value;
      s.mlp_b1.value = p.mlp_b1.value;
      s.mlp_w2.value = p.mlp_w2.value;
      s.mlp_b2.value = p.mlp_b2.value;
      for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < g; ++c) {
          s.w_q.value[r * g + c] = p.w_q.value[r * 8 + m * g + c];
          s.w_k.value[r * g + c] = p.w_k.value[r * 8 + m * g + c];
        }
      for (std::size_t j = 0; j < 6; ++j) s.beta.value[j] = p.beta.value[m * 6 + j];
      const ad::Var v = ad::slice_cols(tokens, m * g, (m + 1) * g);
      const ad::Tensor part = polyattn_forward(tape, tokens, s, &v).tokens.value();
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t k = 0; k < 6; ++k)
          for (std::size_t c = 0; c < g; ++c)
            ASSERT_LE(std::abs(full[(b * 6 + k) * 8 + m * g + c] - part[(b * 6 + k) * g + c]), 1e-12);
    }
  }
}

TEST(PolyAttn, SoftmaxCoefficientsFollowBetaSigns) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    PolyAttnConfig cfg;
    cfg.dim = 3;
    cfg.order = 6;
    cfg.heads = 1;
    cfg.activation = Activation::Softmax;
    PolyAttnParams p = random_params(cfg, rng);
    for (double& b : p.beta.value.values()) b = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 2.0);
    ad::Tape tape;
    const NodeCoefficients a =
        extract_node_coefficients(polyattn_forward(tape, tape.constant(random_tensor({10, 7, 3}, rng, 3.0)), p).scores);
    for (std::size_t b = 0; b < 10; ++b)
      for (std::size_t j = 0; j < 7; ++j) ASSERT_EQ(std::signbit(a(b, 0, j)), std::signbit(p.beta.value[j]));
  }
}

TEST(PolyAttn, TanhFixtureGivesOppositeSignsAtOneOrder) {
  fixture::SignFlip f = fixture::tanh_sign_flip();
  ad::Tape tape;
  const NodeCoefficients a = extract_node_coefficients(polyattn_forward(tape, tape.constant(f.tokens), f.params).scores);
  EXPECT_NEAR(a(0, 0, 0), 2 * std::tanh(1.0), 1e-15);
  EXPECT_NEAR(a(1, 0, 0), std::tanh(1.0) - std::tanh(2.0), 1e-15);
  EXPECT_GT(a(0, 0, 0), 0.0);
  EXPECT_LT(a(1, 0, 0), 0.0);
}

TEST(PolyAttn, InitialisesBetaUniformly) {
  Rng rng(6);
  PolyAttnConfig cfg;
  cfg.dim = 4;
  cfg.order = 9;
  cfg.heads = 2;
  const PolyAttnParams p = PolyAttnParams::init(cfg, rng);
  for (double b : p.beta.value.values()) EXPECT_DOUBLE_EQ(b, 0.1);
  EXPECT_EQ(p.beta.value.shape(), (ad::Shape{2, 10}));
  EXPECT_EQ(p.mlp_w1.value.shape(), (ad::Shape{10, 4, 8}));
  for (double w : p.w_q.value.values()) EXPECT_LE(std::abs(w), 0.5);
}

TEST(PolyAttn, ValidationErrors) {
  PolyAttnConfig cfg;
  cfg.dim = 6;
  cfg.heads = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.heads = 3;
  cfg.qk_dim = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.qk_dim = 0;
  cfg.r = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_activation("relu"), ConfigError);
  EXPECT_EQ(parse_activation("softmax"), Activation::Softmax);

  Rng rng(7);
  PolyAttnConfig two;
  two.dim = 4;
  two.order = 2;
  two.heads = 2;
  PolyAttnParams p = PolyAttnParams::init(two, rng);
  ad::Tape tape;
  EXPECT_THROW(polyattn_forward(tape, tape.constant(ad::Tensor({1, 3, 4})), p), ConfigError);
}

TEST(FilterResponse, TokenCombinationEqualsSpectralResponse) {
  Rng rng(8);
  const Graph g = random_graph(30, 0.2, rng);
  const DenseMatrix x = oracle::random_matrix(30, 1, rng);
  const EigenDecomposition eig = jacobi_eigh(normalized_laplacian(g).to_dense());
  for (BasisKind basis : {BasisKind::Monomial, BasisKind::Chebyshev, BasisKind::Bernstein, BasisKind::Optimal}) {
    const TokenTensor t = compute_tokens(g, x, basis, 5);
    std::vector<double> alpha(6);
    for (double& a : alpha) a = rng.uniform(-1, 1);
    BasisOptions opt;
    if (basis == BasisKind::Optimal) opt.recurrence = &t.opt_coeffs()->channels[0];
    const std::vector<double> resp = filter_response(alpha, basis, eig.eigenvalues, opt);
    const FilterSpec h = FilterSpec::callable("r", [&](double lam) {
      const auto it = std::lower_bound(eig.eigenvalues.begin(), eig.eigenvalues.end(), lam);
      return resp[it - eig.eigenvalues.begin()];
    });
    const DenseMatrix want = spectral_filter(eig, h, x);
    for (std::size_t i = 0; i < 30; ++i) {
      double z = 0.0;
      for (std::size_t k = 0; k <= 5; ++k) z += alpha[k] * t(k, i, 0);
      EXPECT_NEAR(z, want(i, 0), 1e-9) << to_string(basis);
    }
  }
}

TEST(FilterResponse, OptimalNeedsRecurrence) {
  const double alpha[] = {1.0, 0.0};
  const double lam[] = {0.5};
  EXPECT_THROW(filter_response(alpha, BasisKind::Optimal, lam), ConfigError);
}
