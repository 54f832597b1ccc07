#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nodefilter/basis.hpp"
#include "nodefilter/error.hpp"
#include "nodefilter/linalg.hpp"
#include "nodefilter/synth.hpp"
#include "oracles.hpp"

using namespace nodefilter;

TEST(Tasks, SixTwoRegimeTasks) {
  EXPECT_EQ(synthetic_tasks().size(), 6u);
  const TaskDefinition& lh = find_task("low-and-high-pass");
  EXPECT_EQ(lh.filter1, "low-pass-10");
  EXPECT_EQ(lh.filter2, "high-pass-10");
  for (const TaskDefinition& t : synthetic_tasks()) {
    EXPECT_NO_THROW(FilterSpec::named(t.filter1));
    EXPECT_NO_THROW(FilterSpec::named(t.filter2));
  }
  EXPECT_THROW(find_task("mixed-notch"), ConfigError);
}

TEST(Tasks, UniformSignalIsSeededAndBounded) {
  const auto a = uniform_signal(500, 3);
  EXPECT_EQ(a, uniform_signal(500, 3));
  EXPECT_NE(a, uniform_signal(500, 4));
  for (double v : a) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Tasks, TargetMatchesMaskedSpectralOracle) {
  const Graph g = grid_graph(7, 6);
  const auto x = uniform_signal(42, 1);
  const SyntheticTask t = make_synthetic_task(g, x, "mixed-band-pass");
  Eigen::SelfAdjointEigenSolver<oracle::Mat> es(oracle::norm_laplacian(g));
  auto apply = [&](const char* name, const oracle::Vec& v) {
    const FilterSpec h = FilterSpec::named(name);
    const oracle::Vec hl = es.eigenvalues().unaryExpr([&](double l) { return h(l); });
    return oracle::Vec(es.eigenvectors() * hl.asDiagonal() * es.eigenvectors().transpose() * v);
  };
  oracle::Vec x1 = oracle::Vec::Zero(42), x2 = oracle::Vec::Zero(42);
  for (std::size_t i = 0; i < 42; ++i) (x[i] < 0.5 ? x1 : x2)(i) = x[i];
  const oracle::Vec z1 = apply("band-pass-5", x1), z2 = apply("band-pass-20", x2);
  for (std::size_t i = 0; i < 42; ++i) {
    EXPECT_EQ(t.regime[i], x[i] < 0.5 ? 1 : 2);
    EXPECT_NEAR(t.z[i], x[i] < 0.5 ? z1(i) : z2(i), 1e-12);
  }
}

TEST(Tasks, ReproducibleBitForBit) {
  const Graph g = grid_graph(6, 6);
  const auto x = uniform_signal(36, 9);
  EXPECT_EQ(make_synthetic_task(g, x, "low-and-high-pass").z, make_synthetic_task(g, x, "low-and-high-pass").z);
}

TEST(Tasks, SignalValidation) {
  const Graph g = grid_graph(2, 2);
  const std::vector<double> bad = {0.1, 0.2, 1.5, 0.3};
  EXPECT_THROW(make_synthetic_task(g, bad, "mixed-low-pass"), ConfigError);
  const std::vector<double> one_regime = {0.6, 0.7, 0.8, 0.9};
  std::vector<std::string> warnings;
  EXPECT_NO_THROW(make_synthetic_task(g, one_regime, "mixed-low-pass", &warnings));
  EXPECT_EQ(warnings.size(), 1u);
  const std::vector<double> short_signal = {0.1};
  EXPECT_THROW(make_synthetic_task(g, short_signal, "mixed-low-pass"), ShapeError);
}

TEST(Tasks, TaskCsvColumns) {
  const Graph g = grid_graph(2, 2);
  const SyntheticTask t = make_synthetic_task(g, uniform_signal(4, 0), "mixed-high-pass");
  std::ostringstream out;
  write_task_csv(out, t);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "node_id,x,z,regime");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(Fit, ParameterBudgetsMatchWithinTenPercent) {
  FitConfig cfg;
  for (std::size_t hidden : {4u, 8u, 12u}) {
    cfg.hidden = hidden;
    const double attn = static_cast<double>(attn_regressor_parameter_count(cfg));
    const std::size_t w = matched_unifilter_width(static_cast<std::size_t>(attn), cfg.order);
    const double uni = static_cast<double>((1 + cfg.order + 3) * w + 1);
    EXPECT_LE(std::abs(uni - attn) / attn, 0.10) << hidden;
  }
}

TEST(Fit, UniFilterRealizesPolynomialFilterExactly) {
  // h(lambda) = 0.6 T_0 - 0.3 T_1 + 0.2 T_2 in the shifted Chebyshev basis.
  // Regimes are filtered separately, so the signal stays inside regime 1
  // to make the target a polynomial in the tokens.
  const Graph g = grid_graph(6, 6);
  const EigenDecomposition eig = jacobi_eigh(normalized_laplacian(g).to_dense());
  const FilterSpec h = FilterSpec::callable("poly", [](double l) {
    const double m = l - 1.0;
    return 0.6 - 0.3 * m + 0.2 * (2 * m * m - 1);
  });
  std::vector<double> x = uniform_signal(36, 2);
  for (double& v : x) v *= 0.49;
  const SyntheticTask task = make_synthetic_task(g, eig, x, h, h, "poly");
  FitConfig cfg;
  cfg.order = 2;
  cfg.unifilter_width = 1;
  cfg.lr = 0.01;
  cfg.max_epochs = 6000;
  cfg.patience = 0;
  const FitResult r = fit_task(task, FitModel::UniFilter, cfg);
  EXPECT_GE(r.r2, 1.0 - 1e-6);
}

TEST(Fit, DeterministicPerSeed) {
  const Graph g = grid_graph(4, 4);
  const SyntheticTask task = make_synthetic_task(g, uniform_signal(16, 1), "low-and-high-pass");
  FitConfig cfg;
  cfg.max_epochs = 30;
  cfg.seed = 5;
  const FitResult a = fit_task(task, FitModel::PolyAttn, cfg);
  const FitResult b = fit_task(task, FitModel::PolyAttn, cfg);
  EXPECT_EQ(a.prediction, b.prediction);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(a.epochs_run, 30u);
  cfg.seed = 6;
  EXPECT_NE(fit_task(task, FitModel::PolyAttn, cfg).prediction, a.prediction);
}

TEST(Fit, AblationSharesParameterCount) {
  const Graph g = grid_graph(3, 3);
  const SyntheticTask task = make_synthetic_task(g, uniform_signal(9, 1), "mixed-band-pass");
  FitConfig cfg;
  cfg.max_epochs = 2;
  EXPECT_EQ(fit_task(task, FitModel::PolyAttn, cfg).parameter_count,
            fit_task(task, FitModel::SelfAttn, cfg).parameter_count);
  EXPECT_THROW(parse_fit_model("gcn"), ConfigError);
  EXPECT_EQ(parse_fit_model("selfattn"), FitModel::SelfAttn);
}

TEST(Fit, EffectiveCoefficientsExplainPredictionsUpToNodeOffset) {
  // with one node-shared filter the prediction is linear in the tokens
  const Graph g = grid_graph(5, 5);
  const SyntheticTask task = make_synthetic_task(g, uniform_signal(25, 3), "mixed-low-pass");
  FitConfig cfg;
  cfg.max_epochs = 20;
  const FitResult r = fit_task(task, FitModel::UniFilter, cfg);
  const TokenTensor t = compute_tokens(task.graph, DenseMatrix(25, 1, task.x), cfg.basis, cfg.order, cfg.cheb_shifted);
  std::vector<double> offset;
  for (std::size_t i = 0; i < 25; ++i) {
    double lin = 0.0;
    for (std::size_t k = 0; k <= cfg.order; ++k) lin += r.alpha(i, k) * t(k, i, 0);
    offset.push_back(r.prediction[i] - lin);
  }
  for (double o : offset) EXPECT_NEAR(o, offset[0], 1e-12);
}

TEST(Clusters, IdenticalCoefficientsGiveThatResponse) {
  DenseMatrix alpha(10, 4);
  const double row[] = {0.5, -0.2, 0.1, 0.3};
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t k = 0; k < 4; ++k) alpha(i, k) = row[k];
  const FilterClusters c = cluster_learned_filters(alpha, 1, BasisKind::Chebyshev, {}, 17);
  ASSERT_EQ(c.lambdas.size(), 17u);
  EXPECT_EQ(c.lambdas.front(), 0.0);
  EXPECT_EQ(c.lambdas.back(), 2.0);
  for (std::size_t p = 0; p < 17; ++p) {
    const auto t = basis_responses(BasisKind::Chebyshev, 3, c.lambdas[p]);
    double want = 0.0;
    for (std::size_t k = 0; k < 4; ++k) want += row[k] * t[k];
    EXPECT_NEAR(c.curves(p, 0), want, 1e-14);
  }
}

TEST(Clusters, RegimeAgreementUsesBestLabelMatching) {
  const std::size_t a[] = {0, 0, 1, 1, 1};
  const int regime[] = {2, 2, 1, 1, 2};
  EXPECT_DOUBLE_EQ(regime_agreement(a, regime), 0.8);
  const std::size_t three[] = {0, 2};
  const int r2[] = {1, 2};
  EXPECT_THROW(regime_agreement(three, r2), ConfigError);
}

TEST(Clusters, CsvWriters) {
  DenseMatrix alpha(3, 2, 1.0);
  std::ostringstream a;
  write_alpha_csv(a, alpha);
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "node_id,alpha_0,alpha_1");
  const FilterClusters c = cluster_learned_filters(alpha, 1, BasisKind::Monomial, {}, 4);
  std::ostringstream cv;
  write_curves_csv(cv, c);
  EXPECT_EQ(cv.str().substr(0, cv.str().find('\n')), "lambda,cluster_0");
}
