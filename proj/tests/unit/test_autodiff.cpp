#include <gtest/gtest.h>

#include <cmath>

#include "nodefilter/autodiff.hpp"
#include "nodefilter/error.hpp"
#include "nodefilter/rng.hpp"

using namespace nodefilter;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

using BinaryOp = std::function<Var(const Var&, const Var&)>;

struct PrimitiveCase {
  std::string name;
  Shape a, b;
  BinaryOp op;
};

void PrintTo(const PrimitiveCase& c, std::ostream* os) { *os << c.name; }

std::vector<PrimitiveCase> primitive_cases() {
  return {
      {"matmul2d", {3, 4}, {4, 2}, [](const Var& a, const Var& b) { return ad::matmul(a, b); }},
      {"matmul3d", {2, 3, 4}, {4, 5}, [](const Var& a, const Var& b) { return ad::matmul(a, b); }},
      {"bmm", {2, 3, 4}, {2, 4, 3}, [](const Var& a, const Var& b) { return ad::bmm(a, b); }},
      {"bmm_nt", {2, 3, 4}, {2, 5, 4}, [](const Var& a, const Var& b) { return ad::bmm_nt(a, b); }},
      {"orderwise", {2, 3, 4}, {3, 4, 2}, [](const Var& a, const Var& b) { return ad::orderwise_matmul(a, b); }},
      {"add", {2, 3}, {2, 3}, [](const Var& a, const Var& b) { return ad::add(a, b); }},
      {"sub", {2, 3}, {2, 3}, [](const Var& a, const Var& b) { return ad::sub(a, b); }},
      {"hadamard", {2, 3}, {2, 3}, [](const Var& a, const Var& b) { return ad::hadamard(a, b); }},
      {"layer_norm", {2, 3, 5}, {5}, [](const Var& a, const Var& b) { return ad::layer_norm_rows(a, b, b); }},
      {"concat", {2, 2}, {2, 3}, [](const Var& a, const Var& b) {
         const Var parts[] = {a, b, a};
         return ad::concat_cols(parts);
       }},
      {"scale", {4, 1}, {1}, [](const Var& a, const Var& b) { return ad::hadamard(ad::scale(a, -2.5), ad::broadcast_row(b, {4})); }},
      {"tanh", {2, 3}, {1}, [](const Var& a, const Var&) { return ad::tanh(a); }},
      {"relu", {2, 3}, {1}, [](const Var& a, const Var&) { return ad::relu(a); }},
      {"softmax", {2, 3, 4}, {1}, [](const Var& a, const Var&) { return ad::softmax_rows(a); }},
      {"sum_rows3", {2, 3, 4}, {1}, [](const Var& a, const Var&) { return ad::sum_rows(a); }},
      {"sum_rows2", {3, 4}, {1}, [](const Var& a, const Var&) { return ad::sum_rows(a); }},
      {"slice", {2, 6}, {1}, [](const Var& a, const Var&) { return ad::slice_cols(a, 2, 5); }},
      {"broadcast", {3}, {1}, [](const Var& a, const Var&) { return ad::broadcast_row(a, {2, 2}); }},
      {"reshape", {2, 6}, {1}, [](const Var& a, const Var&) { return ad::reshape(a, {3, 4}); }},
      {"mean_all", {2, 6}, {1}, [](const Var& a, const Var&) { return ad::mean_all(a); }},
  };
}

}  // namespace

class PrimitiveGradient : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const PrimitiveCase& c = GetParam();
  Rng rng(std::hash<std::string>{}(c.name));
  ad::Parameter a("a", random_tensor(c.a, rng));
  for (double& v : a.value.values())
    if (std::abs(v) < 0.05) v = 0.3;
  ad::Parameter b("b", random_tensor(c.b, rng));
  Tensor probe;
  {
    ad::Tape t;
    probe = random_tensor(c.op(t.param(a), t.param(b)).shape(), rng);
  }
  ad::Parameter* params[] = {&a, &b};
  const auto report = ad::grad_check(
      [&](ad::Tape& t) { return ad::sum_all(ad::hadamard(c.op(t.param(a), t.param(b)), t.constant(probe))); }, params);
  EXPECT_LT(report.max_rel_error, 1e-7);
}

INSTANTIATE_TEST_SUITE_P(Primitives, PrimitiveGradient, ::testing::ValuesIn(primitive_cases()),
                         [](const auto& info) { return info.param.name; });

TEST(Autodiff, CrossEntropyGradient) {
  Rng rng(1);
  ad::Parameter logits("logits", random_tensor({5, 3}, rng));
  const std::vector<std::size_t> labels = {0, 2, 1, 1, 0};
  ad::Parameter* params[] = {&logits};
  const auto r = ad::grad_check([&](ad::Tape& t) { return ad::cross_entropy(t.param(logits), labels); }, params);
  EXPECT_LT(r.max_rel_error, 1e-7);
}

TEST(Autodiff, MatmulForwardValues) {
  ad::Tape t;
  const Var a = t.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  const Var b = t.constant(Tensor({2, 1}, {5, 6}));
  EXPECT_EQ(ad::matmul(a, b).value(), Tensor({2, 1}, {17, 39}));
  EXPECT_EQ(ad::bmm_nt(ad::reshape(a, {1, 2, 2}), ad::reshape(a, {1, 2, 2})).value(), Tensor({1, 2, 2}, {5, 11, 11, 25}));
}

TEST(Autodiff, SoftmaxRowsSumToOneAndAreShiftInvariant) {
  ad::Tape t;
  const Var x = t.constant(Tensor({2, 3}, {1000, 1001, 1002, -2, -1, 0}));
  const Tensor& s = ad::softmax_rows(x).value();
  EXPECT_NEAR(s[0] + s[1] + s[2], 1.0, 1e-15);
  EXPECT_NEAR(s[3] + s[4] + s[5], 1.0, 1e-15);
  EXPECT_NEAR(s[0], s[3], 1e-15);
  EXPECT_TRUE(std::isfinite(s[2]));
}

TEST(Autodiff, LayerNormForwardMatchesFormula) {
  ad::Tape t;
  const Var x = t.constant(Tensor({1, 4}, {1, 2, 3, 6}));
  const Var g = t.constant(Tensor({4}, {1, 1, 1, 1}));
  const Var o = t.constant(Tensor({4}, {0, 0, 0, 0}));
  const Tensor& y = ad::layer_norm_rows(x, g, o).value();
  const double mean = 3.0, var = (4 + 1 + 0 + 9) / 4.0;
  EXPECT_NEAR(y[3], (6 - mean) / std::sqrt(var + 1e-5), 1e-14);
}

TEST(Autodiff, CrossEntropyValue) {
  ad::Tape t;
  const Var x = t.constant(Tensor({1, 2}, {0.0, std::log(3.0)}));
  const std::size_t label[] = {1};
  EXPECT_NEAR(ad::cross_entropy(x, label).value().item(), -std::log(0.75), 1e-15);
  const std::size_t bad[] = {2};
  EXPECT_THROW(ad::cross_entropy(x, bad), std::out_of_range);
}

TEST(Autodiff, GradientsAccumulateAcrossBackwardCalls) {
  ad::Parameter p("p", Tensor({2}, {1.0, -2.0}));
  for (int i = 0; i < 2; ++i) {
    ad::Tape t;
    t.backward(ad::sum_all(ad::scale(t.param(p), 3.0)));
  }
  EXPECT_EQ(p.grad, Tensor({2}, {6.0, 6.0}));
  p.zero_grad();
  EXPECT_EQ(p.grad, Tensor({2}, {0.0, 0.0}));
}

TEST(Autodiff, ParameterUsedTwiceSumsContributions) {
  ad::Parameter p("p", Tensor({1}, {3.0}));
  ad::Tape t;
  const Var v = t.param(p);
  t.backward(ad::sum_all(ad::hadamard(v, v)));
  EXPECT_DOUBLE_EQ(p.grad[0], 6.0);
}

TEST(Autodiff, BackwardNeedsScalarLoss) {
  ad::Tape t;
  const Var v = t.constant(Tensor({2}, {1, 2}));
  EXPECT_THROW(t.backward(v), std::invalid_argument);
}

TEST(Autodiff, ShapeMismatchesThrow) {
  ad::Tape t;
  const Var a = t.constant(Tensor({2, 3}));
  const Var b = t.constant(Tensor({2, 2}));
  EXPECT_THROW(ad::matmul(a, b), ShapeError);
  EXPECT_THROW(ad::add(a, b), ShapeError);
  EXPECT_THROW(ad::bmm(a, b), ShapeError);
  EXPECT_THROW(ad::slice_cols(a, 2, 4), ShapeError);
  EXPECT_THROW(ad::reshape(a, {5}), ShapeError);
}

TEST(Autodiff, GradCheckFlagsAWrongRule) {
  ad::Parameter p("p", Tensor({3}, {0.5, -0.2, 0.9}));
  ad::Parameter* params[] = {&p};
  const auto r = ad::grad_check(
      [&](ad::Tape& t) {
        const Var x = t.param(p);
        Tensor y = x.value();
        for (double& v : y.values()) v = v * v;
        // claims d(x^2)/dx = x instead of 2x
        const Var sq = t.record(y, [id = x.id()](ad::Tape& tape, const Tensor&, const Tensor& g) {
          for (std::size_t i = 0; i < g.size(); ++i) tape.grad(id)[i] += g[i] * tape.value(id)[i];
        });
        return ad::sum_all(sq);
      },
      params);
  EXPECT_GT(r.max_rel_error, 0.1);
}

TEST(Autodiff, GradCheckRejectsNondeterministicLoss) {
  ad::Parameter p("p", Tensor({1}, {1.0}));
  ad::Parameter* params[] = {&p};
  int calls = 0;
  EXPECT_THROW(ad::grad_check(
                   [&](ad::Tape& t) { return ad::scale(ad::sum_all(t.param(p)), 1.0 + 1e-3 * ++calls); }, params),
               std::runtime_error);
}
