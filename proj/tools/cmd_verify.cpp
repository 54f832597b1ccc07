#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli_common.hpp"
#include "commands.hpp"
#include "nodefilter/autodiff.hpp"
#include "nodefilter/linalg.hpp"
#include "nodefilter/model.hpp"
#include "nodefilter/polyattn.hpp"
#include "nodefilter/tokens.hpp"

namespace nodefilter::cli {

namespace {

struct VerifyOptions {
  std::string suite = "all";
  bool inject_fault = false;
  std::uint64_t seed = 7;
};

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Check {
  std::string name;
  std::function<Outcome(Rng&, bool fault)> body;
};

Outcome within(double err, double tol, const std::string& what) {
  std::ostringstream s;
  s.precision(3);
  s << what << "=" << err << " tol=" << tol;
  return {err <= tol, s.str()};
}

DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  DenseMatrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

ad::Tensor random_tensor(ad::Shape shape, Rng& rng, double bound = 1.0) {
  ad::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

DenseMatrix operator_for(const Graph& g, BasisKind basis) {
  return (uses_adjacency(basis) ? normalized_adjacency(g) : normalized_laplacian(g)).to_dense();
}

// -- tokens -------------------------------------------------------------------

Outcome tokens_dense_oracle(Rng& rng, bool fault) {
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = random_graph(20 + 5 * trial, 0.2, rng);
    const DenseMatrix x = random_matrix(g.n_nodes(), 2, rng);
    for (BasisKind basis : {BasisKind::Monomial, BasisKind::Chebyshev, BasisKind::Bernstein, BasisKind::Optimal}) {
      TokenTensor tokens = compute_tokens(g, x, basis, 6);
      if (fault && trial == 0 && basis == BasisKind::Monomial) tokens(3, 1, 0) += 1e-3;
      const DenseMatrix p = operator_for(g, basis);
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const ChannelRecurrence* rec = basis == BasisKind::Optimal ? &tokens.opt_coeffs()->channels[c] : nullptr;
        const std::vector<DenseMatrix> gk = dense_basis_matrices(p, basis, 6, false, rec);
        const DenseMatrix xc(x.rows(), 1, x.column(c));
        for (std::size_t k = 0; k <= 6; ++k) {
          const DenseMatrix ref = matmul(gk[k], xc);
          const double scale = std::max(1.0, max_abs(ref));
          for (std::size_t i = 0; i < x.rows(); ++i) worst = std::max(worst, std::abs(tokens(k, i, c) - ref(i, 0)) / scale);
        }
      }
    }
  }
  return within(worst, 1e-10, "max_rel_err");
}

Outcome tokens_bernstein_partition(Rng& rng, bool) {
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = random_graph(30, 0.2, rng);
    const DenseMatrix x = random_matrix(30, 3, rng);
    for (std::size_t order : {2u, 8u, 16u}) {
      const TokenTensor t = bernstein_tokens(normalized_laplacian(g), x, order);
      for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
          double s = 0.0;
          for (std::size_t k = 0; k <= order; ++k) s += t(k, i, c);
          worst = std::max(worst, std::abs(s - x(i, c)));
        }
    }
  }
  return within(worst, 1e-12, "max_abs_err");
}

Outcome tokens_optimal_orthonormal(Rng& rng, bool) {
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = random_graph(40, 0.2, rng);
    const DenseMatrix x = random_matrix(40, 2, rng);
    const TokenTensor t = optimal_tokens(normalized_adjacency(g), x, 8);
    for (std::size_t c = 0; c < 2; ++c) {
      const std::size_t valid = t.opt_coeffs()->channels[c].valid_orders;
      for (std::size_t a = 0; a < valid; ++a)
        for (std::size_t b = 0; b < valid; ++b) {
          double dot = 0.0;
          for (std::size_t i = 0; i < 40; ++i) dot += t(a, i, c) * t(b, i, c);
          worst = std::max(worst, std::abs(dot - (a == b ? 1.0 : 0.0)));
        }
    }
  }
  return within(worst, 1e-8, "max_gram_err");
}

Outcome tokens_cache_roundtrip(Rng& rng, bool) {
  const Graph g = random_graph(25, 0.2, rng);
  const DenseMatrix x = random_matrix(25, 2, rng);
  for (BasisKind basis : {BasisKind::Monomial, BasisKind::Chebyshev, BasisKind::Bernstein, BasisKind::Optimal}) {
    const TokenTensor t = compute_tokens(g, x, basis, 5, basis == BasisKind::Chebyshev);
    std::stringstream first;
    write_token_cache(t, first);
    const TokenTensor back = read_token_cache(first);
    std::stringstream second;
    write_token_cache(back, second);
    if (first.str() != second.str() || !(back == t)) return {false, std::string(to_string(basis)) + " cache differs"};
  }
  return {true, "byte-exact for all bases"};
}

// -- theorem ------------------------------------------------------------------

Outcome theorem_node_identity(Rng& rng, bool fault) {
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    PolyAttnConfig cfg;
    cfg.dim = 4;
    cfg.order = 5;
    cfg.r = rng.uniform(0.0, 2.0);
    PolyAttnParams params = PolyAttnParams::init(cfg, rng);
    params.beta.value = random_tensor({1, 6}, rng);
    const ad::Tensor h = random_tensor({6, 6, 4}, rng);
    ad::Tape tape;
    const PolyAttnOutput out = polyattn_forward(tape, tape.constant(h), params);
    const NodeCoefficients alpha = extract_node_coefficients(out.scores);
    ad::Tensor hv = h;
    if (fault && trial == 0) hv[7] += 1e-3;
    for (std::size_t b = 0; b < 6; ++b)
      for (std::size_t c = 0; c < 4; ++c) {
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t k = 0; k < 6; ++k) lhs += out.tokens.value()[(b * 6 + k) * 4 + c];
        for (std::size_t j = 0; j < 6; ++j) rhs += alpha(b, 0, j) * hv[(b * 6 + j) * 4 + c];
        worst = std::max(worst, std::abs(lhs - rhs));
      }
  }
  return within(worst, 1e-10, "max_abs_err");
}

Outcome theorem_multihead_groups(Rng& rng, bool) {
  double worst = 0.0;
  for (std::size_t heads : {2u, 4u}) {
    for (int trial = 0; trial < 5; ++trial) {
      PolyAttnConfig cfg;
      cfg.dim = 8;
      cfg.order = 4;
      cfg.heads = heads;
      PolyAttnParams params = PolyAttnParams::init(cfg, rng);
      params.beta.value = random_tensor({heads, 5}, rng);
      const ad::Tensor h = random_tensor({5, 5, 8}, rng);
      ad::Tape tape;
      const ad::Var tokens = tape.constant(h);
      const PolyAttnOutput full = multihead_polyattn_forward(tape, tokens, params);
      const std::size_t dh = 8 / heads;
      for (std::size_t m = 0; m < heads; ++m) {
        PolyAttnConfig single = cfg;
        single.heads = 1;
        single.qk_dim = dh;
        PolyAttnParams p = PolyAttnParams::zeros(single);
        p.mlp_w1.value = params.mlp_w1.value;
        p.mlp_b1.value = params.mlp_b1.value;
        p.mlp_w2.value = params.mlp_w2.value;
        p.mlp_b2.value = params.mlp_b2.value;
        for (std::size_t r = 0; r < 8; ++r)
          for (std::size_t c = 0; c < dh; ++c) {
            p.w_q.value[r * dh + c] = params.w_q.value[r * 8 + m * dh + c];
            p.w_k.value[r * dh + c] = params.w_k.value[r * 8 + m * dh + c];
          }
        for (std::size_t j = 0; j < 5; ++j) p.beta.value[j] = params.beta.value[m * 5 + j];
        const ad::Var values = ad::slice_cols(tokens, m * dh, (m + 1) * dh);
        const PolyAttnOutput part = polyattn_forward(tape, tokens, p, &values);
        for (std::size_t b = 0; b < 5; ++b)
          for (std::size_t k = 0; k < 5; ++k)
            for (std::size_t c = 0; c < dh; ++c)
              worst = std::max(worst, std::abs(full.tokens.value()[(b * 5 + k) * 8 + m * dh + c] -
                                               part.tokens.value()[(b * 5 + k) * dh + c]));
      }
    }
  }
  return within(worst, 1e-12, "max_abs_err");
}

Outcome theorem_softmax_sign(Rng& rng, bool) {
  std::size_t violations = 0;
  for (int trial = 0; trial < 20; ++trial) {
    PolyAttnConfig cfg;
    cfg.dim = 4;
    cfg.order = 5;
    cfg.activation = Activation::Softmax;
    PolyAttnParams params = PolyAttnParams::init(cfg, rng);
    for (std::size_t j = 0; j < 6; ++j) {
      const double mag = rng.uniform(0.1, 1.0);
      params.beta.value[j] = rng.uniform() < 0.5 ? -mag : mag;
    }
    const ad::Tensor h = random_tensor({8, 6, 4}, rng, 3.0);
    ad::Tape tape;
    const NodeCoefficients alpha = extract_node_coefficients(polyattn_forward(tape, tape.constant(h), params).scores);
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t j = 0; j < 6; ++j)
        if ((alpha(b, 0, j) > 0.0) != (params.beta.value[j] > 0.0) || alpha(b, 0, j) == 0.0) ++violations;
  }
  return {violations == 0, "sign_violations=" + std::to_string(violations)};
}

// -- gradients ----------------------------------------------------------------

Outcome report(const ad::GradCheckReport& r, double tol) { return within(r.max_rel_error, tol, "max_rel_err"); }

Outcome gradients_primitives(Rng& rng, bool) {
  using UnaryOp = std::function<ad::Var(ad::Tape&, const ad::Var&, const ad::Var&)>;
  struct Case {
    const char* name;
    ad::Shape a, b;
    UnaryOp op;
  };
  const std::vector<Case> cases = {
      {"matmul", {3, 4}, {4, 2}, [](ad::Tape&, const ad::Var& a, const ad::Var& b) { return ad::matmul(a, b); }},
      {"bmm", {2, 3, 4}, {2, 4, 3}, [](ad::Tape&, const ad::Var& a, const ad::Var& b) { return ad::bmm(a, b); }},
      {"bmm_nt", {2, 3, 4}, {2, 5, 4}, [](ad::Tape&, const ad::Var& a, const ad::Var& b) { return ad::bmm_nt(a, b); }},
      {"orderwise_matmul", {2, 3, 4}, {3, 4, 2},
       [](ad::Tape&, const ad::Var& a, const ad::Var& b) { return ad::orderwise_matmul(a, b); }},
      {"add", {3, 4}, {3, 4}, [](ad::Tape&, const ad::Var& a, const ad::Var& b) { return ad::add(a, b); }},
      {"sub", {3, 4}, {3, 4}, [](ad::Tape&, const ad::Var& a, const ad::Var& b) { return ad::sub(a, b); }},
      {"hadamard", {3, 4}, {3, 4}, [](ad::Tape&, const ad::Var& a, const ad::Var& b) { return ad::hadamard(a, b); }},
      {"layer_norm_rows", {3, 4}, {2, 4},
       [](ad::Tape&, const ad::Var& a, const ad::Var& b) {
         return ad::layer_norm_rows(a, ad::reshape(ad::slice_cols(ad::reshape(b, {1, 8}), 0, 4), {4}),
                                    ad::reshape(ad::slice_cols(ad::reshape(b, {1, 8}), 4, 8), {4}));
       }},
      {"concat_cols", {3, 2}, {3, 3},
       [](ad::Tape&, const ad::Var& a, const ad::Var& b) {
         const ad::Var parts[] = {a, b};
         return ad::concat_cols(parts);
       }},
      {"scale/tanh", {3, 4}, {1}, [](ad::Tape&, const ad::Var& a, const ad::Var&) { return ad::tanh(ad::scale(a, 1.7)); }},
      {"relu", {3, 4}, {1}, [](ad::Tape&, const ad::Var& a, const ad::Var&) { return ad::relu(a); }},
      {"softmax_rows", {3, 4}, {1}, [](ad::Tape&, const ad::Var& a, const ad::Var&) { return ad::softmax_rows(a); }},
      {"sum_rows", {2, 3, 4}, {1}, [](ad::Tape&, const ad::Var& a, const ad::Var&) { return ad::sum_rows(a); }},
      {"slice_cols", {3, 5}, {1}, [](ad::Tape&, const ad::Var& a, const ad::Var&) { return ad::slice_cols(a, 1, 4); }},
      {"broadcast_row", {4}, {1}, [](ad::Tape&, const ad::Var& a, const ad::Var&) { return ad::broadcast_row(a, {2, 3}); }},
  };
  double worst = 0.0;
  std::string worst_name;
  for (const Case& c : cases) {
    ad::Parameter a("a", random_tensor(c.a, rng));
    for (std::size_t i = 0; i < a.value.size(); ++i)  // keep relu away from its kink
      if (std::abs(a.value[i]) < 0.1) a.value[i] += 0.2;
    ad::Parameter b("b", random_tensor(c.b, rng));
    ad::Tensor probe;
    {
      ad::Tape t;
      probe = random_tensor(c.op(t, t.param(a), t.param(b)).value().shape(), rng);
    }
    ad::Parameter* params[] = {&a, &b};
    const auto r = ad::grad_check(
        [&](ad::Tape& t) { return ad::sum_all(ad::hadamard(c.op(t, t.param(a), t.param(b)), t.constant(probe))); },
        params);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = c.name;
    }
  }
  Outcome o = within(worst, 1e-6, "max_rel_err");
  if (!worst_name.empty()) o.detail += " worst=" + worst_name;
  return o;
}

Outcome gradients_polyattn_layer(Rng& rng, bool) {
  PolyAttnConfig cfg;
  cfg.dim = 4;
  cfg.order = 3;
  cfg.heads = 2;
  PolyAttnParams params = PolyAttnParams::init(cfg, rng);
  params.beta.value = random_tensor({2, 4}, rng);
  const ad::Tensor h = random_tensor({3, 4, 4}, rng);
  const ad::Tensor probe = random_tensor({3, 4, 4}, rng);
  const auto r = ad::grad_check(
      [&](ad::Tape& t) {
        return ad::sum_all(ad::hadamard(multihead_polyattn_forward(t, t.constant(h), params).tokens, t.constant(probe)));
      },
      params.parameters());
  return report(r, 1e-4);
}

Outcome gradients_polyformer(Rng& rng, bool) {
  ModelConfig cfg;
  cfg.order = 3;
  cfg.input_dim = 2;
  cfg.blocks = 2;
  cfg.heads = 2;
  cfg.hidden = 4;
  cfg.ffn_hidden = 6;
  cfg.classes = 3;
  cfg.readout_hidden = 5;
  cfg.seed = rng.next();
  ModelState state = ModelState::init(cfg);
  const ad::Tensor h = random_tensor({4, 4, 2}, rng);
  const std::vector<std::size_t> labels = {0, 2, 1, 2};
  const auto r = ad::grad_check(
      [&](ad::Tape& t) { return ad::cross_entropy(model_forward(t, t.constant(h), cfg, state), labels); },
      state.parameters());
  return report(r, 1e-4);
}

// -- spectral -----------------------------------------------------------------

Outcome spectral_laplacian_bound(Rng& rng, bool) {
  double lo = 0.0, hi = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = random_graph(20 + 10 * trial, 0.2, rng);
    const EigenDecomposition eig = jacobi_eigh(normalized_laplacian(g).to_dense());
    lo = std::min(lo, eig.eigenvalues.front());
    hi = std::max(hi, eig.eigenvalues.back());
  }
  std::ostringstream s;
  s << "min=" << lo << " max=" << hi;
  return {lo >= -1e-8 && hi <= 2.0 + 1e-8, s.str()};
}

Outcome spectral_token_filter(Rng& rng, bool) {
  double worst = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    const Graph g = random_graph(40, 0.2, rng);
    const EigenDecomposition eig = jacobi_eigh(normalized_laplacian(g).to_dense());
    const DenseMatrix x = random_matrix(40, 2, rng);
    for (BasisKind basis : {BasisKind::Monomial, BasisKind::Chebyshev, BasisKind::Bernstein}) {
      const std::size_t order = 6;
      std::vector<double> coeffs(order + 1);
      for (double& c : coeffs) c = rng.uniform(-1.0, 1.0);
      const TokenTensor t = compute_tokens(g, x, basis, order);
      const FilterSpec h = FilterSpec::callable("poly", [&](double lambda) {
        const double lam[] = {lambda};
        return filter_response(coeffs, basis, lam)[0];
      });
      const DenseMatrix ref = spectral_filter(eig, h, x);
      for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t c = 0; c < 2; ++c) {
          double z = 0.0;
          for (std::size_t k = 0; k <= order; ++k) z += coeffs[k] * t(k, i, c);
          worst = std::max(worst, std::abs(z - ref(i, c)));
        }
    }
  }
  return within(worst, 1e-8, "max_abs_err");
}

std::vector<Check> checks_for(const std::string& suite) {
  std::vector<Check> all = {
      {"tokens.dense_oracle", tokens_dense_oracle},
      {"tokens.bernstein_partition", tokens_bernstein_partition},
      {"tokens.optimal_orthonormal", tokens_optimal_orthonormal},
      {"tokens.cache_roundtrip", tokens_cache_roundtrip},
      {"theorem.node_identity", theorem_node_identity},
      {"theorem.multihead_groups", theorem_multihead_groups},
      {"theorem.softmax_sign", theorem_softmax_sign},
      {"gradients.primitives", gradients_primitives},
      {"gradients.polyattn_layer", gradients_polyattn_layer},
      {"gradients.polyformer", gradients_polyformer},
      {"spectral.laplacian_bound", spectral_laplacian_bound},
      {"spectral.token_filter", spectral_token_filter},
  };
  if (suite == "all") return all;
  std::vector<Check> picked;
  for (Check& c : all)
    if (c.name.rfind(suite + ".", 0) == 0) picked.push_back(std::move(c));
  if (picked.empty()) throw ConfigError("unknown suite '" + suite + "' (tokens, theorem, gradients, spectral, all)");
  return picked;
}

int run_verify(const VerifyOptions& o, Streams io) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<Check> checks = checks_for(o.suite);
  std::size_t failed = 0;
  std::string failed_names;
  for (const Check& c : checks) {
    Rng rng(o.seed);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.body(rng, o.inject_fault);
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    io.err << (out.pass ? "PASS " : "FAIL ") << c.name << "  " << out.detail << "  (" << elapsed_ms(t0) << " ms)\n";
    if (!out.pass) {
      ++failed;
      failed_names += (failed_names.empty() ? "" : ",") + c.name;
    }
  }
  Record record;
  record.add("command", "verify").add("suite", o.suite).add("checks", checks.size()).add("failed", failed);
  if (failed) record.add("failed_checks", failed_names);
  record.add("wall_ms", elapsed_ms(start));
  io.out << record.str() << '\n';
  return failed ? kVerifyFailed : kOk;
}

}  // namespace

void add_verify_command(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<VerifyOptions>();
  CLI::App* sub = app.add_subcommand("verify", "Run built-in property checks");
  sub->add_option("--suite", o->suite, "tokens | theorem | gradients | spectral | all")->capture_default_str();
  sub->add_flag("--inject-fault", o->inject_fault, "Perturb one token to demonstrate a failing check");
  sub->add_option("--seed", o->seed, "Seed for the random fixtures")->capture_default_str();
  sub->callback([o, &runner] { runner = [o](Streams io) { return run_verify(*o, io); }; });
}

}  // namespace nodefilter::cli
