#include "nodefilter/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "nodefilter/error.hpp"

namespace nodefilter::ad {

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(element_count(shape_), fill) {
  if (shape_.size() > 3) throw ShapeError("Tensor: at most three axes, got " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.size() > 3) throw ShapeError("Tensor: at most three axes, got " + shape_string(shape_));
  if (values_.size() != element_count(shape_)) {
    throw ShapeError("Tensor: " + std::to_string(values_.size()) + " values for shape " + shape_string(shape_));
  }
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return values_[0];
}

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

void Parameter::zero_grad() { grad = Tensor(value.shape()); }

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("Var is not attached to a tape");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) { return record(std::move(value), nullptr); }

Var Tape::param(Parameter& p) {
  Var v = record(p.value, nullptr);
  nodes_.back().param = &p;
  return v;
}

Var Tape::record(Tensor value, BackwardRule rule) {
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(rule), nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& node = nodes_.at(id);
  if (node.grad.size() != node.value.size()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss was not recorded on this tape");
  if (value(loss.id()).size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_string(value(loss.id()).shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  grad(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.rule) node.rule(*this, node.value, node.grad);
  }
  for (Node& node : nodes_) {
    if (node.param == nullptr || node.grad.size() == 0) continue;
    Parameter& p = *node.param;
    if (p.grad.size() != p.value.size()) p.grad = Tensor(p.value.shape());
    for (std::size_t j = 0; j < p.grad.size(); ++j) p.grad[j] += node.grad[j];
  }
}

namespace {

// C(n x m) += A(n x k) * B(k x m)
void gemm_nn(std::size_t n, std::size_t k, std::size_t m, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * lda + p];
      const double* brow = b + p * ldb;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
}

// C(n x m) += A(n x k) * B(m x k)^T
void gemm_nt(std::size_t n, std::size_t k, std::size_t m, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * lda;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b + j * ldb;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * ldc + j] += s;
    }
  }
}

// C(k x m) += A(n x k)^T * B(n x m)
void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* brow = b + i * ldb;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * lda + p];
      double* crow = c + p * ldc;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
}

Tape& same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape();
}

Tape& tape_of(const Var& a, const char* op) {
  if (a.tape() == nullptr) throw std::invalid_argument(std::string(op) + ": detached operand");
  return *a.tape();
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

template <typename Fwd, typename Bwd>
Var unary_map(const Var& a, Fwd fwd, Bwd local_grad, const char* op) {
  Tape& tape = tape_of(a, op);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), [ia, local_grad](Tape& t, const Tensor& y, const Tensor& gy) {
    const Tensor& xv = t.value(ia);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * local_grad(xv[i], y[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 2 || bv.rank() != 2 || av.shape().back() != bv.dim(0)) shape_mismatch("matmul", av.shape(), bv.shape());
  const std::size_t k = bv.dim(0);
  const std::size_t m = bv.dim(1);
  const std::size_t rows = av.size() / k;
  Shape out_shape = av.shape();
  out_shape.back() = m;
  Tensor out(out_shape);
  gemm_nn(rows, k, m, av.data(), k, bv.data(), m, out.data(), m);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib, rows, k, m](Tape& t, const Tensor&, const Tensor& gy) {
    gemm_nt(rows, m, k, gy.data(), m, t.value(ib).data(), m, t.grad(ia).data(), k);
    gemm_tn(rows, k, m, t.value(ia).data(), k, gy.data(), m, t.grad(ib).data(), m);
  });
}

Var bmm(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b, "bmm");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1)) {
    shape_mismatch("bmm", av.shape(), bv.shape());
  }
  const std::size_t batch = av.dim(0), n = av.dim(1), k = av.dim(2), m = bv.dim(2);
  Tensor out({batch, n, m});
  for (std::size_t s = 0; s < batch; ++s)
    gemm_nn(n, k, m, av.data() + s * n * k, k, bv.data() + s * k * m, m, out.data() + s * n * m, m);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib, batch, n, k, m](Tape& t, const Tensor&, const Tensor& gy) {
    const double* A = t.value(ia).data();
    const double* B = t.value(ib).data();
    double* gA = t.grad(ia).data();
    double* gB = t.grad(ib).data();
    for (std::size_t s = 0; s < batch; ++s) {
      gemm_nt(n, m, k, gy.data() + s * n * m, m, B + s * k * m, m, gA + s * n * k, k);
      gemm_tn(n, k, m, A + s * n * k, k, gy.data() + s * n * m, m, gB + s * k * m, m);
    }
  });
}

Var bmm_nt(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b, "bmm_nt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2)) {
    shape_mismatch("bmm_nt", av.shape(), bv.shape());
  }
  const std::size_t batch = av.dim(0), n = av.dim(1), k = av.dim(2), m = bv.dim(1);
  Tensor out({batch, n, m});
  for (std::size_t s = 0; s < batch; ++s)
    gemm_nt(n, k, m, av.data() + s * n * k, k, bv.data() + s * m * k, k, out.data() + s * n * m, m);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib, batch, n, k, m](Tape& t, const Tensor&, const Tensor& gy) {
    const double* A = t.value(ia).data();
    const double* B = t.value(ib).data();
    double* gA = t.grad(ia).data();
    double* gB = t.grad(ib).data();
    for (std::size_t s = 0; s < batch; ++s) {
      gemm_nn(n, m, k, gy.data() + s * n * m, m, B + s * m * k, k, gA + s * n * k, k);
      gemm_tn(n, m, k, gy.data() + s * n * m, m, A + s * n * k, k, gB + s * m * k, k);
    }
  });
}

Var orderwise_matmul(const Var& x, const Var& w) {
  Tape& tape = same_tape(x, w, "orderwise_matmul");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 3 || xv.dim(1) != wv.dim(0) || xv.dim(2) != wv.dim(1)) {
    shape_mismatch("orderwise_matmul", xv.shape(), wv.shape());
  }
  const std::size_t batch = xv.dim(0), orders = xv.dim(1), d = xv.dim(2), e = wv.dim(2);
  Tensor out({batch, orders, e});
  for (std::size_t t = 0; t < orders; ++t)
    gemm_nn(batch, d, e, xv.data() + t * d, orders * d, wv.data() + t * d * e, e, out.data() + t * e, orders * e);
  const std::size_t ix = x.id(), iw = w.id();
  return tape.record(std::move(out), [ix, iw, batch, orders, d, e](Tape& tp, const Tensor&, const Tensor& gy) {
    const double* X = tp.value(ix).data();
    const double* W = tp.value(iw).data();
    double* gX = tp.grad(ix).data();
    double* gW = tp.grad(iw).data();
    for (std::size_t t = 0; t < orders; ++t) {
      gemm_nt(batch, e, d, gy.data() + t * e, orders * e, W + t * d * e, e, gX + t * d, orders * d);
      gemm_tn(batch, d, e, X + t * d, orders * d, gy.data() + t * e, orders * e, gW + t * d * e, e);
    }
  });
}

namespace {

enum class Binary { Add, Sub, Mul };

Var elementwise(const Var& a, const Var& b, Binary op, const char* name) {
  Tape& tape = same_tape(a, b, name);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch(name, av.shape(), bv.shape());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    switch (op) {
      case Binary::Add: out[i] = av[i] + bv[i]; break;
      case Binary::Sub: out[i] = av[i] - bv[i]; break;
      case Binary::Mul: out[i] = av[i] * bv[i]; break;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib, op](Tape& t, const Tensor&, const Tensor& gy) {
    Tensor& ga = t.grad(ia);
    Tensor& gb = t.grad(ib);
    switch (op) {
      case Binary::Add:
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
        break;
      case Binary::Sub:
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
        break;
      case Binary::Mul: {
        const Tensor& av2 = t.value(ia);
        const Tensor& bv2 = t.value(ib);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv2[i];
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av2[i];
        break;
      }
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return elementwise(a, b, Binary::Add, "add"); }
Var sub(const Var& a, const Var& b) { return elementwise(a, b, Binary::Sub, "sub"); }
Var hadamard(const Var& a, const Var& b) { return elementwise(a, b, Binary::Mul, "hadamard"); }

Var scale(const Var& a, double s) {
  return unary_map(a, [s](double x) { return s * x; }, [s](double, double) { return s; }, "scale");
}

Var tanh(const Var& a) {
  return unary_map(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Var relu(const Var& a) {
  return unary_map(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; },
                   "relu");
}

Var softmax_rows(const Var& a) {
  Tape& tape = tape_of(a, "softmax_rows");
  const Tensor& x = a.value();
  const std::size_t c = last_dim(x.shape());
  if (x.rank() == 0 || c == 0) throw ShapeError("softmax_rows: empty rows");
  const std::size_t rows = x.size() / c;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * c;
    double* y = out.data() + r * c;
    const double mx = *std::max_element(in, in + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += (y[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= sum;
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), [ia, rows, c](Tape& t, const Tensor& y, const Tensor& gy) {
    Tensor& gx = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = y.data() + r * c;
      const double* gr = gy.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += yr[j] * (gr[j] - dot);
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& offset, double eps) {
  Tape& tape = same_tape(x, gain, "layer_norm_rows");
  same_tape(x, offset, "layer_norm_rows");
  const Tensor& xv = x.value();
  const std::size_t d = last_dim(xv.shape());
  if (xv.rank() == 0 || d == 0) throw ShapeError("layer_norm_rows: empty rows");
  if (gain.value().shape() != Shape{d} || offset.value().shape() != Shape{d}) {
    shape_mismatch("layer_norm_rows", xv.shape(), gain.value().shape());
  }
  const std::size_t rows = xv.size() / d;
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const Tensor& g = gain.value();
  const Tensor& b = offset.value();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (in[j] - mean) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * g[j] + b[j];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), io = offset.id();
  return tape.record(std::move(out), [ix, ig, io, rows, d, xhat, inv_std](Tape& t, const Tensor&, const Tensor& gy) {
    const Tensor& gv = t.value(ig);
    Tensor& gx = t.grad(ix);
    Tensor& gg = t.grad(ig);
    Tensor& go = t.grad(io);
    std::vector<double> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = gy.data() + r * d;
      const double* hr = xhat->data() + r * d;
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        gg[j] += gr[j] * hr[j];
        go[j] += gr[j];
        dxhat[j] = gr[j] * gv[j];
        mean_dh += dxhat[j];
        mean_dh_h += dxhat[j] * hr[j];
      }
      mean_dh /= static_cast<double>(d);
      mean_dh_h /= static_cast<double>(d);
      const double is = (*inv_std)[r];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += is * (dxhat[j] - mean_dh - hr[j] * mean_dh_h);
    }
  });
}

Var sum_rows(const Var& a) {
  Tape& tape = tape_of(a, "sum_rows");
  const Tensor& x = a.value();
  if (x.rank() != 2 && x.rank() != 3) throw ShapeError("sum_rows: need rank 2 or 3, got " + shape_string(x.shape()));
  const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t rows = x.dim(x.rank() - 2);
  const std::size_t d = x.dim(x.rank() - 1);
  Tensor out(x.rank() == 3 ? Shape{batch, d} : Shape{d});
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) out[s * d + j] += x[(s * rows + r) * d + j];
  const std::size_t ia = a.id();
  return tape.record(std::move(out), [ia, batch, rows, d](Tape& t, const Tensor&, const Tensor& gy) {
    Tensor& gx = t.grad(ia);
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gx[(s * rows + r) * d + j] += gy[s * d + j];
  });
}

Var sum_all(const Var& a) {
  Tape& tape = tape_of(a, "sum_all");
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  const std::size_t ia = a.id();
  return tape.record(Tensor::scalar(s), [ia](Tape& t, const Tensor&, const Tensor& gy) {
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[0];
  });
}

Var mean_all(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  Tape& tape = tape_of(a, "slice_cols");
  const Tensor& x = a.value();
  const std::size_t c = last_dim(x.shape());
  if (x.rank() == 0 || begin > end || end > c) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                     shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  const std::size_t rows = x.size() / c;
  Shape out_shape = x.shape();
  out_shape.back() = w;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data() + r * c + begin, w, out.data() + r * w);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), [ia, rows, c, w, begin](Tape& t, const Tensor&, const Tensor& gy) {
    Tensor& gx = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) gx[r * c + begin + j] += gy[r * w + j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& tape = tape_of(parts[0], "concat_cols");
  const Shape& first = parts[0].value().shape();
  if (first.empty()) throw ShapeError("concat_cols: scalar operand");
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape() != &tape) throw std::invalid_argument("concat_cols: operands live on different tapes");
    const Shape& s = p.value().shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      shape_mismatch("concat_cols", first, s);
    }
    widths.push_back(s.back());
    ids.push_back(p.id());
    total += s.back();
  }
  const std::size_t rows = parts[0].value().size() / std::max<std::size_t>(first.back(), 1);
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data() + r * widths[p], widths[p], out.data() + r * total + offset);
    offset += widths[p];
  }
  return tape.record(std::move(out), [ids, widths, rows, total](Tape& t, const Tensor&, const Tensor& gy) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      Tensor& g = t.grad(ids[p]);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < widths[p]; ++j) g[r * widths[p] + j] += gy[r * total + off + j];
      off += widths[p];
    }
  });
}

Var broadcast_row(const Var& v, const Shape& leading) {
  Tape& tape = tape_of(v, "broadcast_row");
  const Tensor& x = v.value();
  Shape out_shape = leading;
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  if (out_shape.size() > 3) throw ShapeError("broadcast_row: result has more than three axes");
  const std::size_t copies = element_count(leading);
  const std::size_t w = x.size();
  Tensor out(out_shape);
  for (std::size_t r = 0; r < copies; ++r) std::copy_n(x.data(), w, out.data() + r * w);
  const std::size_t ia = v.id();
  return tape.record(std::move(out), [ia, copies, w](Tape& t, const Tensor&, const Tensor& gy) {
    Tensor& gx = t.grad(ia);
    for (std::size_t r = 0; r < copies; ++r)
      for (std::size_t j = 0; j < w; ++j) gx[j] += gy[r * w + j];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tape& tape = tape_of(a, "reshape");
  const Tensor& x = a.value();
  if (element_count(shape) != x.size()) shape_mismatch("reshape", x.shape(), shape);
  Tensor out(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  const std::size_t ia = a.id();
  return tape.record(std::move(out), [ia](Tape& t, const Tensor&, const Tensor& gy) {
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> labels) {
  Tape& tape = tape_of(logits, "cross_entropy");
  const Tensor& x = logits.value();
  if (x.rank() != 2 || x.dim(0) != labels.size() || x.dim(1) == 0) {
    throw ShapeError("cross_entropy: logits " + shape_string(x.shape()) + " for " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  for (std::size_t label : labels) {
    if (label >= c) throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                                            std::to_string(c) + ")");
  }
  auto probs = std::make_shared<std::vector<double>>(x.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* in = x.data() + r * c;
    const double mx = *std::max_element(in, in + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += ((*probs)[r * c + j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] /= sum;
    loss += mx + std::log(sum) - in[labels[r]];
  }
  loss /= static_cast<double>(n);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  const std::size_t ia = logits.id();
  return tape.record(Tensor::scalar(loss), [ia, n, c, probs, lab](Tape& t, const Tensor&, const Tensor& gy) {
    Tensor& gx = t.grad(ia);
    const double s = gy[0] / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < c; ++j)
        gx[r * c + j] += s * ((*probs)[r * c + j] - (j == lab[r] ? 1.0 : 0.0));
  });
}

GradCheckReport grad_check(const std::function<Var(Tape&)>& loss_fn, std::span<Parameter* const> params,
                           double eps) {
  auto evaluate = [&]() {
    Tape t;
    return loss_fn(t).value().item();
  };

  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    const Var loss = loss_fn(t);
    t.backward(loss);
  }
  const double base1 = evaluate();
  const double base2 = evaluate();
  if (base1 != base2) throw std::runtime_error("grad_check: forward function is not deterministic");

  GradCheckReport report;
  for (Parameter* p : params) {
    ParamCheck check{p->name, 0.0, 0.0};
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double plus = evaluate();
      p->value[i] = saved - eps;
      const double minus = evaluate();
      p->value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = p->grad[i];
      const double abs_err = std::abs(analytic - numeric);
      const double rel_err = abs_err / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      check.max_rel_error = std::max(check.max_rel_error, rel_err);
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace nodefilter::ad
