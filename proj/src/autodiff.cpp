#include "seqcluster/autodiff.hpp"

#include <cmath>

#include "seqcluster/error.hpp"
#include "seqcluster/kernels.hpp"

namespace seqcluster::ad {

void Parameter::zero_grad() {
  if (grad.empty()) {
    grad = Tensor(value.shape(), 0.0);
  } else {
    grad.fill(0.0);
  }
}

Tape& Var::tape() const {
  if (tape_ == nullptr) throw StateError("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value_of(id_); }

// ---- Tape ----------------------------------------------------------------

Var Tape::push(Node node) {
  if (differentiated_) throw StateError("tape already differentiated; build a new tape");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::check_owned(Var v, const char* op) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) {
    throw StateError(std::string(op) + ": operand does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  n.keep_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.op = "parameter";
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  return push(std::move(n));
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) {
    std::string msg = std::string("non-finite value produced by ") + op + " (output shape " +
                      shape_string(value.shape()) + ")";
    throw NumericError(msg);
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v, op);
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor* Tape::grad_sink(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return &n.grad;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id()].requires_grad;
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw StateError("backward() called before any forward computation");
  check_owned(loss, "backward");
  if (differentiated_) throw StateError("backward() already ran on this tape");
  Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  differentiated_ = true;
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0);
  for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.empty()) p.grad = Tensor(p.value.shape(), 0.0);
      kernels::active().add(p.grad.ptr(), n.grad.ptr(), p.grad.ptr(), p.grad.size());
    }
    if (n.backward) n.backward(*this, id);
    // Intermediate gradients are dead once propagated.
    if (!n.keep_grad && n.param == nullptr && id != loss.id()) n.grad = Tensor();
  }
}

Tensor Tape::grad(Var v) const {
  check_owned(v, "grad");
  const Node& n = nodes_[v.id()];
  if (!differentiated_) throw StateError("grad() requested before backward()");
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

// ---- primitives ----------------------------------------------------------

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

std::uint32_t input(Tape& t, std::uint32_t self, std::size_t i) { return t.inputs_of(self)[i]; }

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

template <typename F>
Var unary(const char* op, Var a, F&& f, Tape::BackwardFn bw) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  const double* px = x.ptr();
  double* py = y.ptr();
  for (std::size_t i = 0, n = x.size(); i < n; ++i) py[i] = f(px[i]);
  return a.tape().record(op, std::move(y), {a}, std::move(bw));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) shape_mismatch("matmul", A, B);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C(matrix_shape(m, n));
  kernels::gemm(m, n, k, A.ptr(), k, 1, B.ptr(), n, C.ptr(), n, false);
  return a.tape().record("matmul", std::move(C), {a, b}, [m, k, n](Tape& t, std::uint32_t self) {
    const std::uint32_t ia = input(t, self, 0), ib = input(t, self, 1);
    const Tensor& G = t.grad_of(self);
    const Tensor& Av = t.value_of(ia);
    const Tensor& Bv = t.value_of(ib);
    if (Tensor* gA = t.grad_sink(ia)) {
      // dA = G * B^T; pack B^T (n x k).
      std::vector<double> bt(n * k);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = Bv.ptr()[p * n + j];
      kernels::gemm(m, k, n, G.ptr(), n, 1, bt.data(), k, gA->ptr(), k, true);
    }
    if (Tensor* gB = t.grad_sink(ib)) {
      // dB = A^T * G.
      kernels::gemm(k, n, m, Av.ptr(), 1, k, G.ptr(), n, gB->ptr(), n, true);
    }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor T(matrix_shape(c, r));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) T.ptr()[j * r + i] = A.ptr()[i * c + j];
  return a.tape().record("transpose", std::move(T), {a}, [r, c](Tape& t, std::uint32_t self) {
    if (Tensor* gA = t.grad_sink(input(t, self, 0))) {
      const Tensor& G = t.grad_of(self);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gA->ptr()[i * c + j] += G.ptr()[j * r + i];
    }
  });
}

Var add(Var a, Var b) {
  require_same("add", a.value(), b.value());
  Tensor out(a.value().shape());
  K().add(a.value().ptr(), b.value().ptr(), out.ptr(), out.size());
  return a.tape().record("add", std::move(out), {a, b}, [](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    for (std::size_t i = 0; i < 2; ++i) {
      if (Tensor* g = t.grad_sink(input(t, self, i))) K().add(g->ptr(), G.ptr(), g->ptr(), G.size());
    }
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a.value(), b.value());
  Tensor out(a.value().shape());
  K().sub(a.value().ptr(), b.value().ptr(), out.ptr(), out.size());
  return a.tape().record("sub", std::move(out), {a, b}, [](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    if (Tensor* g = t.grad_sink(input(t, self, 0))) K().add(g->ptr(), G.ptr(), g->ptr(), G.size());
    if (Tensor* g = t.grad_sink(input(t, self, 1))) K().sub(g->ptr(), G.ptr(), g->ptr(), G.size());
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a.value(), b.value());
  Tensor out(a.value().shape());
  K().mul(a.value().ptr(), b.value().ptr(), out.ptr(), out.size());
  return a.tape().record("mul", std::move(out), {a, b}, [](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    const std::uint32_t ia = input(t, self, 0), ib = input(t, self, 1);
    if (Tensor* g = t.grad_sink(ia)) K().mul_acc(G.ptr(), t.value_of(ib).ptr(), g->ptr(), G.size());
    if (Tensor* g = t.grad_sink(ib)) K().mul_acc(G.ptr(), t.value_of(ia).ptr(), g->ptr(), G.size());
  });
}

Var add_row(Var a, Var row) {
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  if (R.size() != A.cols()) shape_mismatch("add_row", A, R);
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < r; ++i) K().add(A.ptr() + i * c, R.ptr(), out.ptr() + i * c, c);
  return a.tape().record("add_row", std::move(out), {a, row}, [r, c](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    if (Tensor* g = t.grad_sink(input(t, self, 0))) K().add(g->ptr(), G.ptr(), g->ptr(), G.size());
    if (Tensor* g = t.grad_sink(input(t, self, 1))) {
      for (std::size_t i = 0; i < r; ++i) K().add(g->ptr(), G.ptr() + i * c, g->ptr(), c);
    }
  });
}

Var mul_col(Var a, Var col) {
  const Tensor& A = a.value();
  const Tensor& C = col.value();
  if (C.size() != A.rows()) shape_mismatch("mul_col", A, C);
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double s = C.ptr()[i];
    for (std::size_t j = 0; j < c; ++j) out.ptr()[i * c + j] = A.ptr()[i * c + j] * s;
  }
  return a.tape().record("mul_col", std::move(out), {a, col}, [r, c](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    const std::uint32_t ia = input(t, self, 0), ic = input(t, self, 1);
    if (Tensor* g = t.grad_sink(ia)) {
      const Tensor& Cv = t.value_of(ic);
      for (std::size_t i = 0; i < r; ++i) K().axpy(Cv.ptr()[i], G.ptr() + i * c, g->ptr() + i * c, c);
    }
    if (Tensor* g = t.grad_sink(ic)) {
      const Tensor& Av = t.value_of(ia);
      for (std::size_t i = 0; i < r; ++i) g->ptr()[i] += K().dot(G.ptr() + i * c, Av.ptr() + i * c, c);
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  return a.tape().record("scale", std::move(out), {a}, [c](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    if (Tensor* g = t.grad_sink(input(t, self, 0))) K().axpy(c, G.ptr(), g->ptr(), G.size());
  });
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.data()) v += c;
  return a.tape().record("add_scalar", std::move(out), {a}, [](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    if (Tensor* g = t.grad_sink(input(t, self, 0))) K().add(g->ptr(), G.ptr(), g->ptr(), G.size());
  });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, stable_sigmoid, [](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    const Tensor& Y = t.value_of(self);
    if (Tensor* g = t.grad_sink(input(t, self, 0))) {
      for (std::size_t i = 0; i < G.size(); ++i) g->ptr()[i] += G.ptr()[i] * Y.ptr()[i] * (1.0 - Y.ptr()[i]);
    }
  });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    const Tensor& Y = t.value_of(self);
    if (Tensor* g = t.grad_sink(input(t, self, 0))) {
      for (std::size_t i = 0; i < G.size(); ++i) g->ptr()[i] += G.ptr()[i] * (1.0 - Y.ptr()[i] * Y.ptr()[i]);
    }
  });
}

Var square(Var a) {
  Tensor out(a.value().shape());
  K().mul(a.value().ptr(), a.value().ptr(), out.ptr(), out.size());
  return a.tape().record("square", std::move(out), {a}, [](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    const std::uint32_t ia = input(t, self, 0);
    if (Tensor* g = t.grad_sink(ia)) {
      const Tensor& X = t.value_of(ia);
      for (std::size_t i = 0; i < G.size(); ++i) g->ptr()[i] += 2.0 * X.ptr()[i] * G.ptr()[i];
    }
  });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    const std::uint32_t ia = input(t, self, 0);
    if (Tensor* g = t.grad_sink(ia)) {
      const Tensor& X = t.value_of(ia);
      for (std::size_t i = 0; i < G.size(); ++i) g->ptr()[i] += G.ptr()[i] / X.ptr()[i];
    }
  });
}

Var reciprocal(Var a) {
  return unary("reciprocal", a, [](double x) { return 1.0 / x; }, [](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    const Tensor& Y = t.value_of(self);
    if (Tensor* g = t.grad_sink(input(t, self, 0))) {
      for (std::size_t i = 0; i < G.size(); ++i) g->ptr()[i] -= G.ptr()[i] * Y.ptr()[i] * Y.ptr()[i];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.rows() != r) shape_mismatch("concat_cols", parts[0].value(), p.value());
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out(matrix_shape(r, total));
  std::size_t off = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(p.value().ptr() + i * w, w, out.ptr() + i * total + off);
    }
    off += w;
  }
  return parts[0].tape().record("concat_cols", std::move(out), parts,
                                [r, total, widths](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    std::size_t o = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::size_t w = widths[k];
      if (Tensor* g = t.grad_sink(input(t, self, k))) {
        for (std::size_t i = 0; i < r; ++i) K().add(g->ptr() + i * w, G.ptr() + i * total + o, g->ptr() + i * w, w);
      }
      o += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t c = parts[0].cols();
  std::vector<std::size_t> sizes;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != c) shape_mismatch("concat_rows", parts[0].value(), p.value());
    sizes.push_back(p.value().size());
    rows += p.rows();
  }
  Tensor out(matrix_shape(rows, c));
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().ptr(), p.value().size(), out.ptr() + off);
    off += p.value().size();
  }
  return parts[0].tape().record("concat_rows", std::move(out), parts, [sizes](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    std::size_t o = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (Tensor* g = t.grad_sink(input(t, self, k))) K().add(g->ptr(), G.ptr() + o, g->ptr(), sizes[k]);
      o += sizes[k];
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  if (begin >= end || end > c) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + shape_string(A.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out(matrix_shape(r, w));
  for (std::size_t i = 0; i < r; ++i) std::copy_n(A.ptr() + i * c + begin, w, out.ptr() + i * w);
  return a.tape().record("slice_cols", std::move(out), {a}, [r, c, begin, w](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    if (Tensor* g = t.grad_sink(input(t, self, 0))) {
      for (std::size_t i = 0; i < r; ++i) K().add(g->ptr() + i * c + begin, G.ptr() + i * w, g->ptr() + i * c + begin, w);
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  if (begin >= end || end > r) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + shape_string(A.shape()));
  }
  Tensor out(matrix_shape(end - begin, c));
  std::copy_n(A.ptr() + begin * c, out.size(), out.ptr());
  return a.tape().record("slice_rows", std::move(out), {a}, [begin, c](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    if (Tensor* g = t.grad_sink(input(t, self, 0))) {
      K().add(g->ptr() + begin * c, G.ptr(), g->ptr() + begin * c, G.size());
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [](Tape& t, std::uint32_t self) {
    const double g0 = t.grad_of(self).item();
    if (Tensor* g = t.grad_sink(input(t, self, 0))) {
      for (double& v : g->data()) v += g0;
    }
  });
}

Var row_sum(Var a) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out(matrix_shape(r, 1));
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += A.ptr()[i * c + j];
    out.ptr()[i] = s;
  }
  return a.tape().record("row_sum", std::move(out), {a}, [r, c](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    if (Tensor* g = t.grad_sink(input(t, self, 0))) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g->ptr()[i * c + j] += G.ptr()[i];
    }
  });
}

Var pairwise_sqdist(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.cols()) shape_mismatch("pairwise_sqdist", A, B);
  const std::size_t n = A.rows(), k = B.rows(), m = A.cols();
  Tensor D(matrix_shape(n, k));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j)
      D.ptr()[i * k + j] = K().squared_distance(A.ptr() + i * m, B.ptr() + j * m, m);
  return a.tape().record("pairwise_sqdist", std::move(D), {a, b}, [n, k, m](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad_of(self);
    const std::uint32_t ia = input(t, self, 0), ib = input(t, self, 1);
    const Tensor& Av = t.value_of(ia);
    const Tensor& Bv = t.value_of(ib);
    Tensor* gA = t.grad_sink(ia);
    Tensor* gB = t.grad_sink(ib);
    std::vector<double> diff(m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double coeff = 2.0 * G.ptr()[i * k + j];
        K().sub(Av.ptr() + i * m, Bv.ptr() + j * m, diff.data(), m);
        if (gA) K().axpy(coeff, diff.data(), gA->ptr() + i * m, m);
        if (gB) K().axpy(-coeff, diff.data(), gB->ptr() + j * m, m);
      }
    }
  });
}

}  // namespace seqcluster::ad
