#pragma once
// Define-by-run reverse-mode automatic differentiation.
//
// A Tape records primitive operations in execution order, so the record is
// topologically sorted by construction. backward() walks it in exact
// reverse order. Tapes are cheap and meant to be rebuilt for every batch.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqcluster/tensor.hpp"

namespace seqcluster::ad {

/// Trainable tensor that outlives tapes. Gradients from every tape that
/// references it accumulate into `grad` until zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad();
  bool has_grad() const { return !grad.empty(); }
};

class Tape;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::uint32_t id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf without gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is retained on the tape (read it with grad()).
  Var variable(Tensor value);
  /// Leaf bound to a Parameter; backward() accumulates into p.grad.
  Var parameter(Parameter& p);

  /// Populates gradients of every requires-grad node reachable from `loss`.
  /// Throws StateError if the tape holds no recorded forward pass for `loss`
  /// or has already been differentiated.
  void backward(Var loss);

  /// Gradient of a variable/intermediate after backward(). Zero-filled when
  /// the node did not influence the loss.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var v) const;

  // Primitive-implementation interface.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn);
  const Tensor& value_of(std::uint32_t id) const { return nodes_[id].value; }
  /// Upstream gradient of node `id` (valid inside its backward function).
  const Tensor& grad_of(std::uint32_t id) const { return nodes_[id].grad; }
  /// Gradient buffer of an input, allocated zeroed on first touch.
  /// Returns nullptr when the input does not require grad.
  Tensor* grad_sink(std::uint32_t id);
  const std::vector<std::uint32_t>& inputs_of(std::uint32_t id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool keep_grad = false;
  };

  Var push(Node node);
  void check_owned(Var v, const char* op) const;

  std::vector<Node> nodes_;
  bool differentiated_ = false;
};

// ---- primitives ---------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (r x c) + row (1 x c), broadcast over rows.
Var add_row(Var a, Var row);
/// a (r x c) * col (r x 1), broadcast over columns.
Var mul_col(Var a, Var col);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var sigmoid(Var a);
Var tanh(Var a);
Var square(Var a);
Var log(Var a);
Var reciprocal(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// Sum of all elements -> 1 x 1.
Var sum(Var a);
/// Per-row sums -> r x 1.
Var row_sum(Var a);
/// D(i, j) = ||a_i - b_j||^2 for rows of a (n x m) and b (k x m) -> n x k.
Var pairwise_sqdist(Var a, Var b);

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

}  // namespace seqcluster::ad
