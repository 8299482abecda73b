#pragma once
// Finite-difference checks of every autodiff primitive on random inputs.
// Each case builds loss = sum(W .* op(inputs)) with a fixed random W so that
// every output element contributes a distinct sensitivity.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "seqcluster/autodiff.hpp"
#include "seqcluster/gradcheck.hpp"

namespace test_util {

using seqcluster::Tensor;
using seqcluster::ad::Tape;
using seqcluster::ad::Var;

inline Tensor uniform_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.5, double hi = 1.5) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t({r, c});
  for (double& v : t.data()) v = u(rng);
  return t;
}

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

struct PrimitiveCheck {
  std::string name;
  std::size_t input = 0;
  seqcluster::GradCheckResult result;
};

inline void check_primitive(const std::string& name, const Builder& build, std::vector<Tensor> inputs,
                            std::mt19937_64& rng, std::vector<PrimitiveCheck>& out) {
  using namespace seqcluster;
  auto eval_loss = [&](const std::vector<Tensor>& xs, const Tensor& weights) {
    Tape t;
    std::vector<Var> vars;
    for (const Tensor& x : xs) vars.push_back(t.constant(x));
    return ad::sum(ad::mul(build(t, vars), t.constant(weights))).value().item();
  };
  Tensor weights;
  {
    Tape t;
    std::vector<Var> vars;
    for (const Tensor& x : inputs) vars.push_back(t.constant(x));
    const Var y = build(t, vars);
    weights = uniform_tensor(y.rows(), y.cols(), rng);
  }
  Tape t;
  std::vector<Var> vars;
  for (const Tensor& x : inputs) vars.push_back(t.variable(x));
  t.backward(ad::sum(ad::mul(build(t, vars), t.constant(weights))));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto f = [&](const Tensor& xi) {
      auto probe = inputs;
      probe[i] = xi;
      return eval_loss(probe, weights);
    };
    const Tensor numeric = finite_difference_grad(f, inputs[i], 1e-6);
    out.push_back({name, i, compare_gradients(t.grad(vars[i]), numeric, 1e-4, 1e-6)});
  }
}

/// All primitives, `trials` random shape draws each.
inline std::vector<PrimitiveCheck> check_all_primitives(std::uint64_t seed, int trials) {
  using namespace seqcluster::ad;
  std::mt19937_64 rng(seed);
  std::vector<PrimitiveCheck> out;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t r = 1 + rng() % 4, c = 1 + rng() % 4, k = 1 + rng() % 4;
    auto A = [&] { return uniform_tensor(r, c, rng); };
    auto run = [&](const char* name, const Builder& b, std::vector<Tensor> in) { check_primitive(name, b, std::move(in), rng, out); };
    run("matmul", [](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }, {A(), uniform_tensor(c, k, rng)});
    run("transpose", [](Tape&, std::vector<Var>& v) { return transpose(v[0]); }, {A()});
    run("add", [](Tape&, std::vector<Var>& v) { return add(v[0], v[1]); }, {A(), A()});
    run("sub", [](Tape&, std::vector<Var>& v) { return sub(v[0], v[1]); }, {A(), A()});
    run("mul", [](Tape&, std::vector<Var>& v) { return mul(v[0], v[1]); }, {A(), A()});
    run("add_row", [](Tape&, std::vector<Var>& v) { return add_row(v[0], v[1]); }, {A(), uniform_tensor(1, c, rng)});
    run("mul_col", [](Tape&, std::vector<Var>& v) { return mul_col(v[0], v[1]); }, {A(), uniform_tensor(r, 1, rng)});
    run("scale", [](Tape&, std::vector<Var>& v) { return scale(v[0], -1.7); }, {A()});
    run("add_scalar", [](Tape&, std::vector<Var>& v) { return add_scalar(v[0], 0.3); }, {A()});
    run("sigmoid", [](Tape&, std::vector<Var>& v) { return sigmoid(v[0]); }, {A()});
    run("tanh", [](Tape&, std::vector<Var>& v) { return seqcluster::ad::tanh(v[0]); }, {A()});
    run("square", [](Tape&, std::vector<Var>& v) { return square(v[0]); }, {A()});
    run("log", [](Tape&, std::vector<Var>& v) { return seqcluster::ad::log(v[0]); }, {uniform_tensor(r, c, rng, 0.2, 3.0)});
    run("reciprocal", [](Tape&, std::vector<Var>& v) { return reciprocal(v[0]); }, {uniform_tensor(r, c, rng, 0.5, 3.0)});
    run("concat_cols", [](Tape&, std::vector<Var>& v) { return concat_cols(std::span<const Var>(v)); },
        {A(), uniform_tensor(r, k, rng)});
    run("concat_rows", [](Tape&, std::vector<Var>& v) { return concat_rows(std::span<const Var>(v)); },
        {A(), uniform_tensor(k, c, rng)});
    run("slice_cols", [c](Tape&, std::vector<Var>& v) { return slice_cols(v[0], c / 2, c); }, {A()});
    run("slice_rows", [r](Tape&, std::vector<Var>& v) { return slice_rows(v[0], 0, (r + 1) / 2); }, {A()});
    run("sum", [](Tape&, std::vector<Var>& v) { return sum(v[0]); }, {A()});
    run("row_sum", [](Tape&, std::vector<Var>& v) { return row_sum(v[0]); }, {A()});
    run("pairwise_sqdist", [](Tape&, std::vector<Var>& v) { return pairwise_sqdist(v[0], v[1]); },
        {A(), uniform_tensor(k, c, rng)});
  }
  return out;
}

}  // namespace test_util
