#include <cmath>
#include <random>

#include "doctest.h"
#include "model_check.hpp"
#include "seqcluster/error.hpp"
#include "seqcluster/model.hpp"

using namespace seqcluster;
using namespace seqcluster::model;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_dim = 2;
  c.hidden = 5;
  c.layers = 2;
  c.embedding_dim = 3;
  return c;
}

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t({r, c});
  for (double& v : t.data()) v = u(rng);
  return t;
}

std::vector<data::TaskTriple> random_tasks(std::size_t n, std::size_t half, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  data::SegmentSet set;
  set.config.name = "random";
  set.config.sampling_rate = 1.0;
  set.config.window_duration = static_cast<double>(2 * half);
  set.config.window_step = static_cast<double>(half);
  set.config.num_channels = d;
  set.config.num_clusters = 2;
  for (std::size_t i = 0; i < n; ++i) set.segments.push_back({random_tensor(2 * half, d, rng), 0});
  return data::build_tasks(set);
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("zero-weight GRU halves the state") {
  GruCellParams p = ModelParams::zeros(tiny_config()).encoder().layers[0][0];
  ad::Tape tape;
  const BoundGru cell = bind(tape, p);
  const Tensor h0 = Tensor::matrix(1, 5, {1.0, -2.0, 0.5, 0.0, 4.0});
  const Tensor x = Tensor::matrix(1, 2, {3.0, -7.0});
  const Tensor h1 = gru_cell_step(tape.constant(x), tape.constant(h0), cell).value();
  for (std::size_t j = 0; j < 5; ++j) CHECK(h1[j] == doctest::Approx(0.5 * h0[j]).epsilon(1e-15));

  const Tensor fixed = gru_cell_step(tape.constant(x), tape.constant(Tensor({1, 5})), cell).value();
  CHECK(max_abs(fixed) == 0.0);
}

TEST_CASE("GRU step matches the gate equations") {
  std::mt19937_64 rng(3);
  GruCellParams p = ModelParams::initialize(tiny_config(), 11).encoder().layers[0][0];
  for (ad::Parameter* q : {&p.b_z, &p.b_r, &p.b_h}) q->value = random_tensor(1, 5, rng);
  const Tensor x = random_tensor(2, 2, rng);
  const Tensor h = random_tensor(2, 5, rng);
  ad::Tape tape;
  const Tensor out = gru_cell_step(tape.constant(x), tape.constant(h), bind(tape, p)).value();

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t j = 0; j < 5; ++j) {
      auto pre = [&](const ad::Parameter& w, const ad::Parameter& u, const ad::Parameter& bias, const Tensor& hh) {
        double s = bias.value[j];
        for (std::size_t i = 0; i < 2; ++i) s += x(b, i) * w.value(i, j);
        for (std::size_t i = 0; i < 5; ++i) s += hh(b, i) * u.value(i, j);
        return s;
      };
      const double z = sig(pre(p.w_z, p.u_z, p.b_z, h));
      Tensor rh({2, 5});
      for (std::size_t i = 0; i < 5; ++i) {
        double s = p.b_r.value[i];
        for (std::size_t q = 0; q < 2; ++q) s += x(b, q) * p.w_r.value(q, i);
        for (std::size_t q = 0; q < 5; ++q) s += h(b, q) * p.u_r.value(q, i);
        rh(b, i) = sig(s) * h(b, i);
      }
      const double c = std::tanh(pre(p.w_h, p.u_h, p.b_h, rh));
      const double expected = (1.0 - z) * h(b, j) + z * c;
      CHECK(out(b, j) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("GRU cell gradients match finite differences") {
  std::mt19937_64 rng(5);
  GruCellParams p = ModelParams::initialize(tiny_config(), 2).encoder().layers[0][1];
  const Tensor x = random_tensor(3, 2, rng);
  const Tensor h = random_tensor(3, 5, rng);
  const Tensor weights = random_tensor(3, 5, rng);
  auto loss_of = [&](ad::Tape& tape, ad::Var xv, ad::Var hv) {
    const BoundGru cell = bind(tape, p, false);
    return ad::sum(ad::mul(gru_cell_step(xv, hv, cell), tape.constant(weights)));
  };
  ad::Tape tape;
  const ad::Var xv = tape.variable(x), hv = tape.variable(h);
  tape.backward(loss_of(tape, xv, hv));
  auto fx = [&](const Tensor& probe) {
    ad::Tape t;
    return loss_of(t, t.constant(probe), t.constant(h)).value().item();
  };
  auto fh = [&](const Tensor& probe) {
    ad::Tape t;
    return loss_of(t, t.constant(x), t.constant(probe)).value().item();
  };
  CHECK(compare_gradients(tape.grad(xv), finite_difference_grad(fx, x, 1e-6)).passed);
  CHECK(compare_gradients(tape.grad(hv), finite_difference_grad(fh, h, 1e-6)).passed);
}

TEST_CASE("parameter count matches the closed form and a hand count") {
  const ModelConfig c = tiny_config();
  const ModelParams m = ModelParams::initialize(c, 1);
  CHECK(m.parameter_count() == parameter_count(c));
  // encoder: 2*3*(2*5+25+5) + 2*3*(10*5+25+5) = 240 + 480; bottleneck 10*3+3
  // back-projection 3*10+10; decoders 2*(120+165); outputs 2*(5*2+2)
  CHECK(parameter_count(c) == 240 + 480 + 33 + 40 + 570 + 24);

  ModelConfig paper;
  paper.input_dim = 9;
  CHECK(parameter_count(paper) == ModelParams::initialize(paper, 1).parameter_count());
}

TEST_CASE("initialization is bounded, seeded and biases are zero") {
  const ModelConfig c = tiny_config();
  ModelParams a = ModelParams::initialize(c, 42);
  ModelParams b = ModelParams::initialize(c, 42);
  ModelParams other = ModelParams::initialize(c, 43);
  auto pa = a.parameters(), pb = b.parameters(), po = other.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->value == pb[i]->value);
    differs = differs || !(pa[i]->value == po[i]->value);
    const double bound = 1.0 / std::sqrt(static_cast<double>(pa[i]->value.rows()));
    if (pa[i]->value.rows() == 1) {
      CHECK(max_abs(pa[i]->value) == 0.0);
    } else {
      CHECK(max_abs(pa[i]->value) <= bound);
    }
  }
  CHECK(differs);
  CHECK(pa[0]->name == "encoder.l0.fwd.w_z");
}

TEST_CASE("encoder output shape, determinism and order sensitivity") {
  ModelConfig c;
  c.input_dim = 9;
  c.hidden = 16;
  c.embedding_dim = 64;
  ModelParams m = ModelParams::initialize(c, 9);
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(64, 9, rng);
  const Tensor z = encode(m, x);
  CHECK(z.shape() == Shape{1, 64});
  CHECK(encode(m, x) == z);

  Tensor reversed({64, 9});
  for (std::size_t t = 0; t < 64; ++t)
    for (std::size_t j = 0; j < 9; ++j) reversed(t, j) = x(63 - t, j);
  const Tensor zr = encode(m, reversed);
  double diff = 0.0;
  for (std::size_t j = 0; j < 64; ++j) diff = std::max(diff, std::abs(zr[j] - z[j]));
  CHECK(diff > 1e-6);
}

TEST_CASE("batched encoding equals per-segment encoding") {
  ModelParams m = ModelParams::initialize(tiny_config(), 4);
  const auto tasks = random_tasks(7, 4, 2, 8);
  const Tensor all = encode_all(m, tasks, 3);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Tensor one = encode(m, tasks[i].input);
    for (std::size_t j = 0; j < 3; ++j) CHECK(all(i, j) == doctest::Approx(one[j]).epsilon(1e-12));
  }
}

TEST_CASE("zero decoders emit zeros and the two decoders differ once trained weights exist") {
  ModelParams zero = ModelParams::zeros(tiny_config());
  const Tensor z = Tensor::matrix(1, 3, {0.3, -1.0, 2.0});
  const auto [rec0, fut0] = decode(zero, z, 4);
  CHECK(rec0.shape() == Shape{4, 2});
  CHECK(max_abs(rec0) == 0.0);
  CHECK(max_abs(fut0) == 0.0);

  ModelParams m = ModelParams::initialize(tiny_config(), 6);
  const auto [rec, fut] = decode(m, z, 4);
  CHECK(!(rec == fut));
}

TEST_CASE("L_AE reference values") {
  ModelParams zero = ModelParams::zeros(tiny_config());
  data::TaskTriple t;
  t.input = Tensor({4, 2}, 0.0);
  t.rec_target = Tensor({4, 2}, 0.0);
  t.fut_target = Tensor({4, 2}, 0.0);
  const std::vector<data::TaskTriple> zeros = {t};
  CHECK(autoencoder_loss_value(zero, zeros) == 0.0);

  t.rec_target = Tensor({4, 2}, 1.0);
  t.fut_target = Tensor({4, 2}, 1.0);
  const std::vector<data::TaskTriple> ones = {t, t};
  CHECK(autoencoder_loss_value(zero, ones) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("full model gradients match finite differences") {
  ModelParams m = ModelParams::initialize(tiny_config(), 17);
  const auto tasks = random_tasks(3, 4, 2, 99);
  const auto checks = test_util::check_model_gradients(m, tasks);
  REQUIRE(checks.size() == m.parameters().size());
  for (const auto& c : checks) {
    CAPTURE(c.name);
    CAPTURE(c.result.max_rel_error);
    CHECK(c.result.passed);
  }
}

TEST_CASE("batch sampler covers every index once per epoch") {
  BatchSampler s(10, 4, 3);
  for (int e = 0; e < 3; ++e) {
    const auto batches = s.next_epoch();
    REQUIRE(batches.size() == 3);
    CHECK(batches.back().size() == 2);
    std::vector<int> seen(10, 0);
    for (const auto& b : batches)
      for (auto i : b) ++seen[i];
    for (int v : seen) CHECK(v == 1);
  }
  CHECK_THROWS_AS(BatchSampler(3, 0, 1), ConfigError);
}

TEST_CASE("pretraining lowers the loss and is bit-reproducible") {
  data::SegmentSet set = data::synth_generate(data::SynthSpec::standard(3, 2, 16, 20, 0.05), 5);
  set = data::apply_normalization(set, data::fit_normalization(set));
  ModelConfig c = tiny_config();
  c.hidden = 12;
  TrainConfig tc;
  tc.epochs = 25;
  tc.batch_size = 16;
  tc.schedule.initial = 1e-2;
  std::size_t calls = 0;
  const PretrainResult a = pretrain(set, c, tc, 21, [&](const EpochStats&) { ++calls; });
  CHECK(calls == 25);
  REQUIRE(a.loss_history.size() == 25);
  CHECK(a.loss_history.back() < 0.5 * a.loss_history.front());

  const PretrainResult b = pretrain(set, c, tc, 21);
  CHECK(a.loss_history == b.loss_history);
  auto pa = a.params.parameters(), pb = b.params.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);

  c.input_dim = 3;
  CHECK_THROWS_AS(pretrain(set, c, tc, 21), ConfigError);
}

TEST_CASE("config validation") {
  ModelConfig c;
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ModelConfig::default_embedding_dim(9) == 64);
  CHECK(ModelConfig::default_embedding_dim(16) == 256);
}
