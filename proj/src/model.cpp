#include "seqcluster/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "seqcluster/error.hpp"

namespace seqcluster::model {

using ad::Var;

void ModelConfig::validate() const {
  if (input_dim == 0) throw ConfigError("model.input_dim must be positive");
  if (hidden == 0) throw ConfigError("model.hidden must be positive");
  if (layers == 0) throw ConfigError("model.layers must be positive");
  if (embedding_dim == 0) throw ConfigError("model.embedding_dim must be positive");
}

// ---- construction ------------------------------------------------------------

namespace {

class Init {
 public:
  Init(std::uint64_t seed, bool zero) : rng_(seed), zero_(zero) {}

  ad::Parameter weight(std::string name, std::size_t fan_in, std::size_t fan_out) {
    Tensor t({fan_in, fan_out});
    if (!zero_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : t.data()) v = u(rng_);
    }
    return {std::move(name), std::move(t)};
  }

  ad::Parameter bias(std::string name, std::size_t width) { return {std::move(name), Tensor({1, width})}; }

  GruCellParams gru(const std::string& prefix, std::size_t in, std::size_t h) {
    GruCellParams p;
    p.input_dim = in;
    p.hidden_dim = h;
    p.w_z = weight(prefix + ".w_z", in, h);
    p.w_r = weight(prefix + ".w_r", in, h);
    p.w_h = weight(prefix + ".w_h", in, h);
    p.u_z = weight(prefix + ".u_z", h, h);
    p.u_r = weight(prefix + ".u_r", h, h);
    p.u_h = weight(prefix + ".u_h", h, h);
    p.b_z = bias(prefix + ".b_z", h);
    p.b_r = bias(prefix + ".b_r", h);
    p.b_h = bias(prefix + ".b_h", h);
    return p;
  }

  LinearParams linear(const std::string& prefix, std::size_t in, std::size_t out) {
    return {weight(prefix + ".weight", in, out), bias(prefix + ".bias", out)};
  }

 private:
  std::mt19937_64 rng_;
  bool zero_;
};

void collect(GruCellParams& g, std::vector<ad::Parameter*>& out) {
  for (ad::Parameter* p : {&g.w_z, &g.w_r, &g.w_h, &g.u_z, &g.u_r, &g.u_h, &g.b_z, &g.b_r, &g.b_h}) out.push_back(p);
}

void collect(LinearParams& l, std::vector<ad::Parameter*>& out) {
  out.push_back(&l.weight);
  out.push_back(&l.bias);
}

}  // namespace

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams m;
  m.config_ = config;
  Init init(derive_seed(seed, 1), false);
  const std::size_t h = config.hidden;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::size_t in = l == 0 ? config.input_dim : 2 * h;
    const std::string prefix = "encoder.l" + std::to_string(l);
    m.encoder_.layers.push_back({init.gru(prefix + ".fwd", in, h), init.gru(prefix + ".bwd", in, h)});
  }
  m.encoder_.bottleneck = init.linear("encoder.bottleneck", 2 * h, config.embedding_dim);
  m.decoders_.back_projection = init.linear("decoder.back_projection", config.embedding_dim, config.layers * h);
  for (auto [stack, name] : {std::pair{&m.decoders_.reconstruction, "rec"}, std::pair{&m.decoders_.future, "fut"}}) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      const std::size_t in = l == 0 ? config.input_dim : h;
      stack->layers.push_back(init.gru(std::string("decoder.") + name + ".l" + std::to_string(l), in, h));
    }
    stack->output = init.linear(std::string("decoder.") + name + ".output", h, config.input_dim);
  }
  return m;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  ModelParams m = initialize(config, 0);
  for (ad::Parameter* p : m.parameters()) p->value.fill(0.0);
  return m;
}

std::vector<ad::Parameter*> ModelParams::encoder_parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& layer : encoder_.layers) {
    collect(layer[0], out);
    collect(layer[1], out);
  }
  collect(encoder_.bottleneck, out);
  return out;
}

std::vector<ad::Parameter*> ModelParams::parameters() {
  std::vector<ad::Parameter*> out = encoder_parameters();
  collect(decoders_.back_projection, out);
  for (DecoderStack* s : {&decoders_.reconstruction, &decoders_.future}) {
    for (auto& g : s->layers) collect(g, out);
    collect(s->output, out);
  }
  return out;
}

std::vector<const ad::Parameter*> ModelParams::parameters() const {
  auto mut = const_cast<ModelParams*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const ad::Parameter* p : parameters()) n += p->value.size();
  return n;
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t h = c.hidden, d = c.input_dim, z = c.embedding_dim;
  auto gru = [h](std::size_t in) { return 3 * (in * h + h * h + h); };
  std::size_t n = 0;
  for (std::size_t l = 0; l < c.layers; ++l) n += 2 * gru(l == 0 ? d : 2 * h);
  n += 2 * h * z + z;                      // bottleneck
  n += z * c.layers * h + c.layers * h;    // back-projection
  for (std::size_t l = 0; l < c.layers; ++l) n += 2 * gru(l == 0 ? d : h);
  n += 2 * (h * d + d);                    // output projections
  return n;
}

std::string params_summary(const ModelParams& params) {
  std::ostringstream out;
  const ModelConfig& c = params.config();
  out << "model: d=" << c.input_dim << " hidden=" << c.hidden << " layers=" << c.layers
      << " z=" << c.embedding_dim << '\n';
  for (const ad::Parameter* p : params.parameters()) {
    out << "  " << p->name << ' ' << shape_string(p->value.shape()) << '\n';
  }
  out << "total parameters: " << params.parameter_count() << '\n';
  return out.str();
}

// ---- binding -------------------------------------------------------------------

namespace {

Var leaf(ad::Tape& tape, ad::Parameter& p, bool trainable) {
  return trainable ? tape.parameter(p) : tape.constant(p.value);
}

BoundLinear bind_linear(ad::Tape& tape, LinearParams& p, bool trainable) {
  return {leaf(tape, p.weight, trainable), leaf(tape, p.bias, trainable)};
}

}  // namespace

BoundGru bind(ad::Tape& tape, GruCellParams& p, bool trainable) {
  BoundGru g;
  g.hidden = p.hidden_dim;
  const Var wx[] = {leaf(tape, p.w_z, trainable), leaf(tape, p.w_r, trainable), leaf(tape, p.w_h, trainable)};
  const Var uzr[] = {leaf(tape, p.u_z, trainable), leaf(tape, p.u_r, trainable)};
  const Var b[] = {leaf(tape, p.b_z, trainable), leaf(tape, p.b_r, trainable), leaf(tape, p.b_h, trainable)};
  g.w_x = ad::concat_cols(wx);
  g.u_zr = ad::concat_cols(uzr);
  g.u_h = leaf(tape, p.u_h, trainable);
  g.b = ad::concat_cols(b);
  return g;
}

BoundModel bind(ad::Tape& tape, ModelParams& params, bool trainable) {
  BoundModel m;
  m.hidden = params.config().hidden;
  for (auto& layer : params.encoder().layers) {
    m.encoder.push_back({bind(tape, layer[0], trainable), bind(tape, layer[1], trainable)});
  }
  m.bottleneck = bind_linear(tape, params.encoder().bottleneck, trainable);
  DecoderParams& dec = params.decoders();
  m.back_projection = bind_linear(tape, dec.back_projection, trainable);
  for (auto& g : dec.reconstruction.layers) m.rec_layers.push_back(bind(tape, g, trainable));
  m.rec_output = bind_linear(tape, dec.reconstruction.output, trainable);
  for (auto& g : dec.future.layers) m.fut_layers.push_back(bind(tape, g, trainable));
  m.fut_output = bind_linear(tape, dec.future.output, trainable);
  return m;
}

// ---- cells ---------------------------------------------------------------------

Var linear(Var x, const BoundLinear& p) { return ad::add_row(ad::matmul(x, p.weight), p.bias); }

Var gru_step_projected(Var gx, Var h, const BoundGru& cell) {
  const std::size_t hd = cell.hidden;
  if (h.cols() != hd || gx.cols() != 3 * hd || gx.rows() != h.rows()) {
    throw ShapeError("gru_step: projected input " + shape_string(gx.shape()) + " / state " +
                     shape_string(h.shape()) + " do not match hidden size " + std::to_string(hd));
  }
  const Var gates = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, 2 * hd), ad::matmul(h, cell.u_zr)));
  const Var update = ad::slice_cols(gates, 0, hd);
  const Var reset = ad::slice_cols(gates, hd, 2 * hd);
  const Var candidate =
      ad::tanh(ad::add(ad::slice_cols(gx, 2 * hd, 3 * hd), ad::matmul(ad::mul(reset, h), cell.u_h)));
  // h + z * (c - h) == (1 - z) * h + z * c
  return ad::add(h, ad::mul(update, ad::sub(candidate, h)));
}

Var gru_cell_step(Var x, Var h, const BoundGru& cell) {
  if (x.cols() != cell.w_x.rows()) {
    throw ShapeError("gru_cell_step: input " + shape_string(x.shape()) + " vs weights " +
                     shape_string(cell.w_x.shape()));
  }
  return gru_step_projected(ad::add_row(ad::matmul(x, cell.w_x), cell.b), h, cell);
}

// ---- encoder / decoder -----------------------------------------------------------

Var stack_inputs(ad::Tape& tape, std::span<const Tensor* const> sequences) {
  if (sequences.empty()) throw ShapeError("stack_inputs: empty batch");
  const std::size_t steps = sequences[0]->rows();
  const std::size_t d = sequences[0]->cols();
  const std::size_t b = sequences.size();
  Tensor x({steps * b, d});
  for (std::size_t i = 0; i < b; ++i) {
    const Tensor& s = *sequences[i];
    if (s.rows() != steps || s.cols() != d) throw ShapeError("stack_inputs: ragged batch");
    for (std::size_t t = 0; t < steps; ++t) std::copy_n(s.ptr() + t * d, d, x.ptr() + (t * b + i) * d);
  }
  return tape.constant(std::move(x));
}

Var encode(const BoundModel& m, Var x, std::size_t steps, std::size_t batch) {
  if (steps == 0) throw ShapeError("encode: empty sequence");
  ad::Tape& tape = x.tape();
  const std::size_t h = m.hidden;
  const Var h0 = tape.constant(Tensor({batch, h}));
  Var layer_input = x;
  Var final_fwd, final_bwd;
  for (std::size_t l = 0; l < m.encoder.size(); ++l) {
    const bool last = l + 1 == m.encoder.size();
    std::vector<Var> out_fwd(steps), out_bwd(steps);
    for (int dir = 0; dir < 2; ++dir) {
      const BoundGru& cell = m.encoder[l][dir];
      const Var gx_all = ad::add_row(ad::matmul(layer_input, cell.w_x), cell.b);
      Var state = h0;
      for (std::size_t i = 0; i < steps; ++i) {
        const std::size_t t = dir == 0 ? i : steps - 1 - i;
        state = gru_step_projected(ad::slice_rows(gx_all, t * batch, (t + 1) * batch), state, cell);
        (dir == 0 ? out_fwd : out_bwd)[t] = state;
      }
      (dir == 0 ? final_fwd : final_bwd) = state;
    }
    if (!last) {
      const Var halves[] = {ad::concat_rows(out_fwd), ad::concat_rows(out_bwd)};
      layer_input = ad::concat_cols(halves);
    }
  }
  const Var both[] = {final_fwd, final_bwd};
  return linear(ad::concat_cols(both), m.bottleneck);
}

namespace {

std::vector<Var> run_decoder(const std::vector<BoundGru>& layers, const BoundLinear& output, Var context,
                             std::size_t steps, std::size_t output_dim, std::size_t hidden) {
  ad::Tape& tape = context.tape();
  const std::size_t batch = context.rows();
  std::vector<Var> state;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    state.push_back(ad::slice_cols(context, l * hidden, (l + 1) * hidden));
  }
  Var prev = tape.constant(Tensor({batch, output_dim}));
  std::vector<Var> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Var in = prev;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      state[l] = gru_cell_step(in, state[l], layers[l]);
      in = state[l];
    }
    prev = linear(in, output);
    outputs.push_back(prev);
  }
  return outputs;
}

}  // namespace

Decoded decode(const BoundModel& m, Var z, std::size_t steps, std::size_t output_dim) {
  const Var context = linear(z, m.back_projection);
  Decoded out;
  out.reconstruction = run_decoder(m.rec_layers, m.rec_output, context, steps, output_dim, m.hidden);
  out.future = run_decoder(m.fut_layers, m.fut_output, context, steps, output_dim, m.hidden);
  return out;
}

Var sequence_mse(ad::Tape& tape, std::span<const Var> predicted, std::span<const data::TaskTriple* const> batch,
                 bool reconstruction) {
  const std::size_t steps = predicted.size();
  const std::size_t b = batch.size();
  const std::size_t d = predicted.front().cols();
  Tensor target({steps * b, d});
  for (std::size_t i = 0; i < b; ++i) {
    const Tensor& y = reconstruction ? batch[i]->rec_target : batch[i]->fut_target;
    if (y.rows() != steps || y.cols() != d) throw ShapeError("sequence_mse: target shape mismatch");
    for (std::size_t t = 0; t < steps; ++t) std::copy_n(y.ptr() + t * d, d, target.ptr() + (t * b + i) * d);
  }
  const Var pred = ad::concat_rows(predicted);
  const Var err = ad::sub(pred, tape.constant(std::move(target)));
  return ad::scale(ad::sum(ad::square(err)), 1.0 / static_cast<double>(steps * b * d));
}

AeLoss autoencoder_loss(ad::Tape& tape, const BoundModel& m, std::span<const data::TaskTriple* const> batch) {
  if (batch.empty()) throw ConfigError("autoencoder_loss: empty batch");
  std::vector<const Tensor*> inputs;
  inputs.reserve(batch.size());
  for (const data::TaskTriple* t : batch) inputs.push_back(&t->input);
  const std::size_t steps = batch[0]->input.rows();
  const std::size_t d = batch[0]->input.cols();
  AeLoss out;
  out.embedding = encode(m, stack_inputs(tape, inputs), steps, batch.size());
  const Decoded dec = decode(m, out.embedding, steps, d);
  out.reconstruction = sequence_mse(tape, dec.reconstruction, batch, true);
  out.future = sequence_mse(tape, dec.future, batch, false);
  out.total = ad::add(out.reconstruction, out.future);
  return out;
}

// ---- no-grad wrappers ---------------------------------------------------------

Tensor encode(ModelParams& params, const Tensor& x) {
  ad::Tape tape;
  const BoundModel m = bind(tape, params, false);
  const Tensor* seq[] = {&x};
  return encode(m, stack_inputs(tape, seq), x.rows(), 1).value();
}

std::pair<Tensor, Tensor> decode(ModelParams& params, const Tensor& z, std::size_t steps) {
  ad::Tape tape;
  const BoundModel m = bind(tape, params, false);
  const Decoded d = decode(m, tape.constant(z), steps, params.config().input_dim);
  return {ad::concat_rows(d.reconstruction).value(), ad::concat_rows(d.future).value()};
}

Tensor encode_all(ModelParams& params, std::span<const data::TaskTriple> tasks, std::size_t batch_size) {
  if (tasks.empty()) throw ConfigError("encode_all: no segments");
  const std::size_t z = params.config().embedding_dim;
  Tensor out({tasks.size(), z});
  for (std::size_t start = 0; start < tasks.size(); start += batch_size) {
    const std::size_t end = std::min(tasks.size(), start + batch_size);
    ad::Tape tape;
    const BoundModel m = bind(tape, params, false);
    std::vector<const Tensor*> inputs;
    for (std::size_t i = start; i < end; ++i) inputs.push_back(&tasks[i].input);
    const Tensor emb = encode(m, stack_inputs(tape, inputs), tasks[start].input.rows(), end - start).value();
    std::copy_n(emb.ptr(), emb.size(), out.ptr() + start * z);
  }
  return out;
}

double autoencoder_loss_value(ModelParams& params, std::span<const data::TaskTriple> tasks) {
  ad::Tape tape;
  const BoundModel m = bind(tape, params, false);
  std::vector<const data::TaskTriple*> batch;
  for (const auto& t : tasks) batch.push_back(&t);
  return autoencoder_loss(tape, m, batch).total.value().item();
}

// ---- training ------------------------------------------------------------------

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), state_(seed) {
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
}

std::vector<std::vector<std::size_t>> BatchSampler::next_epoch() {
  std::vector<std::size_t> order(n_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(state_);
  state_ = derive_seed(state_, 7);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < n_; s += batch_size_) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n_, s + batch_size_)));
  }
  return batches;
}

std::vector<double> train_autoencoder(ModelParams& params, std::span<const data::TaskTriple> tasks,
                                      const TrainConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch) {
  if (tasks.empty()) throw ConfigError("pretrain: training set is empty");
  std::vector<ad::Parameter*> plist = params.parameters();
  AdamState adam(plist, cfg.adam, cfg.schedule);
  BatchSampler sampler(tasks.size(), cfg.batch_size, derive_seed(seed, 2));
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    const auto batches = sampler.next_epoch();
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      std::vector<const data::TaskTriple*> batch;
      for (std::size_t idx : batches[bi]) batch.push_back(&tasks[idx]);
      zero_grads(plist);
      ad::Tape tape;
      try {
        const BoundModel m = bind(tape, params, true);
        const AeLoss loss = autoencoder_loss(tape, m, batch);
        tape.backward(loss.total);
        total += loss.total.value().item();
        adam.update(epoch);
      } catch (const NumericError& e) {
        throw NumericError("pretraining diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(bi) + ": " + e.what());
      }
    }
    history.push_back(total / static_cast<double>(batches.size()));
    if (on_epoch) on_epoch({epoch, history.back()});
  }
  return history;
}

PretrainResult pretrain(const data::SegmentSet& train, const ModelConfig& model_cfg, const TrainConfig& cfg,
                        std::uint64_t seed, const EpochCallback& on_epoch) {
  if (model_cfg.input_dim != train.channels()) {
    throw ConfigError("model.input_dim " + std::to_string(model_cfg.input_dim) + " does not match " +
                      std::to_string(train.channels()) + " dataset channels");
  }
  const std::vector<data::TaskTriple> tasks = data::build_tasks(train);
  PretrainResult r{ModelParams::initialize(model_cfg, seed), {}};
  r.loss_history = train_autoencoder(r.params, tasks, cfg, seed, on_epoch);
  return r;
}

}  // namespace seqcluster::model
