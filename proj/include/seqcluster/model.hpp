#pragma once
// Multi-task recurrent autoencoder.
//
//   encoder   stacked bi-directional GRU over the first half of a window;
//             the top layer's forward and backward final states are
//             concatenated and projected linearly to the embedding z.
//   decoders  z is back-projected to one initial hidden state per layer and
//             shared by two uni-directional GRU stacks: one reproduces the
//             input reversed in time, the other predicts the second half of
//             the window. Both run autoregressively: step t consumes the
//             projected output of step t-1, step 0 consumes zeros.
//
// GRU convention (Cho et al.):
//   z_t = sigmoid(x W_z + h U_z + b_z)
//   r_t = sigmoid(x W_r + h U_r + b_r)
//   c_t = tanh(x W_h + (r_t * h) U_h + b_h)
//   h_t = (1 - z_t) * h + z_t * c_t

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqcluster/adam.hpp"
#include "seqcluster/autodiff.hpp"
#include "seqcluster/datasets.hpp"
#include "seqcluster/rng.hpp"

namespace seqcluster::model {

struct ModelConfig {
  std::size_t input_dim = 9;       // d
  std::size_t hidden = 256;        // per direction / per decoder layer
  std::size_t layers = 2;
  std::size_t embedding_dim = 64;  // z

  /// 64 for narrow inputs (d < 16), otherwise 256.
  static std::size_t default_embedding_dim(std::size_t input_dim) { return input_dim < 16 ? 64 : 256; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct GruCellParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  ad::Parameter w_z, w_r, w_h;  // input_dim x hidden
  ad::Parameter u_z, u_r, u_h;  // hidden x hidden
  ad::Parameter b_z, b_r, b_h;  // 1 x hidden
};

struct LinearParams {
  ad::Parameter weight;  // in x out
  ad::Parameter bias;    // 1 x out
};

struct EncoderParams {
  std::vector<std::array<GruCellParams, 2>> layers;  // [layer][forward, backward]
  LinearParams bottleneck;                           // 2*hidden -> z
};

struct DecoderStack {
  std::vector<GruCellParams> layers;
  LinearParams output;  // hidden -> d
};

struct DecoderParams {
  LinearParams back_projection;  // z -> layers*hidden
  DecoderStack reconstruction;
  DecoderStack future;
};

class ModelParams {
 public:
  ModelParams() = default;
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);
  /// Same structure with every tensor zero.
  static ModelParams zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  EncoderParams& encoder() { return encoder_; }
  const EncoderParams& encoder() const { return encoder_; }
  DecoderParams& decoders() { return decoders_; }
  const DecoderParams& decoders() const { return decoders_; }

  /// Stable order; pointers are invalidated by copying/moving the object.
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::vector<ad::Parameter*> encoder_parameters();
  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
  EncoderParams encoder_;
  DecoderParams decoders_;
};

/// Closed-form parameter count for a configuration.
std::size_t parameter_count(const ModelConfig& config);
std::string params_summary(const ModelParams& params);

// ---- graph construction ----------------------------------------------------

/// GRU parameters placed on a tape, gate blocks fused for wide matmuls.
struct BoundGru {
  ad::Var w_x;   // input_dim x 3h  [z | r | h]
  ad::Var u_zr;  // h x 2h
  ad::Var u_h;   // h x h
  ad::Var b;     // 1 x 3h
  std::size_t hidden = 0;
};

struct BoundLinear {
  ad::Var weight;
  ad::Var bias;
};

struct BoundModel {
  std::vector<std::array<BoundGru, 2>> encoder;
  BoundLinear bottleneck;
  BoundLinear back_projection;
  std::vector<BoundGru> rec_layers;
  BoundLinear rec_output;
  std::vector<BoundGru> fut_layers;
  BoundLinear fut_output;
  std::size_t hidden = 0;
};

/// trainable=false binds parameters as constants (inference).
BoundGru bind(ad::Tape& tape, GruCellParams& p, bool trainable = true);
BoundModel bind(ad::Tape& tape, ModelParams& params, bool trainable = true);

ad::Var linear(ad::Var x, const BoundLinear& p);

/// One GRU step. x: B x input_dim, h: B x hidden.
ad::Var gru_cell_step(ad::Var x, ad::Var h, const BoundGru& cell);
/// Same step when x * W_x + b (B x 3h) has been computed up front.
ad::Var gru_step_projected(ad::Var gx, ad::Var h, const BoundGru& cell);

/// Time-major stacking: row t*B + b holds step t of batch item b.
ad::Var stack_inputs(ad::Tape& tape, std::span<const Tensor* const> sequences);

/// x_stacked: (L*B) x d, time-major. Returns B x z.
ad::Var encode(const BoundModel& m, ad::Var x_stacked, std::size_t steps, std::size_t batch);

struct Decoded {
  std::vector<ad::Var> reconstruction;  // steps entries of B x d
  std::vector<ad::Var> future;
};

Decoded decode(const BoundModel& m, ad::Var z, std::size_t steps, std::size_t output_dim);

struct AeLoss {
  ad::Var total;  // L_rec + L_fut
  ad::Var reconstruction;
  ad::Var future;
  ad::Var embedding;  // B x z
};

/// Per-element mean squared error of each decoder, summed over the two
/// decoders; equals the batch mean of per-segment losses.
AeLoss autoencoder_loss(ad::Tape& tape, const BoundModel& m, std::span<const data::TaskTriple* const> batch);

/// Loss from explicit per-step predictions (same reduction as above).
ad::Var sequence_mse(ad::Tape& tape, std::span<const ad::Var> predicted,
                     std::span<const data::TaskTriple* const> batch, bool reconstruction);

// ---- convenience wrappers (no gradient) ----------------------------------

Tensor encode(ModelParams& params, const Tensor& x);  // x: (T/2) x d -> 1 x z
std::pair<Tensor, Tensor> decode(ModelParams& params, const Tensor& z, std::size_t steps);
/// Embeddings of every task input, n x z, computed in batches.
Tensor encode_all(ModelParams& params, std::span<const data::TaskTriple> tasks, std::size_t batch_size = 256);
double autoencoder_loss_value(ModelParams& params, std::span<const data::TaskTriple> tasks);

// ---- training ----------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  LearningRateSchedule schedule{};
  AdamHyper adam{};
};

/// Seeded per-epoch shuffling into mini-batches.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::vector<std::size_t>> next_epoch();

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t state_;
};

struct EpochStats {
  std::size_t epoch = 0;  // zero-based
  double loss = 0.0;      // mean over batches
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Runs Adam on L_AE from the current parameters for cfg.epochs epochs.
std::vector<double> train_autoencoder(ModelParams& params, std::span<const data::TaskTriple> tasks,
                                      const TrainConfig& cfg, std::uint64_t seed,
                                      const EpochCallback& on_epoch = {});

struct PretrainResult {
  ModelParams params;
  std::vector<double> loss_history;
};

/// Initializes parameters from `seed`, then trains on the normalized set.
PretrainResult pretrain(const data::SegmentSet& train, const ModelConfig& model_cfg, const TrainConfig& cfg,
                        std::uint64_t seed, const EpochCallback& on_epoch = {});

using seqcluster::derive_seed;

}  // namespace seqcluster::model
