#pragma once
// Cluster assignment hardening.
//
//   q_ij = k(z_i, w_j) / sum_j' k(z_i, w_j'),   k(z, w) = 1 / (1 + |z - w|^2)
//   p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j'),   f_j = sum_i q_ij
//   L    = gamma * mean_i KL(p_i || q_i) + L_AE
//
// P is rebuilt from the full train split once per epoch and held constant
// while the encoder, decoders and centroids take mini-batch steps on L.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqcluster/autodiff.hpp"
#include "seqcluster/model.hpp"

namespace seqcluster::cah {

Tensor soft_assign(const Tensor& z, const Tensor& centroids);
ad::Var soft_assign(ad::Var z, ad::Var centroids);

Tensor target_distribution(const Tensor& q);

/// Mean over rows of sum_j p log(p / q), with 0 log 0 = 0.
double kl_loss(const Tensor& p, const Tensor& q);
/// Same quantity with p constant; gradient flows into q only.
ad::Var kl_loss(const Tensor& p, ad::Var q);

/// Row argmax, ties to the lowest column.
std::vector<int> hard_labels(const Tensor& q);

/// True when two centroid rows coincide (soft assignment stays valid).
bool has_duplicate_centroids(const Tensor& centroids);

enum class InitMethod { kmeans, ward };
InitMethod parse_init_method(const std::string& name);
std::string init_method_name(InitMethod method);

/// kmeans: k-means++ / Lloyd centroids. ward: means of the Ward clusters.
Tensor init_centroids(const Tensor& z, InitMethod method, std::size_t k, std::uint64_t seed);

struct ClusterState {
  Tensor centroids;  // k x z
  Tensor q;          // n x k
  Tensor p;          // n x k
  std::vector<int> hard_labels;
};

struct RefineConfig {
  double gamma = 0.1;
  double stop_threshold = 0.001;  // stop when the changed fraction is strictly below
  std::size_t max_epochs = 200;
  InitMethod init_method = InitMethod::ward;
  model::TrainConfig train{};  // batch size, schedule and Adam settings; epochs unused
  void validate() const;
};

struct RefineEpoch {
  std::size_t epoch = 0;  // zero-based
  double total = 0.0;     // batch means over the epoch
  double clustering = 0.0;
  double autoencoder = 0.0;
  double assignment_change = 0.0;
  std::optional<double> acc;  // when labels are known
  std::optional<double> nmi;
};

struct RefineResult {
  ClusterState state;
  std::vector<int> initial_labels;  // argmax of Q at the initial centroids
  std::vector<RefineEpoch> history;
  bool converged = false;
};

using RefineCallback = std::function<void(const RefineEpoch&)>;

/// Updates `params` in place. `labels` (may be empty) only feeds the
/// ACC/NMI history columns.
RefineResult refine(model::ModelParams& params, std::span<const data::TaskTriple> tasks, std::span<const int> labels,
                    std::size_t k, const RefineConfig& cfg, std::uint64_t seed, const RefineCallback& on_epoch = {});

/// Same as above with explicit starting centroids.
RefineResult refine_from(model::ModelParams& params, std::span<const data::TaskTriple> tasks,
                         std::span<const int> labels, Tensor centroids, const RefineConfig& cfg, std::uint64_t seed,
                         const RefineCallback& on_epoch = {});

/// Encodes segments with the given parameters and assigns them against fixed
/// centroids (used for held-out splits).
ClusterState assign(model::ModelParams& params, std::span<const data::TaskTriple> tasks, const Tensor& centroids);

}  // namespace seqcluster::cah
