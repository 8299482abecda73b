#include "seqcluster/cah.hpp"

#include <cmath>
#include <iostream>

#include "seqcluster/baselines.hpp"
#include "seqcluster/error.hpp"
#include "seqcluster/kernels.hpp"
#include "seqcluster/metrics.hpp"

namespace seqcluster::cah {

using ad::Var;

Tensor soft_assign(const Tensor& z, const Tensor& centroids) {
  if (z.cols() != centroids.cols()) {
    throw ShapeError("soft_assign: embeddings " + shape_string(z.shape()) + " vs centroids " +
                     shape_string(centroids.shape()));
  }
  const std::size_t n = z.rows(), k = centroids.rows(), m = z.cols();
  if (k < 2) throw ConfigError("soft_assign: need at least 2 centroids");
  Tensor q({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double kern = 1.0 / (1.0 + kernels::active().squared_distance(z.ptr() + i * m, centroids.ptr() + j * m, m));
      q(i, j) = kern;
      total += kern;
    }
    for (std::size_t j = 0; j < k; ++j) q(i, j) /= total;
  }
  if (!q.all_finite()) throw NumericError("soft_assign: non-finite assignment");
  return q;
}

Var soft_assign(Var z, Var centroids) {
  if (centroids.rows() < 2) throw ConfigError("soft_assign: need at least 2 centroids");
  const Var kern = ad::reciprocal(ad::add_scalar(ad::pairwise_sqdist(z, centroids), 1.0));
  return ad::mul_col(kern, ad::reciprocal(ad::row_sum(kern)));
}

Tensor target_distribution(const Tensor& q) {
  const std::size_t n = q.rows(), k = q.cols();
  std::vector<double> f(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) f[j] += q(i, j);
  Tensor p({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (!(f[j] > 0.0)) throw NumericError("target_distribution: cluster " + std::to_string(j) + " has zero mass");
      p(i, j) = q(i, j) * q(i, j) / f[j];
      total += p(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) p(i, j) /= total;
  }
  if (!p.all_finite()) throw NumericError("target_distribution: non-finite target");
  return p;
}

namespace {

void check_pair(const Tensor& p, const Shape& q_shape) {
  if (p.shape() != q_shape) {
    throw ShapeError("kl_loss: P " + shape_string(p.shape()) + " vs Q " + shape_string(q_shape));
  }
}

double p_log_p(const Tensor& p) {
  double s = 0.0;
  for (double v : p.data())
    if (v > 0.0) s += v * std::log(v);
  return s;
}

}  // namespace

double kl_loss(const Tensor& p, const Tensor& q) {
  check_pair(p, q.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  }
  const double out = s / static_cast<double>(p.rows());
  if (!std::isfinite(out)) throw NumericError("kl_loss: non-finite divergence");
  return out;
}

Var kl_loss(const Tensor& p, Var q) {
  check_pair(p, q.shape());
  const double inv_n = 1.0 / static_cast<double>(p.rows());
  // sum p log p is a constant; only the cross-entropy term carries gradient
  const Var cross = ad::sum(ad::mul(q.tape().constant(p), ad::log(q)));
  return ad::add_scalar(ad::scale(cross, -inv_n), p_log_p(p) * inv_n);
}

std::vector<int> hard_labels(const Tensor& q) {
  std::vector<int> out(q.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < q.cols(); ++j)
      if (q(i, j) > q(i, arg)) arg = j;
    out[i] = static_cast<int>(arg);
  }
  return out;
}

bool has_duplicate_centroids(const Tensor& c) {
  for (std::size_t a = 0; a < c.rows(); ++a)
    for (std::size_t b = a + 1; b < c.rows(); ++b)
      if (kernels::active().squared_distance(c.ptr() + a * c.cols(), c.ptr() + b * c.cols(), c.cols()) == 0.0) {
        return true;
      }
  return false;
}

InitMethod parse_init_method(const std::string& name) {
  if (name == "kmeans") return InitMethod::kmeans;
  if (name == "ward") return InitMethod::ward;
  throw ConfigError("unknown centroid init method '" + name + "' (expected kmeans or ward)");
}

std::string init_method_name(InitMethod method) { return method == InitMethod::kmeans ? "kmeans" : "ward"; }

Tensor init_centroids(const Tensor& z, InitMethod method, std::size_t k, std::uint64_t seed) {
  if (z.rows() < k) {
    throw ConfigError("init_centroids: " + std::to_string(z.rows()) + " embeddings for k=" + std::to_string(k));
  }
  if (method == InitMethod::kmeans) return *baselines::kmeans(z, k, seed).centroids;
  const auto ward = baselines::agglomerative(z, k, baselines::Linkage::ward);
  return baselines::cluster_means(z, ward.labels, k);
}

void RefineConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("refine.gamma must lie in [0, 1]");
  if (!(stop_threshold > 0.0 && stop_threshold < 1.0)) throw ConfigError("refine.stop_threshold must lie in (0, 1)");
  if (max_epochs == 0) throw ConfigError("refine.max_epochs must be positive");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
}

ClusterState assign(model::ModelParams& params, std::span<const data::TaskTriple> tasks, const Tensor& centroids) {
  ClusterState s;
  s.centroids = centroids;
  s.q = soft_assign(model::encode_all(params, tasks), centroids);
  s.p = target_distribution(s.q);
  s.hard_labels = hard_labels(s.q);
  return s;
}

RefineResult refine(model::ModelParams& params, std::span<const data::TaskTriple> tasks, std::span<const int> labels,
                    std::size_t k, const RefineConfig& cfg, std::uint64_t seed, const RefineCallback& on_epoch) {
  cfg.validate();
  if (tasks.empty()) throw ConfigError("refine: training set is empty");
  const Tensor z = model::encode_all(params, tasks);
  Tensor centroids = init_centroids(z, cfg.init_method, k, derive_seed(seed, 3));
  return refine_from(params, tasks, labels, std::move(centroids), cfg, seed, on_epoch);
}

RefineResult refine_from(model::ModelParams& params, std::span<const data::TaskTriple> tasks,
                         std::span<const int> labels, Tensor centroids, const RefineConfig& cfg, std::uint64_t seed,
                         const RefineCallback& on_epoch) {
  cfg.validate();
  if (tasks.empty()) throw ConfigError("refine: training set is empty");
  if (centroids.cols() != params.config().embedding_dim) {
    throw ShapeError("refine: centroids " + shape_string(centroids.shape()) + " vs embedding dim " +
                     std::to_string(params.config().embedding_dim));
  }
  if (!labels.empty() && labels.size() != tasks.size()) throw ShapeError("refine: label count does not match segments");
  if (has_duplicate_centroids(centroids)) std::cerr << "warning: refine: initial centroids contain duplicates\n";
  bool have_labels = !labels.empty();
  for (int l : labels) have_labels = have_labels && l >= 0;

  ad::Parameter omega("cluster.centroids", std::move(centroids));
  std::vector<ad::Parameter*> plist = params.parameters();
  plist.push_back(&omega);
  AdamState adam(plist, cfg.train.adam, cfg.train.schedule);
  model::BatchSampler sampler(tasks.size(), cfg.train.batch_size, derive_seed(seed, 2));

  RefineResult result;
  result.state = assign(params, tasks, omega.value);
  result.initial_labels = result.state.hard_labels;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const Tensor& p_full = result.state.p;
    const std::size_t k = p_full.cols();
    RefineEpoch row;
    row.epoch = epoch;
    const auto batches = sampler.next_epoch();
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& idx = batches[bi];
      std::vector<const data::TaskTriple*> batch;
      Tensor p_batch({idx.size(), k});
      for (std::size_t r = 0; r < idx.size(); ++r) {
        batch.push_back(&tasks[idx[r]]);
        std::copy_n(p_full.ptr() + idx[r] * k, k, p_batch.ptr() + r * k);
      }
      zero_grads(plist);
      ad::Tape tape;
      try {
        const model::BoundModel m = model::bind(tape, params, true);
        const model::AeLoss ae = model::autoencoder_loss(tape, m, batch);
        const Var q = soft_assign(ae.embedding, tape.parameter(omega));
        const Var lc = kl_loss(p_batch, q);
        const Var total = cfg.gamma > 0.0 ? ad::add(ad::scale(lc, cfg.gamma), ae.total) : ae.total;
        tape.backward(total);
        adam.update(epoch);
        row.total += total.value().item();
        row.clustering += lc.value().item();
        row.autoencoder += ae.total.value().item();
      } catch (const NumericError& e) {
        throw NumericError("refinement diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(bi) + ": " + e.what());
      }
    }
    const double nb = static_cast<double>(batches.size());
    row.total /= nb;
    row.clustering /= nb;
    row.autoencoder /= nb;

    const std::vector<int> previous = result.state.hard_labels;
    result.state = assign(params, tasks, omega.value);
    row.assignment_change = metrics::assignment_change(previous, result.state.hard_labels);
    if (have_labels) {
      row.acc = metrics::clustering_accuracy(result.state.hard_labels, labels, k);
      row.nmi = metrics::nmi(result.state.hard_labels, labels);
    }
    result.history.push_back(row);
    if (on_epoch) on_epoch(row);
    if (row.assignment_change < cfg.stop_threshold) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace seqcluster::cah
