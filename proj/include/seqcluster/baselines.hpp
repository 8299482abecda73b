#pragma once
// Classical clustering: k-means (k-means++ seeding, Lloyd iterations, best of
// several restarts) and agglomerative clustering with average, complete or
// Ward linkage through the Lance-Williams recurrence. Euclidean distance.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqcluster/tensor.hpp"

namespace seqcluster::baselines {

struct ClusteringResult {
  std::vector<int> labels;           // n entries in [0, k)
  std::optional<Tensor> centroids;   // k x m (k-means)
  std::optional<double> inertia;     // within-cluster sum of squares (k-means)
};

struct KMeansOptions {
  std::size_t max_iter = 300;
  double tol = 1e-6;  // largest centroid move (Euclidean) that counts as converged
  std::size_t n_init = 10;
};

struct KMeansTrace {
  /// Inertia after every assignment step, one vector per restart.
  std::vector<std::vector<double>> inertia_per_run;
  std::size_t best_run = 0;
};

/// Empty clusters are re-seeded at the point farthest from its centroid.
ClusteringResult kmeans(const Tensor& x, std::size_t k, std::uint64_t seed, const KMeansOptions& options = {},
                        KMeansTrace* trace = nullptr);

enum class Linkage { average, complete, ward };
Linkage parse_linkage(const std::string& name);
std::string linkage_name(Linkage linkage);

struct Merge {
  std::size_t a = 0;  // surviving cluster id (smallest member index)
  std::size_t b = 0;  // absorbed cluster id, a < b
  double height = 0.0;
  std::size_t size = 0;  // members after the merge
};

struct Dendrogram {
  std::vector<Merge> merges;
};

/// Merges until k clusters remain. Ties go to the lowest (id, id) pair where a
/// cluster's id is its smallest member index. Final labels are numbered by
/// smallest member index. Ward heights are sqrt(2 n_a n_b / (n_a + n_b)) * |c_a - c_b|.
ClusteringResult agglomerative(const Tensor& x, std::size_t k, Linkage linkage, Dendrogram* dendrogram = nullptr);

/// Per-cluster mean rows, k x m. ConfigError on an empty cluster.
Tensor cluster_means(const Tensor& x, const std::vector<int>& labels, std::size_t k);

}  // namespace seqcluster::baselines
