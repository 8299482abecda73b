#pragma once
// Clustering accuracy (optimal label matching), NMI and the assignment-change
// fraction used by the refinement stopping rule.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqcluster/tensor.hpp"

namespace seqcluster::metrics {

/// counts(i, j) = #{n : pred[n] == i && truth[n] == j}; labels must be >= 0.
struct ConfusionMatrix {
  std::size_t k_pred = 0;
  std::size_t k_true = 0;
  std::vector<long long> counts;  // row-major k_pred x k_true
  long long at(std::size_t i, std::size_t j) const { return counts[i * k_true + j]; }
  long long total() const;
};

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> truth);

/// Minimum-cost perfect matching on a square matrix. Returns col[row].
std::vector<std::size_t> hungarian(const Tensor& cost);
double assignment_cost(const Tensor& cost, std::span<const std::size_t> assignment);

/// Best one-to-one relabeling match rate. `k` is a lower bound on the label
/// range; the confusion matrix is padded to square when the counts differ.
double clustering_accuracy(std::span<const int> pred, std::span<const int> truth, std::size_t k = 0);

enum class NmiNorm { arithmetic, geometric };
double nmi(std::span<const int> pred, std::span<const int> truth, NmiNorm norm = NmiNorm::arithmetic);

double assignment_change(std::span<const int> prev, std::span<const int> cur);

struct EvalReport {
  std::string method;
  std::string split;  // train | test
  std::string space;  // raw | embedding | end-to-end
  std::optional<double> acc;  // empty when ground truth is unavailable
  std::optional<double> nmi;
  std::size_t n = 0;
  std::size_t k = 0;
  std::optional<double> nmi_geometric;  // extra column when any row has it
};

std::string reports_csv(std::span<const EvalReport> rows);
std::string reports_table(std::span<const EvalReport> rows);

}  // namespace seqcluster::metrics
