#include "seqcluster/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "seqcluster/error.hpp"

namespace seqcluster::metrics {

namespace {

void check_lengths(std::span<const int> a, std::span<const int> b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": label vectors differ in length (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
}

std::size_t label_range(std::span<const int> labels, const char* op) {
  int hi = -1;
  for (int v : labels) {
    if (v < 0) throw ConfigError(std::string(op) + ": negative label " + std::to_string(v));
    hi = std::max(hi, v);
  }
  return static_cast<std::size_t>(hi + 1);
}

}  // namespace

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (long long c : counts) t += c;
  return t;
}

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> truth) {
  check_lengths(pred, truth, "confusion");
  ConfusionMatrix m;
  m.k_pred = label_range(pred, "confusion");
  m.k_true = label_range(truth, "confusion");
  m.counts.assign(m.k_pred * m.k_true, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++m.counts[static_cast<std::size_t>(pred[i]) * m.k_true + static_cast<std::size_t>(truth[i])];
  }
  return m;
}

// Shortest augmenting path with row/column potentials, O(n^3).
std::vector<std::size_t> hungarian(const Tensor& cost) {
  const std::size_t n = cost.rows();
  if (cost.shape().size() != 2 || cost.cols() != n) {
    throw ShapeError("hungarian: cost matrix must be square, got " + shape_string(cost.shape()));
  }
  if (!cost.all_finite()) throw NumericError("hungarian: cost matrix has non-finite entries");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col(n);
  for (std::size_t j = 1; j <= n; ++j) col[p[j] - 1] = j - 1;
  return col;
}

double assignment_cost(const Tensor& cost, std::span<const std::size_t> assignment) {
  double s = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) s += cost(i, assignment[i]);
  return s;
}

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth, std::size_t k) {
  check_lengths(pred, truth, "clustering_accuracy");
  if (pred.empty()) throw ConfigError("clustering_accuracy: no samples");
  const ConfusionMatrix m = confusion(pred, truth);
  const std::size_t dim = std::max({k, m.k_pred, m.k_true});
  Tensor cost({dim, dim}, 0.0);
  for (std::size_t i = 0; i < m.k_pred; ++i)
    for (std::size_t j = 0; j < m.k_true; ++j) cost(i, j) = -static_cast<double>(m.at(i, j));
  const auto match = hungarian(cost);
  return -assignment_cost(cost, match) / static_cast<double>(pred.size());
}

double nmi(std::span<const int> pred, std::span<const int> truth, NmiNorm norm) {
  check_lengths(pred, truth, "nmi");
  if (pred.empty()) throw ConfigError("nmi: no samples");
  const ConfusionMatrix m = confusion(pred, truth);
  const double n = static_cast<double>(pred.size());
  std::vector<double> row(m.k_pred, 0.0), col(m.k_true, 0.0);
  for (std::size_t i = 0; i < m.k_pred; ++i)
    for (std::size_t j = 0; j < m.k_true; ++j) {
      row[i] += static_cast<double>(m.at(i, j));
      col[j] += static_cast<double>(m.at(i, j));
    }
  auto entropy = [n](const std::vector<double>& counts) {
    double h = 0.0;
    for (double c : counts)
      if (c > 0) h -= c / n * std::log(c / n);
    return h;
  };
  const double hu = entropy(row), hv = entropy(col);
  const bool u_single = std::count_if(row.begin(), row.end(), [](double c) { return c > 0; }) <= 1;
  const bool v_single = std::count_if(col.begin(), col.end(), [](double c) { return c > 0; }) <= 1;
  if (u_single && v_single) return 1.0;
  if (u_single || v_single) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < m.k_pred; ++i)
    for (std::size_t j = 0; j < m.k_true; ++j) {
      const double c = static_cast<double>(m.at(i, j));
      if (c > 0) mi += c / n * std::log(c * n / (row[i] * col[j]));
    }
  const double denom = norm == NmiNorm::arithmetic ? 0.5 * (hu + hv) : std::sqrt(hu * hv);
  return std::clamp(mi / denom, 0.0, 1.0);
}

double assignment_change(std::span<const int> prev, std::span<const int> cur) {
  check_lengths(prev, cur, "assignment_change");
  if (prev.empty()) return 0.0;
  std::size_t changed = 0;
  for (std::size_t i = 0; i < prev.size(); ++i) changed += prev[i] != cur[i];
  return static_cast<double>(changed) / static_cast<double>(prev.size());
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

namespace {

bool any_geometric(std::span<const EvalReport> rows) {
  return std::any_of(rows.begin(), rows.end(), [](const EvalReport& r) { return r.nmi_geometric.has_value(); });
}

std::vector<std::string> cells_of(const EvalReport& r, bool geometric) {
  std::vector<std::string> c = {r.method, r.space, r.split, std::to_string(r.n), std::to_string(r.k),
                                fmt(r.acc), fmt(r.nmi)};
  if (geometric) c.push_back(fmt(r.nmi_geometric));
  return c;
}

std::vector<std::string> header(bool geometric) {
  std::vector<std::string> h = {"method", "space", "split", "n", "k", "ACC", "NMI"};
  if (geometric) h.push_back("NMI_geometric");
  return h;
}

}  // namespace

std::string reports_csv(std::span<const EvalReport> rows) {
  const bool geo = any_geometric(rows);
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header(geo));
  for (const EvalReport& r : rows) line(cells_of(r, geo));
  return out.str();
}

std::string reports_table(std::span<const EvalReport> rows) {
  const bool geo = any_geometric(rows);
  const std::vector<std::string> head = header(geo);
  std::vector<std::vector<std::string>> cells;
  for (const EvalReport& r : rows) cells.push_back(cells_of(r, geo));
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::size_t pad = width[c] - row[c].size();
      // text left-aligned, numbers right-aligned
      if (c < 3) {
        out << row[c] << std::string(pad, ' ');
      } else {
        out << std::string(pad, ' ') << row[c];
      }
      out << (c + 1 < row.size() ? "  " : "\n");
    }
  };
  line(head);
  std::size_t total = 0;
  for (std::size_t w : width) total += w + 2;
  out << std::string(total - 2, '-') << '\n';
  for (const auto& row : cells) line(row);
  return out.str();
}

}  // namespace seqcluster::metrics
