#include "seqcluster/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "seqcluster/error.hpp"
#include "seqcluster/kernels.hpp"
#include "seqcluster/rng.hpp"

namespace seqcluster::baselines {

namespace {

void check_points(const Tensor& x, std::size_t k, const char* op) {
  if (x.shape().size() != 2) throw ShapeError(std::string(op) + ": expected an n x m matrix, got " + shape_string(x.shape()));
  if (k == 0) throw ConfigError(std::string(op) + ": k must be positive");
  if (x.rows() < k) {
    throw ConfigError(std::string(op) + ": need at least k=" + std::to_string(k) + " points, got " +
                      std::to_string(x.rows()));
  }
  if (!x.all_finite()) throw NumericError(std::string(op) + ": input has non-finite entries");
}

double sqdist(const double* a, const double* b, std::size_t m) { return kernels::active().squared_distance(a, b, m); }

std::vector<double> kmeanspp(const Tensor& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> centers(k * m);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  std::copy_n(x.ptr() + pick * m, m, centers.data());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sqdist(x.ptr() + i * m, centers.data(), m);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (total <= 0.0) {
      // all remaining points coincide with a center
      pick = first(rng);
    } else {
      double r = u(rng) * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    double* dst = centers.data() + c * m;
    std::copy_n(x.ptr() + pick * m, m, dst);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sqdist(x.ptr() + i * m, dst, m));
  }
  return centers;
}

struct LloydRun {
  std::vector<int> labels;
  std::vector<double> centers;
  double inertia = 0.0;
  std::vector<double> trace;
};

double assign(const Tensor& x, const std::vector<double>& centers, std::size_t k, std::vector<int>& labels,
              std::vector<double>& dist) {
  const std::size_t n = x.rows(), m = x.cols();
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double d = sqdist(x.ptr() + i * m, centers.data() + c * m, m);
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels[i] = arg;
    dist[i] = best;
    inertia += best;
  }
  return inertia;
}

LloydRun lloyd(const Tensor& x, std::size_t k, std::mt19937_64& rng, const KMeansOptions& opt) {
  const std::size_t n = x.rows(), m = x.cols();
  LloydRun run;
  run.centers = kmeanspp(x, k, rng);
  run.labels.assign(n, 0);
  std::vector<double> dist(n);
  std::vector<double> next(k * m);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0;; ++it) {
    run.inertia = assign(x, run.centers, k, run.labels, dist);
    run.trace.push_back(run.inertia);
    if (it == opt.max_iter) break;

    std::fill(next.begin(), next.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(run.labels[i]);
      ++counts[c];
      kernels::active().add(next.data() + c * m, x.ptr() + i * m, next.data() + c * m, m);
    }
    std::vector<char> taken(n, 0);
    for (std::size_t c = 0; c < k; ++c) {
      double* dst = next.data() + c * m;
      if (counts[c] > 0) {
        const double inv = 1.0 / static_cast<double>(counts[c]);
        for (std::size_t j = 0; j < m; ++j) dst[j] *= inv;
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      taken[far] = 1;
      dist[far] = 0.0;
      std::copy_n(x.ptr() + far * m, m, dst);
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      shift = std::max(shift, std::sqrt(sqdist(run.centers.data() + c * m, next.data() + c * m, m)));
    }
    run.centers.swap(next);
    if (shift < opt.tol) {
      run.inertia = assign(x, run.centers, k, run.labels, dist);
      run.trace.push_back(run.inertia);
      break;
    }
  }
  return run;
}

}  // namespace

ClusteringResult kmeans(const Tensor& x, std::size_t k, std::uint64_t seed, const KMeansOptions& options,
                        KMeansTrace* trace) {
  check_points(x, k, "kmeans");
  if (options.n_init == 0) throw ConfigError("kmeans: n_init must be positive");
  if (trace) *trace = {};
  LloydRun best;
  std::size_t best_run = 0;
  for (std::size_t r = 0; r < options.n_init; ++r) {
    std::mt19937_64 rng(derive_seed(seed, r));
    LloydRun run = lloyd(x, k, rng, options);
    if (trace) trace->inertia_per_run.push_back(run.trace);
    if (r == 0 || run.inertia < best.inertia) {
      best = std::move(run);
      best_run = r;
    }
  }
  if (trace) trace->best_run = best_run;
  ClusteringResult out;
  out.labels = std::move(best.labels);
  out.centroids = Tensor({k, x.cols()}, std::move(best.centers));
  out.inertia = best.inertia;
  return out;
}

Linkage parse_linkage(const std::string& name) {
  if (name == "average") return Linkage::average;
  if (name == "complete") return Linkage::complete;
  if (name == "ward") return Linkage::ward;
  throw ConfigError("unknown linkage '" + name + "' (expected average, complete or ward)");
}

std::string linkage_name(Linkage linkage) {
  switch (linkage) {
    case Linkage::average: return "average";
    case Linkage::complete: return "complete";
    case Linkage::ward: return "ward";
  }
  return "?";
}

namespace {

// Upper-triangle condensed storage, i < j.
class Condensed {
 public:
  explicit Condensed(std::size_t n) : n_(n), d_(n * (n - 1) / 2) {}
  double& operator()(std::size_t i, std::size_t j) { return d_[index(i, j)]; }
  double operator()(std::size_t i, std::size_t j) const { return d_[index(i, j)]; }

 private:
  std::size_t index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return i * n_ - i * (i + 1) / 2 + (j - i - 1);
  }
  std::size_t n_;
  std::vector<double> d_;
};

}  // namespace

ClusteringResult agglomerative(const Tensor& x, std::size_t k, Linkage linkage, Dendrogram* dendrogram) {
  check_points(x, k, "agglomerative");
  const std::size_t n = x.rows(), m = x.cols();
  if (dendrogram) dendrogram->merges.clear();
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;

  if (n > 1 && k < n) {
    // Ward runs on squared distances, the other linkages on plain distances.
    Condensed d(n);
    kernels::parallel_rows(n, 16, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          const double s = sqdist(x.ptr() + i * m, x.ptr() + j * m, m);
          d(i, j) = linkage == Linkage::ward ? s : std::sqrt(s);
        }
    });
    std::vector<std::size_t> size(n, 1);
    std::vector<char> active(n, 1);
    const std::size_t none = n;
    std::vector<std::size_t> nn(n, none);
    std::vector<double> nn_d(n, std::numeric_limits<double>::infinity());
    auto refresh = [&](std::size_t i) {
      nn[i] = none;
      nn_d[i] = std::numeric_limits<double>::infinity();
      for (std::size_t j = i + 1; j < n; ++j) {
        if (active[j] && d(i, j) < nn_d[i]) {
          nn_d[i] = d(i, j);
          nn[i] = j;
        }
      }
    };
    for (std::size_t i = 0; i < n; ++i) refresh(i);

    for (std::size_t remaining = n; remaining > k; --remaining) {
      std::size_t a = none;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (active[i] && nn[i] != none && nn_d[i] < best) {
          best = nn_d[i];
          a = i;
        }
      }
      const std::size_t b = nn[a];
      const double na = static_cast<double>(size[a]), nb = static_cast<double>(size[b]);
      const double dab = d(a, b);
      for (std::size_t c = 0; c < n; ++c) {
        if (!active[c] || c == a || c == b) continue;
        const double dac = d(a, c), dbc = d(b, c);
        double v = 0.0;
        switch (linkage) {
          case Linkage::average: v = (na * dac + nb * dbc) / (na + nb); break;
          case Linkage::complete: v = std::max(dac, dbc); break;
          case Linkage::ward: {
            const double nc = static_cast<double>(size[c]);
            v = ((na + nc) * dac + (nb + nc) * dbc - nc * dab) / (na + nb + nc);
            break;
          }
        }
        d(a, c) = v;
      }
      active[b] = 0;
      size[a] += size[b];
      parent[b] = a;
      if (dendrogram) {
        dendrogram->merges.push_back({a, b, linkage == Linkage::ward ? std::sqrt(std::max(dab, 0.0)) : dab, size[a]});
      }
      refresh(a);
      for (std::size_t c = 0; c < a; ++c) {
        if (!active[c]) continue;
        if (nn[c] == a || nn[c] == b) {
          refresh(c);
        } else if (d(c, a) < nn_d[c] || (d(c, a) == nn_d[c] && a < nn[c])) {
          nn_d[c] = d(c, a);
          nn[c] = a;
        }
      }
      // rows between a and b that pointed at b
      for (std::size_t c = a + 1; c < b; ++c) {
        if (active[c] && nn[c] == b) refresh(c);
      }
    }
  }

  auto root = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i];
    return i;
  };
  ClusteringResult out;
  out.labels.assign(n, -1);
  std::vector<int> id_of(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = root(i);
    if (id_of[r] < 0) id_of[r] = next++;
    out.labels[i] = id_of[r];
  }
  return out;
}

Tensor cluster_means(const Tensor& x, const std::vector<int>& labels, std::size_t k) {
  if (labels.size() != x.rows()) throw ShapeError("cluster_means: label count does not match rows");
  const std::size_t m = x.cols();
  Tensor out({k, m});
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) throw ConfigError("cluster_means: label out of range");
    const auto c = static_cast<std::size_t>(labels[i]);
    ++counts[c];
    for (std::size_t j = 0; j < m; ++j) out(c, j) += x(i, j);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) throw ConfigError("cluster_means: cluster " + std::to_string(c) + " is empty");
    for (std::size_t j = 0; j < m; ++j) out(c, j) /= static_cast<double>(counts[c]);
  }
  return out;
}

}  // namespace seqcluster::baselines
