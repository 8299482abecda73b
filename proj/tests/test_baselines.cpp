#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "seqcluster/baselines.hpp"
#include "seqcluster/error.hpp"
#include "seqcluster/metrics.hpp"

using namespace seqcluster;
using namespace seqcluster::baselines;

namespace {

Tensor column(std::initializer_list<double> v) { return Tensor({v.size(), 1}, std::vector<double>(v)); }

Tensor blobs(std::size_t per, std::size_t k, std::size_t m, std::uint64_t seed, std::vector<int>* truth = nullptr) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.1);
  Tensor x({per * k, m});
  for (std::size_t i = 0; i < per * k; ++i) {
    const std::size_t c = i % k;
    for (std::size_t j = 0; j < m; ++j) x(i, j) = 10.0 * static_cast<double>((c + j) % k) + g(rng);
    if (truth) truth->push_back(static_cast<int>(c));
  }
  return x;
}

}  // namespace

TEST_CASE("k-means on distinct points and a 1-D example") {
  const Tensor pts = Tensor::matrix(3, 2, {0, 0, 5, 5, -3, 8});
  const auto r = kmeans(pts, 3, 1);
  CHECK(*r.inertia == 0.0);
  std::vector<int> sorted = r.labels;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2});

  const auto r1 = kmeans(column({0.0, 0.1, 10.0, 10.1}), 2, 3);
  CHECK(r1.labels[0] == r1.labels[1]);
  CHECK(r1.labels[2] == r1.labels[3]);
  CHECK(r1.labels[0] != r1.labels[2]);
  std::vector<double> c = {(*r1.centroids)[0], (*r1.centroids)[1]};
  std::sort(c.begin(), c.end());
  CHECK(c[0] == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(10.05).epsilon(1e-12));
  CHECK(*r1.inertia == doctest::Approx(4 * 0.0025).epsilon(1e-9));
}

TEST_CASE("k-means inertia never increases across Lloyd iterations") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x({120, 3});
    for (double& v : x.data()) v = g(rng);
    KMeansTrace trace;
    const auto r = kmeans(x, 2 + trial % 5, trial, {}, &trace);
    REQUIRE(trace.inertia_per_run.size() == 10);
    for (const auto& run : trace.inertia_per_run)
      for (std::size_t i = 1; i < run.size(); ++i) CHECK(run[i] <= run[i - 1] * (1 + 1e-12));
    CHECK(*r.inertia == trace.inertia_per_run[trace.best_run].back());
    for (const auto& run : trace.inertia_per_run) CHECK(*r.inertia <= run.back());
  }
}

TEST_CASE("k-means labels are nearest-centroid consistent, seeded and permutation invariant") {
  std::vector<int> truth;
  const Tensor x = blobs(30, 4, 3, 2, &truth);
  const auto a = kmeans(x, 4, 9);
  const auto b = kmeans(x, 4, 9);
  CHECK(a.labels == b.labels);
  CHECK(metrics::clustering_accuracy(a.labels, truth, 4) == 1.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = 1e300;
    int arg = -1;
    for (std::size_t c = 0; c < 4; ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < 3; ++j) d += std::pow(x(i, j) - (*a.centroids)(c, j), 2);
      if (d < best) best = d, arg = static_cast<int>(c);
    }
    CHECK(a.labels[i] == arg);
  }

  std::vector<std::size_t> perm(x.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(4));
  Tensor xp({x.rows(), 3});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j) xp(i, j) = x(perm[i], j);
  const auto p = kmeans(xp, 4, 9);
  std::vector<int> back(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) back[perm[i]] = p.labels[i];
  CHECK(metrics::clustering_accuracy(back, a.labels, 4) == 1.0);
}

TEST_CASE("k-means with coincident points still covers every point") {
  const auto r = kmeans(column({0, 0, 0, 5}), 3, 1);
  CHECK(*r.inertia == 0.0);
  for (int l : r.labels) CHECK((l >= 0 && l < 3));
  CHECK_THROWS_AS(kmeans(column({1, 2}), 3, 1), ConfigError);
}

TEST_CASE("agglomerative 1-D example for every linkage") {
  for (Linkage l : {Linkage::average, Linkage::complete, Linkage::ward}) {
    CAPTURE(linkage_name(l));
    Dendrogram d;
    const auto r = agglomerative(column({0, 1, 10}), 2, l, &d);
    CHECK(r.labels == std::vector<int>{0, 0, 1});
    REQUIRE(d.merges.size() == 1);
    CHECK(d.merges[0].a == 0);
    CHECK(d.merges[0].b == 1);
    CHECK(d.merges[0].height == doctest::Approx(1.0));
  }
  CHECK(agglomerative(column({3, 1, 2}), 3, Linkage::ward).labels == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(parse_linkage("single"), ConfigError);
}

TEST_CASE("Ward merge heights on a hand-computed rectangle") {
  // (0,0) (1,0) (0,3) (1,3): two unit-height merges (tie to the lower pair),
  // then the pair centroids (0.5,0),(0.5,3): sqrt(2*2*2/4 * 9) = sqrt(18)
  const Tensor x = Tensor::matrix(4, 2, {0, 0, 1, 0, 0, 3, 1, 3});
  Dendrogram d;
  const auto r = agglomerative(x, 1, Linkage::ward, &d);
  REQUIRE(d.merges.size() == 3);
  CHECK(d.merges[0].a == 0);
  CHECK(d.merges[0].b == 1);
  CHECK(d.merges[1].a == 2);
  CHECK(d.merges[1].b == 3);
  CHECK(d.merges[2].a == 0);
  CHECK(d.merges[2].b == 2);
  CHECK(d.merges[0].height == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d.merges[1].height == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d.merges[2].height == doctest::Approx(std::sqrt(18.0)).epsilon(1e-14));
  CHECK(d.merges[2].size == 4);
  CHECK(r.labels == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("agglomerative matches brute-force merge simulation") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 7;
    const std::size_t m = 1 + trial % 3;
    const std::size_t k = 1 + rng() % n;
    Tensor x({n, m});
    for (double& v : x.data()) v = u(rng);
    for (Linkage l : {Linkage::average, Linkage::complete, Linkage::ward}) {
      CAPTURE(trial);
      CAPTURE(linkage_name(l));
      Dendrogram d;
      const auto r = agglomerative(x, k, l, &d);
      const auto sim = oracle::agglomerative(x, k, l);
      CHECK(r.labels == sim.labels);
      REQUIRE(d.merges.size() == sim.heights.size());
      for (std::size_t i = 0; i < sim.heights.size(); ++i)
        CHECK(d.merges[i].height == doctest::Approx(sim.heights[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("Ward heights are non-decreasing") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Tensor x({80, 4});
  for (double& v : x.data()) v = g(rng);
  Dendrogram d;
  agglomerative(x, 1, Linkage::ward, &d);
  REQUIRE(d.merges.size() == 79);
  for (std::size_t i = 1; i < d.merges.size(); ++i) CHECK(d.merges[i].height >= d.merges[i - 1].height - 1e-12);
}

TEST_CASE("agglomerative recovers separated blobs and cluster means") {
  std::vector<int> truth;
  const Tensor x = blobs(10, 3, 2, 8, &truth);
  for (Linkage l : {Linkage::average, Linkage::complete, Linkage::ward}) {
    const auto r = agglomerative(x, 3, l);
    CHECK(metrics::clustering_accuracy(r.labels, truth, 3) == 1.0);
  }
  const Tensor means = cluster_means(column({1, 3, 10}), {0, 0, 1}, 2);
  CHECK(means[0] == 2.0);
  CHECK(means[1] == 10.0);
  CHECK_THROWS_AS(cluster_means(column({1, 3}), {0, 0}, 2), ConfigError);
}
