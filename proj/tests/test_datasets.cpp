#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "seqcluster/datasets.hpp"
#include "seqcluster/error.hpp"
#include "test_util.hpp"

using namespace seqcluster;
using namespace seqcluster::data;
namespace fs = std::filesystem;

namespace {

DatasetConfig config_for(std::size_t t, std::size_t step, std::size_t d) {
  DatasetConfig c;
  c.sampling_rate = 1.0;
  c.window_duration = static_cast<double>(t);
  c.window_step = static_cast<double>(step);
  c.num_channels = d;
  c.num_clusters = 3;
  return c;
}

Tensor ramp_stream(std::size_t len, std::size_t d) {
  Tensor s({len, d});
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t c = 0; c < d; ++c) s(i, c) = static_cast<double>(i * 10 + c);
  return s;
}

}  // namespace

TEST_CASE("sliding_window examples") {
  const Tensor stream = ramp_stream(10, 2);
  const SegmentSet set = sliding_window(stream, config_for(4, 2, 2));
  REQUIRE(set.size() == 4);
  for (std::size_t w = 0; w < 4; ++w) CHECK(set.segments[w].values(0, 0) == static_cast<double>(20 * w));

  const SegmentSet one = sliding_window(ramp_stream(4, 2), config_for(4, 2, 2));
  REQUIRE(one.size() == 1);
  CHECK(one.segments[0].values == ramp_stream(4, 2));

  CHECK(DatasetConfig::ucihar().window_length() == 128);
  CHECK_THROWS_AS(sliding_window(ramp_stream(3, 2), config_for(4, 2, 2)), ConfigError);
}

TEST_CASE("sliding_window count matches floor((L-T)/step)+1 by enumeration") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t t = 2 * (1 + rng() % 8);
    const std::size_t step = 1 + rng() % t;
    const std::size_t len = t + rng() % 60;
    std::size_t enumerated = 0;
    for (std::size_t start = 0; start + t <= len; start += step) ++enumerated;
    const SegmentSet set = sliding_window(ramp_stream(len, 1), config_for(t, step, 1));
    CHECK(set.size() == enumerated);
    CHECK(set.size() == (len - t) / step + 1);
  }
}

TEST_CASE("sliding_window majority label, ties to lowest id") {
  const Tensor stream = ramp_stream(8, 1);
  const std::vector<int> labels = {2, 2, 1, 1, 0, 0, 0, -1};
  const SegmentSet set = sliding_window(stream, labels, config_for(4, 4, 1));
  REQUIRE(set.size() == 2);
  CHECK(set.segments[0].label == 1);  // {2,2,1,1} tie -> 1
  CHECK(set.segments[1].label == 0);  // {0,0,0,-1}
}

TEST_CASE("DatasetConfig invariants") {
  CHECK_THROWS_AS(config_for(3, 1, 1).validate(), ConfigError);   // odd window
  CHECK_THROWS_AS(config_for(4, 5, 1).validate(), ConfigError);   // step > window
  CHECK_NOTHROW(config_for(4, 4, 1).validate());
}

TEST_CASE("fit_normalization") {
  SegmentSet set;
  set.config = config_for(2, 1, 2);
  // channel 0: {-1, 1, -1, 1}; channel 1: constant 5.
  set.segments.push_back({Tensor::matrix(2, 2, {-1, 5, 1, 5}), 0});
  set.segments.push_back({Tensor::matrix(2, 2, {-1, 5, 1, 5}), 1});
  const NormalizationStats st = fit_normalization(set);
  CHECK(st.mean[0] == 0.0);
  CHECK(st.stddev[0] == 1.0);
  CHECK(st.mean[1] == 5.0);
  CHECK(st.stddev[1] == kStdFloor);

  // Two-channel toy set, direct summation oracle.
  SegmentSet toy;
  toy.config = config_for(2, 1, 2);
  toy.segments.push_back({Tensor::matrix(2, 2, {1, 10, 2, 20}), -1});
  toy.segments.push_back({Tensor::matrix(2, 2, {3, 30, 6, 60}), -1});
  const NormalizationStats ts = fit_normalization(toy);
  // ch0: mean 3, var ((4+1+0+9)/4) = 3.5; ch1: mean 30, var (400+100+0+900)/4 = 350
  CHECK(ts.mean[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(ts.stddev[0] == doctest::Approx(std::sqrt(3.5)).epsilon(1e-15));
  CHECK(ts.mean[1] == doctest::Approx(30.0).epsilon(1e-15));
  CHECK(ts.stddev[1] == doctest::Approx(std::sqrt(350.0)).epsilon(1e-15));
}

TEST_CASE("apply_normalization") {
  SegmentSet set = synth_generate(SynthSpec::standard(3, 4, 16, 20, 0.1), 5);
  const NormalizationStats st = fit_normalization(set);
  const SegmentSet norm = apply_normalization(set, st);
  const NormalizationStats after = fit_normalization(norm);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(std::abs(after.mean[c]) < 1e-6);
    CHECK(std::abs(after.stddev[c] - 1.0) < 1e-6);
  }
  // Identity stats.
  const NormalizationStats unit{{0, 0, 0, 0}, {1, 1, 1, 1}};
  CHECK(apply_normalization(set, unit).segments[3].values == set.segments[3].values);
  // Test split transformed with train stats: three-value toy.
  SegmentSet test;
  test.config = config_for(2, 1, 1);
  test.segments.push_back({Tensor::matrix(2, 1, {4.0, 7.0}), -1});
  const NormalizationStats train{{1.0}, {2.0}};
  const SegmentSet tn = apply_normalization(test, train);
  CHECK(tn.segments[0].values(0, 0) == 1.5);
  CHECK(tn.segments[0].values(1, 0) == 3.0);
  CHECK(tn.normalization->mean[0] == 1.0);
  // Invertible.
  const SegmentSet back = remove_normalization(norm);
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t j = 0; j < set.segments[i].values.size(); ++j)
      CHECK(std::abs(back.segments[i].values[j] - set.segments[i].values[j]) < 1e-9);
  CHECK_THROWS_AS((void)apply_normalization(set, train), ConfigError);
}

TEST_CASE("build_tasks") {
  SegmentSet set;
  set.config = config_for(4, 2, 1);
  set.segments.push_back({Tensor::matrix(4, 1, {1, 2, 3, 4}), -1});
  const auto tasks = build_tasks(set);
  CHECK(tasks[0].input == Tensor::matrix(2, 1, {1, 2}));
  CHECK(tasks[0].rec_target == Tensor::matrix(2, 1, {2, 1}));
  CHECK(tasks[0].fut_target == Tensor::matrix(2, 1, {3, 4}));

  SegmentSet odd;
  odd.config = config_for(4, 2, 1);
  odd.segments.push_back({Tensor::matrix(3, 1, {1, 2, 3}), -1});
  CHECK_THROWS_AS(build_tasks(odd), ConfigError);

  // Property: reverse(reverse(x)) == x; concat(x, fut) == segment.
  const SegmentSet syn = apply_normalization(synth_generate(SynthSpec::standard(2, 3, 128, 5, 0.2), 3),
                                             NormalizationStats{{0.1, 0.2, 0.3}, {1.5, 2.0, 0.5}});
  const auto triples = build_tasks(syn);
  for (std::size_t i = 0; i < syn.size(); ++i) {
    const TaskTriple& tr = triples[i];
    CHECK(tr.input.rows() == 64);
    CHECK(tr.rec_target.rows() == 64);
    CHECK(tr.fut_target.rows() == 64);
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(tr.rec_target(63 - r, c) == tr.input(r, c));
        CHECK(tr.input(r, c) == syn.segments[i].values(r, c));
        CHECK(tr.fut_target(r, c) == syn.segments[i].values(64 + r, c));
      }
  }
}

TEST_CASE("synth_generate") {
  SUBCASE("noiseless regimes are identical within a regime") {
    SynthSpec spec = SynthSpec::standard(2, 3, 16, 4, 0.0);
    spec.max_offset = 0.0;
    const SegmentSet set = synth_generate(spec, 1);
    CHECK(set.segments[0].values == set.segments[2].values);
    CHECK(set.segments[1].values == set.segments[3].values);
    CHECK_FALSE(set.segments[0].values == set.segments[1].values);
    CHECK(set.segments[0].label == 0);
    CHECK(set.segments[1].label == 1);
  }
  SUBCASE("deterministic per seed") {
    const SynthSpec spec = SynthSpec::standard(3, 4, 32, 10, 0.05);
    const SegmentSet a = synth_generate(spec, 42), b = synth_generate(spec, 42), c = synth_generate(spec, 43);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.segments[i].values == b.segments[i].values);
    CHECK_FALSE(a.segments[0].values == c.segments[0].values);
  }
  SUBCASE("k < 2 is a config error") {
    CHECK_THROWS_AS(synth_generate(SynthSpec::standard(1, 2, 8, 3, 0.0), 0), ConfigError);
  }
}

TEST_CASE("canonical directory round trip") {
  test_util::TempDir tmp;
  const SegmentSet set = synth_generate(SynthSpec::standard(3, 4, 32, 5, 0.05), 9);
  write_canonical(set, tmp.path() / "a");
  const SegmentSet back = read_canonical(tmp.path() / "a");
  REQUIRE(back.size() == set.size());
  CHECK(back.config.num_clusters == 3);
  CHECK(back.config.window_length() == 32);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(back.segments[i].values == set.segments[i].values);
    CHECK(back.segments[i].label == set.segments[i].label);
  }
  write_canonical(back, tmp.path() / "b");
  CHECK(test_util::read_bytes(tmp.path() / "a" / "segments.csv") ==
        test_util::read_bytes(tmp.path() / "b" / "segments.csv"));
  CHECK(test_util::read_bytes(tmp.path() / "a" / "meta.json") ==
        test_util::read_bytes(tmp.path() / "b" / "meta.json"));
  const std::string header = test_util::read_bytes(tmp.path() / "a" / "segments.csv").substr(0, 40);
  CHECK(header.rfind("segment_id,t,ch_0,ch_1,ch_2,ch_3,label\n", 0) == 0);

  CHECK_THROWS_AS(read_canonical(tmp.path() / "missing"), IoError);
}

namespace {

void write_fake_ucihar(const fs::path& root, const std::string& split, std::size_t n, std::size_t label_rows) {
  const fs::path sig = root / split / "Inertial Signals";
  fs::create_directories(sig);
  for (std::size_t c = 0; c < ucihar_channels().size(); ++c) {
    std::ofstream out(sig / (ucihar_channels()[c] + "_" + split + ".txt"));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < 128; ++t) out << "  " << (static_cast<double>(c) + 0.001 * t + i) << "e+000";
      out << "\n";
    }
  }
  std::ofstream y(root / split / ("y_" + split + ".txt"));
  for (std::size_t i = 0; i < label_rows; ++i) y << (i % 6) + 1 << "\n";
}

}  // namespace

TEST_CASE("import_ucihar on a miniature archive") {
  test_util::TempDir tmp;
  const fs::path root = tmp.path() / "UCI HAR Dataset";
  write_fake_ucihar(root, "train", 7, 7);
  write_fake_ucihar(root, "test", 3, 3);
  auto [train, test] = import_ucihar(tmp.path());
  CHECK(train.size() == 7);
  CHECK(test.size() == 3);
  CHECK(train.window_length() == 128);
  CHECK(train.channels() == 9);
  CHECK(train.segments[6].label == 0);  // 7 % 6 == 1 -> label 1 -> 0
  CHECK(train.segments[2].label == 2);
  CHECK(train.segments[1].values(5, 4) == doctest::Approx(4.0 + 0.005 + 1.0));
  auto again = import_ucihar(root);
  for (std::size_t i = 0; i < train.size(); ++i) CHECK(again.first.segments[i].values == train.segments[i].values);

  // Truncated label file.
  write_fake_ucihar(root, "train", 7, 5);
  CHECK_THROWS_AS(import_ucihar(root), IoError);
  // Missing channel file.
  write_fake_ucihar(root, "train", 7, 7);
  fs::remove(root / "train" / "Inertial Signals" / "body_gyro_y_train.txt");
  try {
    import_ucihar(root);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("body_gyro_y_train.txt") != std::string::npos);
  }
}
