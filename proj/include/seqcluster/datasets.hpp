#pragma once
// Segment sets: sliding-window segmentation, per-channel z-score
// normalization, task construction, canonical on-disk format, the UCI HAR
// raw-inertial importer and a labelled synthetic generator.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqcluster/tensor.hpp"

namespace seqcluster::data {

inline constexpr int kUnknownLabel = -1;

struct DatasetConfig {
  std::string name = "dataset";
  double sampling_rate = 50.0;    // Hz
  double window_duration = 2.56;  // seconds
  double window_step = 1.28;      // seconds
  std::size_t num_channels = 1;
  std::size_t num_clusters = 2;

  std::size_t window_length() const;  // samples per window, round(duration * rate)
  std::size_t step_length() const;    // samples between window starts
  /// Throws ConfigError naming the offending field.
  void validate() const;

  static DatasetConfig ucihar();
};

struct Segment {
  Tensor values;  // T x d
  int label = kUnknownLabel;
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline constexpr double kStdFloor = 1e-8;

struct SegmentSet {
  DatasetConfig config;
  std::vector<Segment> segments;
  std::optional<NormalizationStats> normalization;

  std::size_t size() const { return segments.size(); }
  std::size_t window_length() const;
  std::size_t channels() const;
  /// True when every segment carries a label.
  bool has_labels() const;
  std::vector<int> labels() const;
  /// Checks shape/label/finiteness invariants; throws ConfigError.
  void validate() const;
};

/// Model inputs and targets for one segment; every member is (T/2) x d.
struct TaskTriple {
  Tensor input;
  Tensor rec_target;  // input reversed in time
  Tensor fut_target;  // second half of the segment
};

/// Cuts a continuous L x d stream into windows starting at 0, step, 2*step...
/// With per-sample labels, each window takes the majority label of its
/// samples (unknown samples ignored, ties to the lowest id).
SegmentSet sliding_window(const Tensor& stream, std::span<const int> sample_labels,
                          const DatasetConfig& config);
SegmentSet sliding_window(const Tensor& stream, const DatasetConfig& config);

NormalizationStats fit_normalization(const SegmentSet& set);
[[nodiscard]] SegmentSet apply_normalization(const SegmentSet& set, const NormalizationStats& stats);
/// Inverse of apply_normalization using the stats recorded on the set.
[[nodiscard]] SegmentSet remove_normalization(const SegmentSet& set);

std::vector<TaskTriple> build_tasks(const SegmentSet& set);

/// Flattens each full window row-major into one row: n x (T*d).
Tensor flatten_windows(const SegmentSet& set);

// ---- canonical segment directory (meta.json + segments.csv) -------------

void write_canonical(const SegmentSet& set, const std::filesystem::path& dir);
SegmentSet read_canonical(const std::filesystem::path& dir);

// ---- UCI HAR -----------------------------------------------------------

/// Channel order used by import_ucihar.
const std::vector<std::string>& ucihar_channels();

/// Reads `<root>/{train,test}/Inertial Signals/*` and `y_{split}.txt`.
/// `root` may also be the directory that contains "UCI HAR Dataset".
std::pair<SegmentSet, SegmentSet> import_ucihar(const std::filesystem::path& root);

// ---- synthetic regimes ---------------------------------------------------

/// Per-channel sinusoid; frequency is in cycles per window.
struct SynthRegime {
  std::vector<double> frequency;
  std::vector<double> amplitude;
  std::vector<double> phase;
};

struct SynthSpec {
  std::size_t num_channels = 4;
  std::size_t window_length = 32;
  std::size_t segments_per_regime = 100;
  double noise_sigma = 0.05;
  /// Each segment is cropped at a uniform random offset in [0, max_offset)
  /// samples of its regime's periodic signal.
  double max_offset = 4.0;  // standard(): window_length / 8
  double sampling_rate = 50.0;
  std::vector<SynthRegime> regimes;

  /// Deterministic family of k well-separated regimes.
  static SynthSpec standard(std::size_t k, std::size_t d, std::size_t window_length,
                            std::size_t per_regime, double sigma);
  void validate() const;
};

/// Deterministic for a fixed seed. Values are quantized to the canonical
/// file precision, so a generated set survives a write/read cycle unchanged.
SegmentSet synth_generate(const SynthSpec& spec, std::uint64_t seed);

/// Rounds to the 9 significant digits used by the canonical CSV.
double quantize_canonical(double v);

}  // namespace seqcluster::data
