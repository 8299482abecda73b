#include "seqcluster/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "seqcluster/error.hpp"

namespace seqcluster::data {

std::size_t DatasetConfig::window_length() const {
  const double t = std::round(window_duration * sampling_rate);
  return t < 0 ? 0 : static_cast<std::size_t>(t);
}

std::size_t DatasetConfig::step_length() const {
  const double s = std::round(window_step * sampling_rate);
  return s < 1 ? 1 : static_cast<std::size_t>(s);
}

void DatasetConfig::validate() const {
  if (!(sampling_rate > 0.0)) throw ConfigError("dataset.sampling_rate must be positive");
  if (!(window_duration > 0.0)) throw ConfigError("dataset.window_duration must be positive");
  const std::size_t t = window_length();
  if (t < 2 || t % 2 != 0) {
    throw ConfigError("dataset.window_duration: window of " + std::to_string(t) +
                      " samples must be even and at least 2");
  }
  if (!(window_step > 0.0) || window_step > window_duration) {
    throw ConfigError("dataset.window_step must lie in (0, window_duration]");
  }
  if (num_channels == 0) throw ConfigError("dataset.num_channels must be positive");
  if (num_clusters == 0) throw ConfigError("dataset.num_clusters must be positive");
}

DatasetConfig DatasetConfig::ucihar() {
  DatasetConfig c;
  c.name = "ucihar";
  c.sampling_rate = 50.0;
  c.window_duration = 2.56;
  c.window_step = 1.28;
  c.num_channels = 9;
  c.num_clusters = 6;
  return c;
}

// ---- SegmentSet ------------------------------------------------------------

std::size_t SegmentSet::window_length() const {
  return segments.empty() ? config.window_length() : segments.front().values.rows();
}

std::size_t SegmentSet::channels() const {
  return segments.empty() ? config.num_channels : segments.front().values.cols();
}

bool SegmentSet::has_labels() const {
  return !segments.empty() && std::all_of(segments.begin(), segments.end(),
                                          [](const Segment& s) { return s.label != kUnknownLabel; });
}

std::vector<int> SegmentSet::labels() const {
  std::vector<int> out;
  out.reserve(segments.size());
  for (const Segment& s : segments) out.push_back(s.label);
  return out;
}

void SegmentSet::validate() const {
  const std::size_t t = window_length();
  const std::size_t d = channels();
  if (d != config.num_channels) {
    throw ConfigError("segment set has " + std::to_string(d) + " channels but config declares " +
                      std::to_string(config.num_channels));
  }
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    if (s.values.rows() != t || s.values.cols() != d) {
      throw ConfigError("segment " + std::to_string(i) + " has shape " + shape_string(s.values.shape()) +
                        ", expected [" + std::to_string(t) + "x" + std::to_string(d) + "]");
    }
    if (!s.values.all_finite()) throw ConfigError("segment " + std::to_string(i) + " has non-finite values");
    if (s.label != kUnknownLabel &&
        (s.label < 0 || static_cast<std::size_t>(s.label) >= config.num_clusters)) {
      throw ConfigError("segment " + std::to_string(i) + " label " + std::to_string(s.label) +
                        " outside [0, " + std::to_string(config.num_clusters) + ")");
    }
  }
  if (normalization && (normalization->mean.size() != d || normalization->stddev.size() != d)) {
    throw ConfigError("normalization stats do not match channel count");
  }
}

// ---- segmentation ----------------------------------------------------------

namespace {

int majority_label(std::span<const int> labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels) {
    if (l != kUnknownLabel) ++counts[l];
  }
  int best = kUnknownLabel;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts) {  // ascending label order
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

}  // namespace

SegmentSet sliding_window(const Tensor& stream, std::span<const int> sample_labels,
                          const DatasetConfig& config) {
  config.validate();
  const std::size_t len = stream.rows();
  const std::size_t d = stream.cols();
  if (d != config.num_channels) {
    throw ConfigError("stream has " + std::to_string(d) + " channels, config declares " +
                      std::to_string(config.num_channels));
  }
  if (!sample_labels.empty() && sample_labels.size() != len) {
    throw ConfigError("sample label count does not match stream length");
  }
  const std::size_t t = config.window_length();
  if (stream.empty() || len < t) {
    throw ConfigError("stream of " + std::to_string(len) + " samples is shorter than one window (" +
                      std::to_string(t) + "); no segments produced");
  }
  const std::size_t step = config.step_length();
  SegmentSet out;
  out.config = config;
  for (std::size_t start = 0; start + t <= len; start += step) {
    Segment s;
    s.values = Tensor({t, d});
    std::copy_n(stream.ptr() + start * d, t * d, s.values.ptr());
    if (!sample_labels.empty()) s.label = majority_label(sample_labels.subspan(start, t));
    out.segments.push_back(std::move(s));
  }
  return out;
}

SegmentSet sliding_window(const Tensor& stream, const DatasetConfig& config) {
  return sliding_window(stream, {}, config);
}

// ---- normalization ---------------------------------------------------------

NormalizationStats fit_normalization(const SegmentSet& set) {
  if (set.segments.empty()) throw ConfigError("fit_normalization: empty segment set");
  const std::size_t d = set.channels();
  std::vector<double> sum(d, 0.0);
  std::size_t count = 0;
  for (const Segment& s : set.segments) {
    for (std::size_t r = 0; r < s.values.rows(); ++r)
      for (std::size_t c = 0; c < d; ++c) sum[c] += s.values(r, c);
    count += s.values.rows();
  }
  NormalizationStats stats;
  stats.mean.resize(d);
  for (std::size_t c = 0; c < d; ++c) stats.mean[c] = sum[c] / static_cast<double>(count);
  // Second pass for the centred variance.
  std::vector<double> sq(d, 0.0);
  for (const Segment& s : set.segments) {
    for (std::size_t r = 0; r < s.values.rows(); ++r)
      for (std::size_t c = 0; c < d; ++c) {
        const double dev = s.values(r, c) - stats.mean[c];
        sq[c] += dev * dev;
      }
  }
  stats.stddev.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    stats.stddev[c] = std::max(kStdFloor, std::sqrt(sq[c] / static_cast<double>(count)));
  }
  return stats;
}

SegmentSet apply_normalization(const SegmentSet& set, const NormalizationStats& stats) {
  const std::size_t d = set.channels();
  if (stats.mean.size() != d || stats.stddev.size() != d) {
    throw ConfigError("apply_normalization: stats cover " + std::to_string(stats.mean.size()) +
                      " channels, set has " + std::to_string(d));
  }
  SegmentSet out = set;
  for (Segment& s : out.segments) {
    for (std::size_t r = 0; r < s.values.rows(); ++r)
      for (std::size_t c = 0; c < d; ++c) s.values(r, c) = (s.values(r, c) - stats.mean[c]) / stats.stddev[c];
  }
  out.normalization = stats;
  return out;
}

SegmentSet remove_normalization(const SegmentSet& set) {
  if (!set.normalization) throw StateError("remove_normalization: set is not normalized");
  const NormalizationStats& stats = *set.normalization;
  SegmentSet out = set;
  const std::size_t d = set.channels();
  for (Segment& s : out.segments) {
    for (std::size_t r = 0; r < s.values.rows(); ++r)
      for (std::size_t c = 0; c < d; ++c) s.values(r, c) = s.values(r, c) * stats.stddev[c] + stats.mean[c];
  }
  out.normalization.reset();
  return out;
}

// ---- tasks -----------------------------------------------------------------

std::vector<TaskTriple> build_tasks(const SegmentSet& set) {
  std::vector<TaskTriple> out;
  out.reserve(set.size());
  for (const Segment& s : set.segments) {
    const std::size_t t = s.values.rows();
    const std::size_t d = s.values.cols();
    if (t % 2 != 0) throw ConfigError("build_tasks: window length " + std::to_string(t) + " is odd");
    const std::size_t half = t / 2;
    TaskTriple task{Tensor({half, d}), Tensor({half, d}), Tensor({half, d})};
    std::copy_n(s.values.ptr(), half * d, task.input.ptr());
    std::copy_n(s.values.ptr() + half * d, half * d, task.fut_target.ptr());
    for (std::size_t r = 0; r < half; ++r) {
      std::copy_n(s.values.ptr() + (half - 1 - r) * d, d, task.rec_target.ptr() + r * d);
    }
    out.push_back(std::move(task));
  }
  return out;
}

Tensor flatten_windows(const SegmentSet& set) {
  if (set.segments.empty()) throw ConfigError("flatten_windows: empty segment set");
  const std::size_t width = set.window_length() * set.channels();
  Tensor out({set.size(), width});
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::copy_n(set.segments[i].values.ptr(), width, out.ptr() + i * width);
  }
  return out;
}

}  // namespace seqcluster::data
