#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "seqcluster/datasets.hpp"
#include "seqcluster/error.hpp"

namespace seqcluster::data {
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kUciWindow = 128;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("ucihar: missing file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Whitespace-separated numbers, one record per non-empty line.
std::vector<std::vector<double>> read_rows(const fs::path& p) {
  const std::string text = read_file(p);
  std::vector<std::vector<double>> rows;
  const char* cur = text.data();
  const char* end = text.data() + text.size();
  std::vector<double> row;
  std::size_t line = 1;
  while (cur < end) {
    if (*cur == '\n') {
      if (!row.empty()) rows.push_back(std::move(row));
      row.clear();
      ++line;
      ++cur;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(*cur))) {
      ++cur;
      continue;
    }
    if (*cur == '+') ++cur;
    double v = 0.0;
    const auto res = std::from_chars(cur, end, v);
    if (res.ec != std::errc()) {
      throw IoError("ucihar: corrupt value in " + p.string() + " line " + std::to_string(line));
    }
    row.push_back(v);
    cur = res.ptr;
  }
  if (!row.empty()) rows.push_back(std::move(row));
  return rows;
}

SegmentSet load_split(const fs::path& root, const std::string& split) {
  const fs::path signals = root / split / "Inertial Signals";
  const auto& channels = ucihar_channels();
  std::vector<std::vector<std::vector<double>>> per_channel;
  per_channel.reserve(channels.size());
  for (const std::string& ch : channels) {
    const fs::path file = signals / (ch + "_" + split + ".txt");
    per_channel.push_back(read_rows(file));
    const auto& rows = per_channel.back();
    if (rows.size() != per_channel.front().size()) {
      throw IoError("ucihar: corruption, " + file.string() + " has " + std::to_string(rows.size()) +
                    " rows but " + channels.front() + " has " + std::to_string(per_channel.front().size()));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != kUciWindow) {
        throw IoError("ucihar: corruption, " + file.string() + " row " + std::to_string(i + 1) + " has " +
                      std::to_string(rows[i].size()) + " values, expected 128");
      }
    }
  }
  const fs::path label_file = root / split / ("y_" + split + ".txt");
  const auto label_rows = read_rows(label_file);
  const std::size_t n = per_channel.front().size();
  if (label_rows.size() != n) {
    throw IoError("ucihar: corruption, " + label_file.string() + " has " + std::to_string(label_rows.size()) +
                  " labels for " + std::to_string(n) + " windows");
  }

  SegmentSet set;
  set.config = DatasetConfig::ucihar();
  set.segments.resize(n);
  const std::size_t d = channels.size();
  for (std::size_t i = 0; i < n; ++i) {
    Segment& s = set.segments[i];
    s.values = Tensor({kUciWindow, d});
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t t = 0; t < kUciWindow; ++t) s.values(t, c) = per_channel[c][i][t];
    if (label_rows[i].size() != 1) {
      throw IoError("ucihar: corruption, " + label_file.string() + " line " + std::to_string(i + 1));
    }
    const double raw = label_rows[i][0];
    if (raw < 1.0 || raw > 6.0 || raw != static_cast<int>(raw)) {
      throw IoError("ucihar: label " + std::to_string(raw) + " outside 1..6 in " + label_file.string());
    }
    s.label = static_cast<int>(raw) - 1;
  }
  set.validate();
  return set;
}

}  // namespace

const std::vector<std::string>& ucihar_channels() {
  static const std::vector<std::string> names = {
      "body_acc_x",  "body_acc_y",  "body_acc_z",  "body_gyro_x", "body_gyro_y",
      "body_gyro_z", "total_acc_x", "total_acc_y", "total_acc_z",
  };
  return names;
}

std::pair<SegmentSet, SegmentSet> import_ucihar(const fs::path& root_in) {
  fs::path root = root_in;
  if (!fs::exists(root / "train") && fs::exists(root / "UCI HAR Dataset" / "train")) {
    root = root / "UCI HAR Dataset";
  }
  SegmentSet train = load_split(root, "train");
  SegmentSet test = load_split(root, "test");
  return {std::move(train), std::move(test)};
}

}  // namespace seqcluster::data
