// Canonical segment directory:
//   meta.json     name, sampling_rate, window_duration, num_channels,
//                 num_clusters, num_segments, window_len
//   segments.csv  segment_id,t,ch_0,...,ch_{d-1},label   (label -1 = unknown)
// Rows sorted by (segment_id, t); LF line endings; floats with at most 9
// significant digits.

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "json.hpp"
#include "seqcluster/datasets.hpp"
#include "seqcluster/error.hpp"

namespace seqcluster::data {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  out.append(buf, res.ptr);
}

template <typename T>
void append_int(std::string& out, T v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view field, const fs::path& file, std::size_t line) {
  T v{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw IoError(file.string() + ":" + std::to_string(line) + ": cannot parse '" + std::string(field) + "'");
  }
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

double quantize_canonical(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  double out = 0.0;
  std::from_chars(buf, res.ptr, out);
  return out;
}

void write_canonical(const SegmentSet& set, const fs::path& dir) {
  set.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  const json meta = {
      {"name", set.config.name},
      {"sampling_rate", set.config.sampling_rate},
      {"window_duration", set.config.window_duration},
      {"num_channels", set.channels()},
      {"num_clusters", set.config.num_clusters},
      {"num_segments", set.size()},
      {"window_len", set.window_length()},
  };
  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + (dir / "meta.json").string());
  }

  const std::size_t d = set.channels();
  std::ofstream out(dir / "segments.csv", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "segments.csv").string());
  std::string buf = "segment_id,t";
  for (std::size_t c = 0; c < d; ++c) buf += ",ch_" + std::to_string(c);
  buf += ",label\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Segment& s = set.segments[i];
    for (std::size_t t = 0; t < s.values.rows(); ++t) {
      append_int(buf, i);
      buf += ',';
      append_int(buf, t);
      for (std::size_t c = 0; c < d; ++c) {
        buf += ',';
        append_double(buf, s.values(t, c));
      }
      buf += ',';
      append_int(buf, s.label);
      buf += '\n';
    }
    if (buf.size() > (1u << 20)) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + (dir / "segments.csv").string());
}

SegmentSet read_canonical(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  const fs::path csv_path = dir / "segments.csv";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw IoError("missing file: " + meta_path.string());
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }

  SegmentSet set;
  std::size_t n = 0, t_len = 0;
  try {
    set.config.name = meta.at("name").get<std::string>();
    set.config.sampling_rate = meta.at("sampling_rate").get<double>();
    set.config.window_duration = meta.at("window_duration").get<double>();
    set.config.window_step = set.config.window_duration / 2.0;
    set.config.num_channels = meta.at("num_channels").get<std::size_t>();
    set.config.num_clusters = meta.at("num_clusters").get<std::size_t>();
    n = meta.at("num_segments").get<std::size_t>();
    t_len = meta.at("window_len").get<std::size_t>();
  } catch (const json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }
  const std::size_t d = set.config.num_channels;
  if (n == 0 || t_len == 0 || d == 0) {
    throw IoError(meta_path.string() + ": num_segments, window_len and num_channels must be positive");
  }

  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("missing file: " + csv_path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw IoError(csv_path.string() + ": empty file");
  std::string expected_header = "segment_id,t";
  for (std::size_t c = 0; c < d; ++c) expected_header += ",ch_" + std::to_string(c);
  expected_header += ",label";
  if (line != expected_header) {
    throw IoError(csv_path.string() + ": header does not match " + std::to_string(d) + " channels");
  }

  set.segments.resize(n);
  for (Segment& s : set.segments) s.values = Tensor({t_len, d});
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != d + 3) {
      throw IoError(csv_path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(d + 3) + " fields");
    }
    const auto seg = parse_number<std::size_t>(fields[0], csv_path, line_no);
    const auto t = parse_number<std::size_t>(fields[1], csv_path, line_no);
    if (seg != rows / t_len || t != rows % t_len) {
      throw IoError(csv_path.string() + ":" + std::to_string(line_no) +
                    ": rows must be sorted by (segment_id, t) with no gaps");
    }
    if (seg >= n) throw IoError(csv_path.string() + ": more rows than num_segments * window_len");
    Segment& s = set.segments[seg];
    for (std::size_t c = 0; c < d; ++c) s.values(t, c) = parse_number<double>(fields[2 + c], csv_path, line_no);
    const int label = parse_number<int>(fields[d + 2], csv_path, line_no);
    if (t == 0) {
      s.label = label;
    } else if (label != s.label) {
      throw IoError(csv_path.string() + ":" + std::to_string(line_no) + ": label changes within a segment");
    }
    ++rows;
  }
  if (rows != n * t_len) {
    throw IoError(csv_path.string() + ": found " + std::to_string(rows) + " rows, expected " +
                  std::to_string(n * t_len));
  }
  if (set.config.window_length() != t_len) {
    // meta.json carries an explicit window_len; keep the duration consistent with it.
    set.config.window_duration = static_cast<double>(t_len) / set.config.sampling_rate;
    set.config.window_step = set.config.window_duration / 2.0;
  }
  try {
    set.validate();
  } catch (const ConfigError& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  return set;
}

}  // namespace seqcluster::data
