#pragma once
// Run configuration. Precedence: built-in defaults < config file < flags.
// The file is JSON; every key is optional and unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "seqcluster/cah.hpp"
#include "seqcluster/datasets.hpp"
#include "seqcluster/model.hpp"

namespace seqcluster {

struct DatasetBlock {
  std::string format = "canonical";  // canonical | ucihar
  std::string path;                  // canonical train directory or UCI HAR root
  std::string test_path;             // optional canonical test directory
  std::size_t num_clusters = 0;      // 0: take it from the dataset
};

struct SynthBlock {
  std::size_t num_clusters = 3;
  std::size_t num_channels = 4;
  std::size_t window_length = 32;
  std::size_t segments_per_regime = 100;
  double noise_sigma = 0.05;
  std::optional<double> max_offset;  // default window_length / 8
  data::SynthSpec spec() const;
};

struct ModelBlock {
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t embedding_dim = 0;  // 0: 64 for d < 16, else 256
  model::ModelConfig resolve(std::size_t input_dim) const;
};

struct RefineBlock {
  double gamma = 0.1;
  double stop_threshold = 0.001;
  std::size_t max_epochs = 200;
  std::string init = "ward";  // kmeans | ward | both
  std::vector<cah::InitMethod> methods() const;
};

struct EvalBlock {
  std::vector<std::string> splits = {"train", "test"};
  std::vector<std::string> spaces = {"raw", "embedding", "end-to-end"};
  std::vector<std::string> methods = {"kmeans", "ac-average", "ac-complete", "ac-ward"};
  std::string nmi = "arithmetic";  // arithmetic | geometric
};

struct RunConfig {
  DatasetBlock dataset;
  SynthBlock synth;
  ModelBlock model;
  model::TrainConfig train;
  RefineBlock refine;
  EvalBlock eval;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string output_dir = "runs";
  std::string simd = "auto";  // auto | scalar | avx2

  cah::RefineConfig refine_config(cah::InitMethod method) const;
  void validate() const;
};

/// ConfigError naming the offending field on unknown keys or wrong types.
RunConfig parse_config(const std::string& json_text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// Full resolved configuration as pretty-printed JSON (replayable).
std::string config_to_json(const RunConfig& cfg);

}  // namespace seqcluster
