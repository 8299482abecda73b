#pragma once
// Versioned checkpoint file.
//
//   line 1   SEQCLUSTER-CKPT-v1
//   line 2   one-line JSON header: stage, seed, decoder scheme, model config,
//            normalization, config echo and the tensor table (name, shape)
//   rest     tensor payloads in table order, little-endian f64

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "seqcluster/datasets.hpp"
#include "seqcluster/model.hpp"

namespace seqcluster {

inline constexpr const char* kCheckpointMagic = "SEQCLUSTER-CKPT-v1";
inline constexpr const char* kDecoderScheme = "autoregressive";

struct Checkpoint {
  std::string stage;        // "pretrain" or "refine"
  std::uint64_t seed = 0;
  std::string init_method;  // empty for pretrain
  std::string config_json = "{}";
  std::optional<data::NormalizationStats> normalization;
  model::ModelParams params;
  std::optional<Tensor> centroids;  // k x z after refinement
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// IoError if unreadable or truncated, ConfigError on a wrong magic line or
/// a tensor table that does not match the stored model config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace seqcluster
