#include "seqcluster/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "json.hpp"
#include "seqcluster/error.hpp"

namespace seqcluster {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

using nlohmann::json;

namespace {

json model_json(const model::ModelConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden}, {"layers", c.layers}, {"embedding_dim", c.embedding_dim}};
}

model::ModelConfig model_from_json(const json& j) {
  model::ModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json header;
  header["stage"] = ckpt.stage;
  header["seed"] = ckpt.seed;
  header["decoder_scheme"] = kDecoderScheme;
  header["init_method"] = ckpt.init_method;
  header["model"] = model_json(ckpt.params.config());
  if (ckpt.normalization) {
    header["normalization"] = {{"mean", ckpt.normalization->mean}, {"std", ckpt.normalization->stddev}};
  }
  header["config"] = json::parse(ckpt.config_json);

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const ad::Parameter* p : ckpt.params.parameters()) tensors.emplace_back(p->name, &p->value);
  if (ckpt.centroids) tensors.emplace_back("cluster.centroids", &*ckpt.centroids);
  json table = json::array();
  for (const auto& [name, t] : tensors) table.push_back({{"name", name}, {"shape", t->shape()}});
  header["tensors"] = table;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  for (const auto& [name, t] : tensors) {
    out.write(reinterpret_cast<const char*>(t->ptr()), static_cast<std::streamsize>(t->size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) {
    throw ConfigError("checkpoint " + path.string() + " has version tag '" + magic.substr(0, 40) + "', expected " +
                      kCheckpointMagic);
  }
  if (!std::getline(in, header_line)) throw IoError("checkpoint " + path.string() + " is missing its header");
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw IoError("checkpoint " + path.string() + " header is not valid JSON: " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.stage = header.at("stage").get<std::string>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.init_method = header.value("init_method", "");
    if (header.value("decoder_scheme", "") != kDecoderScheme) {
      throw ConfigError("checkpoint " + path.string() + " uses an unsupported decoder scheme");
    }
    ckpt.config_json = header.at("config").dump();
    if (header.contains("normalization")) {
      ckpt.normalization = data::NormalizationStats{header["normalization"].at("mean").get<std::vector<double>>(),
                                                    header["normalization"].at("std").get<std::vector<double>>()};
    }
    ckpt.params = model::ModelParams::initialize(model_from_json(header.at("model")), 0);
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + " header is incomplete: " + e.what());
  }

  std::vector<ad::Parameter*> params = ckpt.params.parameters();
  const json& table = header.at("tensors");
  if (table.size() != params.size() && table.size() != params.size() + 1) {
    throw ConfigError("checkpoint " + path.string() + " tensor table does not match its model config");
  }
  auto read_into = [&](Tensor& t) {
    in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(t.size() * sizeof(double))) {
      throw IoError("checkpoint " + path.string() + " is truncated");
    }
  };
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::string name = table[i].at("name").get<std::string>();
    const Shape shape = table[i].at("shape").get<Shape>();
    if (i < params.size()) {
      if (name != params[i]->name || shape != params[i]->value.shape()) {
        throw ConfigError("checkpoint tensor " + name + " " + shape_string(shape) + " does not match expected " +
                          params[i]->name + " " + shape_string(params[i]->value.shape()));
      }
      read_into(params[i]->value);
    } else {
      if (name != "cluster.centroids" || shape.size() != 2 || shape[1] != ckpt.params.config().embedding_dim) {
        throw ConfigError("checkpoint has unexpected trailing tensor " + name);
      }
      Tensor c(shape);
      read_into(c);
      ckpt.centroids = std::move(c);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError("checkpoint " + path.string() + " has trailing bytes");
  }
  return ckpt;
}

}  // namespace seqcluster
