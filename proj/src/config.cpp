#include "seqcluster/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "seqcluster/error.hpp"

namespace seqcluster {

using nlohmann::json;

data::SynthSpec SynthBlock::spec() const {
  data::SynthSpec s = data::SynthSpec::standard(num_clusters, num_channels, window_length, segments_per_regime,
                                                noise_sigma);
  if (max_offset) s.max_offset = *max_offset;
  return s;
}

model::ModelConfig ModelBlock::resolve(std::size_t input_dim) const {
  model::ModelConfig c;
  c.input_dim = input_dim;
  c.hidden = hidden;
  c.layers = layers;
  c.embedding_dim = embedding_dim == 0 ? model::ModelConfig::default_embedding_dim(input_dim) : embedding_dim;
  c.validate();
  return c;
}

std::vector<cah::InitMethod> RefineBlock::methods() const {
  if (init == "both") return {cah::InitMethod::kmeans, cah::InitMethod::ward};
  try {
    return {cah::parse_init_method(init)};
  } catch (const ConfigError&) {
    throw ConfigError("refine.init: expected kmeans, ward or both, got '" + init + "'");
  }
}

cah::RefineConfig RunConfig::refine_config(cah::InitMethod method) const {
  cah::RefineConfig r;
  r.gamma = refine.gamma;
  r.stop_threshold = refine.stop_threshold;
  r.max_epochs = refine.max_epochs;
  r.init_method = method;
  r.train = train;
  return r;
}

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

void check_members(const std::vector<std::string>& values, const std::set<std::string>& allowed,
                   const std::string& field) {
  for (const auto& v : values) require(allowed.count(v) > 0, field, "unknown entry '" + v + "'");
}

}  // namespace

void RunConfig::validate() const {
  require(dataset.format == "canonical" || dataset.format == "ucihar", "dataset.format",
          "expected canonical or ucihar, got '" + dataset.format + "'");
  require(synth.num_clusters >= 2, "synth.num_clusters", "must be at least 2");
  require(synth.num_channels > 0, "synth.num_channels", "must be positive");
  require(synth.window_length >= 2 && synth.window_length % 2 == 0, "synth.window_length", "must be even and >= 2");
  require(synth.segments_per_regime > 0, "synth.segments_per_regime", "must be positive");
  require(synth.noise_sigma >= 0.0, "synth.noise_sigma", "must be non-negative");
  require(model.hidden > 0, "model.hidden", "must be positive");
  require(model.layers > 0, "model.layers", "must be positive");
  require(train.epochs > 0, "train.epochs", "must be positive");
  require(train.batch_size > 0, "train.batch_size", "must be positive");
  require(train.schedule.initial >= 0.0, "train.lr", "must be non-negative");
  require(train.schedule.decay_factor > 0.0, "train.decay_factor", "must be positive");
  require(refine.gamma >= 0.0 && refine.gamma <= 1.0, "refine.gamma", "must lie in [0, 1]");
  require(refine.stop_threshold > 0.0 && refine.stop_threshold < 1.0, "refine.stop_threshold", "must lie in (0, 1)");
  require(refine.max_epochs > 0, "refine.max_epochs", "must be positive");
  (void)refine.methods();
  check_members(eval.splits, {"train", "test"}, "eval.splits");
  check_members(eval.spaces, {"raw", "embedding", "end-to-end"}, "eval.spaces");
  check_members(eval.methods, {"kmeans", "ac-average", "ac-complete", "ac-ward"}, "eval.methods");
  require(eval.nmi == "arithmetic" || eval.nmi == "geometric", "eval.nmi", "expected arithmetic or geometric");
  require(threads > 0, "threads", "must be positive");
  require(simd == "auto" || simd == "scalar" || simd == "avx2", "simd", "expected auto, scalar or avx2");
}

namespace {

// Reads known keys from an object, rejecting anything else.
class Reader {
 public:
  Reader(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError(name("") + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name(key) + ": wrong type (" + std::string(obj_.at(key).type_name()) + ")");
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!obj_.contains(key) || obj_.at(key).is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) throw ConfigError(name(k) + ": unknown field");
    }
  }

  std::string name(const std::string& key) const {
    if (prefix_.empty()) return key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

// Sizes must be non-negative integers; JSON negative numbers would wrap.
void reject_negative(const json& j, const std::string& path) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) reject_negative(v, path.empty() ? k : path + "." + k);
  } else if (j.is_number_integer() && j.get<long long>() < 0) {
    throw ConfigError(path + ": must be non-negative");
  }
}

}  // namespace

RunConfig parse_config(const std::string& text, RunConfig cfg) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_negative(root, "");
  Reader top(root, "");
  if (const json* j = top.child("dataset")) {
    Reader r(*j, "dataset");
    r.get("format", cfg.dataset.format);
    r.get("path", cfg.dataset.path);
    r.get("test_path", cfg.dataset.test_path);
    r.get("num_clusters", cfg.dataset.num_clusters);
    r.finish();
  }
  if (const json* j = top.child("synth")) {
    Reader r(*j, "synth");
    r.get("num_clusters", cfg.synth.num_clusters);
    r.get("num_channels", cfg.synth.num_channels);
    r.get("window_length", cfg.synth.window_length);
    r.get("segments_per_regime", cfg.synth.segments_per_regime);
    r.get("noise_sigma", cfg.synth.noise_sigma);
    r.get("max_offset", cfg.synth.max_offset);
    r.finish();
  }
  if (const json* j = top.child("model")) {
    Reader r(*j, "model");
    r.get("hidden", cfg.model.hidden);
    r.get("layers", cfg.model.layers);
    r.get("embedding_dim", cfg.model.embedding_dim);
    r.finish();
  }
  if (const json* j = top.child("train")) {
    Reader r(*j, "train");
    r.get("epochs", cfg.train.epochs);
    r.get("batch_size", cfg.train.batch_size);
    r.get("lr", cfg.train.schedule.initial);
    r.get("decay_epoch", cfg.train.schedule.decay_epoch);
    r.get("decay_factor", cfg.train.schedule.decay_factor);
    r.get("beta1", cfg.train.adam.beta1);
    r.get("beta2", cfg.train.adam.beta2);
    r.get("eps", cfg.train.adam.eps);
    r.finish();
  }
  if (const json* j = top.child("refine")) {
    Reader r(*j, "refine");
    r.get("gamma", cfg.refine.gamma);
    r.get("stop_threshold", cfg.refine.stop_threshold);
    r.get("max_epochs", cfg.refine.max_epochs);
    r.get("init", cfg.refine.init);
    r.finish();
  }
  if (const json* j = top.child("eval")) {
    Reader r(*j, "eval");
    r.get("splits", cfg.eval.splits);
    r.get("spaces", cfg.eval.spaces);
    r.get("methods", cfg.eval.methods);
    r.get("nmi", cfg.eval.nmi);
    r.finish();
  }
  top.get("seed", cfg.seed);
  top.get("threads", cfg.threads);
  top.get("output_dir", cfg.output_dir);
  top.get("simd", cfg.simd);
  top.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["dataset"] = {{"format", c.dataset.format},
                  {"path", c.dataset.path},
                  {"test_path", c.dataset.test_path},
                  {"num_clusters", c.dataset.num_clusters}};
  j["synth"] = {{"num_clusters", c.synth.num_clusters},
                {"num_channels", c.synth.num_channels},
                {"window_length", c.synth.window_length},
                {"segments_per_regime", c.synth.segments_per_regime},
                {"noise_sigma", c.synth.noise_sigma},
                {"max_offset", c.synth.spec().max_offset}};
  j["model"] = {{"hidden", c.model.hidden}, {"layers", c.model.layers}, {"embedding_dim", c.model.embedding_dim}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.schedule.initial},
                {"decay_epoch", c.train.schedule.decay_epoch},
                {"decay_factor", c.train.schedule.decay_factor},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"eps", c.train.adam.eps}};
  j["refine"] = {{"gamma", c.refine.gamma},
                 {"stop_threshold", c.refine.stop_threshold},
                 {"max_epochs", c.refine.max_epochs},
                 {"init", c.refine.init}};
  j["eval"] = {{"splits", c.eval.splits}, {"spaces", c.eval.spaces}, {"methods", c.eval.methods}, {"nmi", c.eval.nmi}};
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  j["simd"] = c.simd;
  return j.dump(2) + "\n";
}

}  // namespace seqcluster
