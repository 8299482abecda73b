#include "seqcluster/cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "seqcluster/baselines.hpp"
#include "seqcluster/cah.hpp"
#include "seqcluster/checkpoint.hpp"
#include "seqcluster/config.hpp"
#include "seqcluster/error.hpp"
#include "seqcluster/kernels.hpp"
#include "seqcluster/metrics.hpp"

namespace seqcluster {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> output_dir;
  std::optional<std::string> simd;
  std::optional<std::string> dataset;
  std::optional<std::string> test_dataset;
  std::optional<std::string> ucihar;
  // pretrain
  std::optional<std::size_t> epochs;
  // refine
  std::optional<std::string> init;
  std::optional<std::size_t> max_epochs;
  // refine / evaluate / export
  std::string checkpoint;
  std::vector<std::string> refined;
  bool verbose = false;
  std::string split = "train";
  std::string out_file;
  // synth
  std::optional<std::size_t> synth_k, synth_d, synth_t, synth_per;
  std::optional<double> synth_sigma;
};

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  write_text(dir / "config.json", config_to_json(cfg));
  return dir;
}

RunConfig resolve_config(const Flags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = load_config(f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  if (f.output_dir) cfg.output_dir = *f.output_dir;
  if (f.simd) cfg.simd = *f.simd;
  if (f.dataset) {
    cfg.dataset.format = "canonical";
    cfg.dataset.path = *f.dataset;
  }
  if (f.test_dataset) cfg.dataset.test_path = *f.test_dataset;
  if (f.ucihar) {
    cfg.dataset.format = "ucihar";
    cfg.dataset.path = *f.ucihar;
  }
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.init) cfg.refine.init = *f.init;
  if (f.max_epochs) cfg.refine.max_epochs = *f.max_epochs;
  if (f.synth_k) cfg.synth.num_clusters = *f.synth_k;
  if (f.synth_d) cfg.synth.num_channels = *f.synth_d;
  if (f.synth_t) cfg.synth.window_length = *f.synth_t;
  if (f.synth_per) cfg.synth.segments_per_regime = *f.synth_per;
  if (f.synth_sigma) cfg.synth.noise_sigma = *f.synth_sigma;
  cfg.validate();

  kernels::set_num_threads(cfg.threads);
  if (cfg.simd == "scalar") kernels::select_isa(kernels::Isa::scalar);
  if (cfg.simd == "avx2") kernels::select_isa(kernels::Isa::avx2);
  return cfg;
}

struct Splits {
  data::SegmentSet train;
  std::optional<data::SegmentSet> test;
};

data::SegmentSet read_dir(const std::string& dir, const char* field) {
  if (dir.empty()) throw ConfigError(std::string(field) + ": required (path to a segment directory)");
  if (!fs::is_directory(dir)) throw ConfigError(std::string(field) + ": directory '" + dir + "' does not exist");
  return data::read_canonical(dir);
}

Splits load_splits(const RunConfig& cfg) {
  Splits s;
  if (cfg.dataset.format == "ucihar") {
    if (cfg.dataset.path.empty()) throw ConfigError("dataset.path: required (UCI HAR archive root)");
    if (!fs::is_directory(cfg.dataset.path)) {
      throw ConfigError("dataset.path: directory '" + cfg.dataset.path + "' does not exist");
    }
    auto [train, test] = data::import_ucihar(cfg.dataset.path);
    s.train = std::move(train);
    s.test = std::move(test);
  } else {
    s.train = read_dir(cfg.dataset.path, "dataset.path");
    if (!cfg.dataset.test_path.empty()) s.test = read_dir(cfg.dataset.test_path, "dataset.test_path");
  }
  if (cfg.dataset.num_clusters > 0) {
    s.train.config.num_clusters = cfg.dataset.num_clusters;
    if (s.test) s.test->config.num_clusters = cfg.dataset.num_clusters;
  }
  if (s.train.config.num_clusters < 2) throw ConfigError("dataset.num_clusters: must be at least 2");
  if (s.test && s.test->channels() != s.train.channels()) {
    throw ConfigError("dataset.test_path: channel count differs from the train split");
  }
  return s;
}

Checkpoint load_matching(const fs::path& path, const RunConfig& cfg, const data::SegmentSet& train) {
  Checkpoint ck = load_checkpoint(path);
  const model::ModelConfig& mc = ck.params.config();
  if (mc.input_dim != train.channels()) {
    throw ConfigError("checkpoint " + path.string() + " expects d=" + std::to_string(mc.input_dim) +
                      " channels but the dataset has " + std::to_string(train.channels()));
  }
  if (cfg.model.embedding_dim != 0 && cfg.model.embedding_dim != mc.embedding_dim) {
    throw ConfigError("model.embedding_dim: config says " + std::to_string(cfg.model.embedding_dim) +
                      " but checkpoint " + path.string() + " has z=" + std::to_string(mc.embedding_dim));
  }
  if (!ck.normalization) throw ConfigError("checkpoint " + path.string() + " carries no normalization statistics");
  return ck;
}

std::vector<int> known_labels(const data::SegmentSet& set) {
  return set.has_labels() ? set.labels() : std::vector<int>{};
}

fs::path default_path(const std::string& flag, const fs::path& dir, const char* name) {
  return flag.empty() ? dir / name : fs::path(flag);
}

// ---- commands ----------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const data::SynthSpec spec = cfg.synth.spec();
  const data::SegmentSet set = data::synth_generate(spec, cfg.seed);
  const fs::path dir = prepare_output(cfg);
  data::write_canonical(set, dir);
  out << "wrote " << set.size() << " segments (k=" << spec.regimes.size() << ", d=" << spec.num_channels
      << ", T=" << spec.window_length << ") to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_pretrain(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Splits splits = load_splits(cfg);
  const data::NormalizationStats stats = data::fit_normalization(splits.train);
  const data::SegmentSet train = data::apply_normalization(splits.train, stats);
  const model::ModelConfig mc = cfg.model.resolve(train.channels());
  const fs::path dir = prepare_output(cfg);

  std::ostringstream history;
  history << "epoch,loss,learning_rate\n";
  const auto result = model::pretrain(train, mc, cfg.train, cfg.seed, [&](const model::EpochStats& e) {
    history << e.epoch + 1 << ',' << num(e.loss) << ',' << num(cfg.train.schedule.at(e.epoch)) << '\n';
    err << "[pretrain] epoch " << e.epoch + 1 << '/' << cfg.train.epochs << " loss " << e.loss << '\n';
  });
  write_text(dir / "pretrain_history.csv", history.str());

  Checkpoint ck;
  ck.stage = "pretrain";
  ck.seed = cfg.seed;
  ck.config_json = config_to_json(cfg);
  ck.normalization = stats;
  ck.params = result.params;
  save_checkpoint(dir / "pretrain.ckpt", ck);
  out << "pretrained " << model::parameter_count(mc) << " parameters on " << train.size() << " segments; final loss "
      << result.loss_history.back() << '\n';
  return kExitOk;
}

int cmd_refine(const RunConfig& cfg, const Flags& f, std::ostream& out, std::ostream& err) {
  Splits splits = load_splits(cfg);
  const fs::path dir = prepare_output(cfg);
  const Checkpoint pre = load_matching(default_path(f.checkpoint, dir, "pretrain.ckpt"), cfg, splits.train);
  const data::SegmentSet train = data::apply_normalization(splits.train, *pre.normalization);
  const auto tasks = data::build_tasks(train);
  const std::vector<int> labels = known_labels(train);
  const std::size_t k = train.config.num_clusters;
  const auto methods = cfg.refine.methods();
  const bool both = methods.size() > 1;

  std::ostringstream history;
  history << "init_method,epoch,L_total,L_C,L_AE,assignment_change_fraction";
  if (!labels.empty()) history << ",train_ACC,train_NMI";
  history << '\n';

  for (cah::InitMethod method : methods) {
    const std::string name = cah::init_method_name(method);
    const std::string suffix = both ? "_" + name : "";
    model::ModelParams params = pre.params;
    cah::RefineResult res;
    try {
      res = cah::refine(params, tasks, labels, k, cfg.refine_config(method), cfg.seed, [&](const cah::RefineEpoch& e) {
        history << name << ',' << e.epoch + 1 << ',' << num(e.total) << ',' << num(e.clustering) << ','
                << num(e.autoencoder) << ',' << num(e.assignment_change);
        if (e.acc) history << ',' << num(*e.acc) << ',' << num(*e.nmi);
        history << '\n';
        err << "[refine/" << name << "] epoch " << e.epoch + 1 << " L " << e.total << " changed "
            << e.assignment_change;
        if (e.acc) err << " ACC " << *e.acc << " NMI " << *e.nmi;
        err << '\n';
      });
    } catch (const NumericError&) {
      Checkpoint dump;
      dump.stage = "refine-failed";
      dump.seed = cfg.seed;
      dump.init_method = name;
      dump.config_json = config_to_json(cfg);
      dump.normalization = pre.normalization;
      dump.params = params;
      save_checkpoint(dir / ("refine_failed" + suffix + ".ckpt"), dump);
      write_text(dir / "refine_history.csv", history.str());
      err << "state written to " << (dir / ("refine_failed" + suffix + ".ckpt")).string() << '\n';
      throw;
    }

    Checkpoint ck;
    ck.stage = "refine";
    ck.seed = cfg.seed;
    ck.init_method = name;
    ck.config_json = config_to_json(cfg);
    ck.normalization = pre.normalization;
    ck.params = params;
    ck.centroids = res.state.centroids;
    save_checkpoint(dir / ("refined" + suffix + ".ckpt"), ck);

    std::ostringstream assign;
    assign << "segment_id,hard_label";
    for (std::size_t j = 0; j < k; ++j) assign << ",q_" << j;
    assign << '\n';
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      assign << i << ',' << res.state.hard_labels[i];
      for (std::size_t j = 0; j < k; ++j) assign << ',' << num(res.state.q(i, j));
      assign << '\n';
    }
    write_text(dir / ("assignments" + suffix + ".csv"), assign.str());
    out << "refine (" << name << " init): " << res.history.size() << " epochs, "
        << (res.converged ? "converged" : "stopped at max_epochs");
    if (!res.history.empty() && res.history.back().acc) {
      out << ", train ACC " << *res.history.back().acc << " NMI " << *res.history.back().nmi;
    }
    out << '\n';
  }
  write_text(dir / "refine_history.csv", history.str());
  return kExitOk;
}

std::string method_label(const std::string& m) {
  if (m == "kmeans") return "k-means";
  if (m == "ac-average") return "AC-Average";
  if (m == "ac-complete") return "AC-Complete";
  return "AC-Ward";
}

std::vector<int> run_baseline(const std::string& m, const Tensor& x, std::size_t k, std::uint64_t seed) {
  if (m == "kmeans") return baselines::kmeans(x, k, derive_seed(seed, 20)).labels;
  const std::string linkage = m.substr(3);
  return baselines::agglomerative(x, k, baselines::parse_linkage(linkage)).labels;
}

int cmd_evaluate(const RunConfig& cfg, const Flags& f, std::ostream& out, std::ostream& err) {
  Splits splits = load_splits(cfg);
  const fs::path dir = prepare_output(cfg);
  auto wants = [](const std::vector<std::string>& v, const char* s) { return std::find(v.begin(), v.end(), s) != v.end(); };
  const bool need_embedding = wants(cfg.eval.spaces, "embedding");
  const bool need_e2e = wants(cfg.eval.spaces, "end-to-end");

  std::optional<Checkpoint> pre;
  const fs::path pre_path = default_path(f.checkpoint, dir, "pretrain.ckpt");
  if (need_embedding || fs::exists(pre_path)) pre = load_matching(pre_path, cfg, splits.train);

  std::vector<std::pair<std::string, Checkpoint>> refined;
  if (need_e2e) {
    std::vector<fs::path> paths(f.refined.begin(), f.refined.end());
    if (paths.empty()) {
      for (const char* name : {"refined.ckpt", "refined_kmeans.ckpt", "refined_ward.ckpt"})
        if (fs::exists(dir / name)) paths.push_back(dir / name);
    }
    if (paths.empty()) throw ConfigError("eval.spaces: end-to-end requested but no refined checkpoint found in " +
                                         dir.string() + " (run refine or pass --refined)");
    for (const fs::path& p : paths) {
      Checkpoint ck = load_matching(p, cfg, splits.train);
      if (!ck.centroids) throw ConfigError("checkpoint " + p.string() + " has no cluster centroids");
      const std::string init = ck.init_method == "kmeans" ? "k-means" : (ck.init_method == "ward" ? "Ward" : ck.init_method);
      refined.emplace_back("CAH (" + init + " init)", std::move(ck));
    }
  }

  const data::NormalizationStats stats = pre ? *pre->normalization : data::fit_normalization(splits.train);
  const metrics::NmiNorm norm = cfg.eval.nmi == "geometric" ? metrics::NmiNorm::geometric : metrics::NmiNorm::arithmetic;
  const std::size_t k = splits.train.config.num_clusters;
  std::vector<metrics::EvalReport> rows;
  bool warned = false;

  for (const std::string& split : cfg.eval.splits) {
    const data::SegmentSet* raw_set = split == "train" ? &splits.train : (splits.test ? &*splits.test : nullptr);
    if (!raw_set) {
      err << "warning: no test split configured (dataset.test_path); skipping test rows\n";
      continue;
    }
    const data::SegmentSet set = data::apply_normalization(*raw_set, stats);
    const std::vector<int> truth = known_labels(set);
    if (truth.empty() && !warned) {
      err << "warning: ground-truth labels missing for the " << split << " split; ACC/NMI reported as n/a\n";
      warned = true;
    }
    auto report = [&](const std::string& method, const std::string& space, const std::vector<int>& pred) {
      metrics::EvalReport r{method, split, space, std::nullopt, std::nullopt, pred.size(), k, std::nullopt};
      if (!truth.empty()) {
        r.acc = metrics::clustering_accuracy(pred, truth, k);
        r.nmi = metrics::nmi(pred, truth, norm);
        if (f.verbose) r.nmi_geometric = metrics::nmi(pred, truth, metrics::NmiNorm::geometric);
      }
      rows.push_back(r);
      err << "[evaluate] " << split << ' ' << space << ' ' << method << " done\n";
    };
    if (wants(cfg.eval.spaces, "raw")) {
      const Tensor x = data::flatten_windows(set);
      for (const auto& m : cfg.eval.methods) report(method_label(m), "raw", run_baseline(m, x, k, cfg.seed));
    }
    const auto tasks = data::build_tasks(set);
    if (need_embedding) {
      const Tensor z = model::encode_all(pre->params, tasks);
      for (const auto& m : cfg.eval.methods) report(method_label(m), "embedding", run_baseline(m, z, k, cfg.seed));
    }
    for (auto& [name, ck] : refined) {
      report(name, "end-to-end", cah::assign(ck.params, tasks, *ck.centroids).hard_labels);
    }
  }
  write_text(dir / "eval.csv", metrics::reports_csv(rows));
  const std::string table = metrics::reports_table(rows);
  write_text(dir / "eval.txt", table);
  out << table;
  return kExitOk;
}

int cmd_export(const RunConfig& cfg, const Flags& f, std::ostream& out) {
  Splits splits = load_splits(cfg);
  const fs::path dir = prepare_output(cfg);
  const Checkpoint ck = load_matching(default_path(f.checkpoint, dir, "pretrain.ckpt"), cfg, splits.train);
  const data::SegmentSet* raw_set = &splits.train;
  if (f.split == "test") {
    if (!splits.test) throw ConfigError("dataset.test_path: required for --split test");
    raw_set = &*splits.test;
  } else if (f.split != "train") {
    throw ConfigError("--split: expected train or test, got '" + f.split + "'");
  }
  const data::SegmentSet set = data::apply_normalization(*raw_set, *ck.normalization);
  model::ModelParams params = ck.params;
  const Tensor z = model::encode_all(params, data::build_tasks(set));
  std::ostringstream csv;
  csv << "segment_id";
  for (std::size_t j = 0; j < z.cols(); ++j) csv << ",z_" << j;
  csv << ",label\n";
  for (std::size_t i = 0; i < z.rows(); ++i) {
    csv << i;
    for (std::size_t j = 0; j < z.cols(); ++j) csv << ',' << num(z(i, j));
    csv << ',' << set.segments[i].label << '\n';
  }
  const fs::path target =
      f.out_file.empty() ? dir / (f.split == "test" ? "embeddings_test.csv" : "embeddings.csv") : fs::path(f.out_file);
  write_text(target, csv.str());
  out << "wrote " << z.rows() << " embeddings of dimension " << z.cols() << " to " << target.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep clustering of sensor segments: recurrent autoencoder pretraining and cluster hardening",
               "seqcluster"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("-c,--config", f.config_path, "JSON run configuration (flags override file values)");
  app.add_option("--seed", f.seed, "Run seed");
  app.add_option("--threads", f.threads, "Worker threads (1 = determinism reference)");
  app.add_option("--output-dir", f.output_dir, "Directory for all outputs");
  app.add_option("--simd", f.simd, "Kernel set: auto, scalar or avx2");
  app.add_option("--dataset", f.dataset, "Canonical segment directory (train split)");
  app.add_option("--test-dataset", f.test_dataset, "Canonical segment directory (test split)");
  app.add_option("--ucihar", f.ucihar, "Extracted UCI HAR archive root");

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic multi-regime segment set");
  synth->add_option("--k", f.synth_k, "Number of regimes");
  synth->add_option("--channels", f.synth_d, "Channels per sample");
  synth->add_option("--window", f.synth_t, "Window length T (even)");
  synth->add_option("--per-regime", f.synth_per, "Segments per regime");
  synth->add_option("--sigma", f.synth_sigma, "Gaussian noise standard deviation");

  CLI::App* pretrain = app.add_subcommand("pretrain", "Pretrain the multi-task autoencoder");
  pretrain->add_option("--epochs", f.epochs, "Override train.epochs");

  CLI::App* refine = app.add_subcommand("refine", "Refine with the clustering objective");
  refine->add_option("--init", f.init, "Centroid initialization: kmeans, ward or both");
  refine->add_option("--checkpoint", f.checkpoint, "Pretrained checkpoint (default <output-dir>/pretrain.ckpt)");
  refine->add_option("--max-epochs", f.max_epochs, "Override refine.max_epochs");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Baselines and end-to-end ACC/NMI table");
  evaluate->add_option("--checkpoint", f.checkpoint, "Pretrained checkpoint (default <output-dir>/pretrain.ckpt)");
  evaluate->add_option("--refined", f.refined, "Refined checkpoint(s) (default: refined*.ckpt in <output-dir>)");
  evaluate->add_flag("--verbose", f.verbose, "Also report geometric-mean NMI");

  CLI::App* exporter = app.add_subcommand("export-embeddings", "Write per-segment embeddings as CSV");
  exporter->add_option("--checkpoint", f.checkpoint, "Checkpoint to encode with (default <output-dir>/pretrain.ckpt)");
  exporter->add_option("--split", f.split, "train or test");
  exporter->add_option("--out", f.out_file, "Output CSV (default <output-dir>/embeddings.csv)");
  for (CLI::App* sub : {synth, pretrain, refine, evaluate, exporter}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const RunConfig cfg = resolve_config(f);
    if (synth->parsed()) return cmd_synth(cfg, out);
    if (pretrain->parsed()) return cmd_pretrain(cfg, out, err);
    if (refine->parsed()) return cmd_refine(cfg, f, out, err);
    if (evaluate->parsed()) return cmd_evaluate(cfg, f, out, err);
    return cmd_export(cfg, f, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace seqcluster
