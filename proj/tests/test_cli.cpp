#include <algorithm>
#include <filesystem>
#include <map>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "seqcluster/checkpoint.hpp"
#include "seqcluster/cli.hpp"
#include "seqcluster/config.hpp"
#include "seqcluster/error.hpp"
#include "test_util.hpp"

using namespace seqcluster;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// Small synthetic dataset plus a config that trains quickly.
struct Workspace {
  test_util::TempDir tmp;
  fs::path data = tmp.path() / "data";
  fs::path out = tmp.path() / "out";
  fs::path config = tmp.path() / "run.json";

  Workspace() {
    REQUIRE(cli({"synth", "--seed", "2", "--per-regime", "12", "--window", "16", "--output-dir", data.string()}).code == 0);
    write(config, R"({"dataset": {"path": ")" + data.string() + R"("},
      "model": {"hidden": 8, "layers": 1, "embedding_dim": 4},
      "train": {"epochs": 2, "batch_size": 12},
      "refine": {"max_epochs": 2},
      "output_dir": ")" + out.string() + R"(", "seed": 5, "threads": 1})");
  }
  std::vector<std::string> with_config(std::vector<std::string> args) const {
    args.push_back("-c");
    args.push_back(config.string());
    return args;
  }
};

}  // namespace

TEST_CASE("checkpoint round trip and corruption handling") {
  test_util::TempDir tmp;
  model::ModelConfig mc;
  mc.input_dim = 3;
  mc.hidden = 4;
  mc.layers = 2;
  mc.embedding_dim = 2;
  Checkpoint ck;
  ck.stage = "refine";
  ck.seed = 99;
  ck.init_method = "ward";
  ck.config_json = R"({"seed": 99})";
  ck.normalization = data::NormalizationStats{{0.5, 1.0, -2.0}, {1.0, 2.0, 3.0}};
  ck.params = model::ModelParams::initialize(mc, 3);
  ck.centroids = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const fs::path p = tmp.path() / "x.ckpt";
  save_checkpoint(p, ck);

  const Checkpoint back = load_checkpoint(p);
  CHECK(back.stage == "refine");
  CHECK(back.seed == 99);
  CHECK(back.init_method == "ward");
  CHECK(back.params.config() == mc);
  CHECK(back.normalization->stddev == ck.normalization->stddev);
  CHECK(*back.centroids == *ck.centroids);
  const auto a = ck.params.parameters();
  const auto b = back.params.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);

  const std::string bytes = test_util::read_bytes(p);
  CHECK(bytes.rfind("SEQCLUSTER-CKPT-v1\n", 0) == 0);
  write(tmp.path() / "stale.ckpt", "SEQCLUSTER-CKPT-v0" + bytes.substr(18));
  CHECK_THROWS_AS(load_checkpoint(tmp.path() / "stale.ckpt"), ConfigError);
  write(tmp.path() / "short.ckpt", bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_checkpoint(tmp.path() / "short.ckpt"), IoError);
  write(tmp.path() / "long.ckpt", bytes + "x");
  CHECK_THROWS_AS(load_checkpoint(tmp.path() / "long.ckpt"), IoError);
  CHECK_THROWS_AS(load_checkpoint(tmp.path() / "missing.ckpt"), IoError);
}

TEST_CASE("config parsing reports the offending field") {
  const RunConfig d = parse_config("{}");
  CHECK(d.model.hidden == 256);
  CHECK(d.train.epochs == 100);
  CHECK(d.train.batch_size == 256);
  CHECK(d.train.schedule.initial == 1e-3);
  CHECK(d.train.schedule.decay_epoch == 70);
  CHECK(d.refine.gamma == 0.1);
  CHECK(d.refine.stop_threshold == 0.001);
  CHECK(d.model.resolve(9).embedding_dim == 64);

  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(R"({"model": {"hiden": 3}})").find("model.hiden") != std::string::npos);
  CHECK(message(R"({"train": {"epochs": "ten"}})").find("train.epochs") != std::string::npos);
  CHECK(message(R"({"train": {"epochs": -1}})").find("train.epochs") != std::string::npos);
  CHECK(message(R"({"refine": {"gamma": 3}})").find("refine.gamma") != std::string::npos);
  CHECK(message(R"({"refine": {"init": "spectral"}})").find("refine.init") != std::string::npos);
  CHECK(message("{").find("JSON") != std::string::npos);

  const RunConfig echo = parse_config(config_to_json(d));
  CHECK(config_to_json(echo) == config_to_json(d));
}

TEST_CASE("usage and dataset errors exit with code 2") {
  test_util::TempDir tmp;
  const Run none = cli({"pretrain", "--output-dir", (tmp.path() / "o").string()});
  CHECK(none.code == kExitConfig);
  CHECK(none.err.find("dataset.path") != std::string::npos);

  const Run missing = cli({"pretrain", "--dataset", (tmp.path() / "nope").string(), "--output-dir",
                           (tmp.path() / "o").string()});
  CHECK(missing.code == kExitConfig);
  CHECK(missing.err.find("dataset.path") != std::string::npos);

  CHECK(cli({"frobnicate"}).code == kExitConfig);
  CHECK(cli({}).code == kExitConfig);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("synth output is deterministic and round-trips") {
  test_util::TempDir tmp;
  const fs::path a = tmp.path() / "a", b = tmp.path() / "b";
  REQUIRE(cli({"synth", "--seed", "7", "--output-dir", a.string()}).code == 0);
  REQUIRE(cli({"synth", "--seed", "7", "--output-dir", b.string()}).code == 0);
  CHECK(test_util::read_bytes(a / "segments.csv") == test_util::read_bytes(b / "segments.csv"));
  CHECK(test_util::read_bytes(a / "meta.json") == test_util::read_bytes(b / "meta.json"));
  CHECK(test_util::read_bytes(a / "meta.json").find("\"num_clusters\": 3") != std::string::npos);

  const data::SegmentSet loaded = data::read_canonical(a);
  const data::SegmentSet generated = data::synth_generate(data::SynthSpec::standard(3, 4, 32, 100, 0.05), 7);
  REQUIRE(loaded.size() == generated.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded.segments[i].values == generated.segments[i].values);
    CHECK(loaded.segments[i].label == generated.segments[i].label);
  }

  write(tmp.path() / "file", "x");
  CHECK(cli({"synth", "--output-dir", (tmp.path() / "file" / "sub").string()}).code == kExitIo);
}

TEST_CASE("pretrain, refine, evaluate and export through the command line") {
  Workspace ws;
  const Run pre = cli(ws.with_config({"pretrain", "--epochs", "1"}));
  REQUIRE(pre.code == 0);
  CHECK(count_lines(test_util::read_bytes(ws.out / "pretrain_history.csv")) == 2);
  CHECK(fs::exists(ws.out / "pretrain.ckpt"));
  CHECK(fs::exists(ws.out / "config.json"));

  const Run ref = cli(ws.with_config({"refine", "--init", "ward"}));
  REQUIRE(ref.code == 0);
  const std::string hist = test_util::read_bytes(ws.out / "refine_history.csv");
  CHECK(hist.rfind("init_method,epoch,L_total,L_C,L_AE,assignment_change_fraction,train_ACC,train_NMI\n", 0) == 0);
  CHECK(hist.find("\nward,1,") != std::string::npos);
  const std::string assign = test_util::read_bytes(ws.out / "assignments.csv");
  CHECK(assign.rfind("segment_id,hard_label,q_0,q_1,q_2\n", 0) == 0);
  CHECK(count_lines(assign) == 37);
  CHECK(load_checkpoint(ws.out / "refined.ckpt").centroids->shape() == Shape{3, 4});

  REQUIRE(cli(ws.with_config({"refine", "--init", "kmeans"})).code == 0);
  CHECK(test_util::read_bytes(ws.out / "refine_history.csv").find("\nkmeans,1,") != std::string::npos);

  const Run ev = cli(ws.with_config({"evaluate"}));
  REQUIRE(ev.code == 0);
  const std::string csv = test_util::read_bytes(ws.out / "eval.csv");
  for (const char* row : {"k-means,raw,train", "AC-Average,raw,train", "AC-Complete,embedding,train",
                          "AC-Ward,embedding,train", "CAH (k-means init),end-to-end,train"}) {
    CHECK(csv.find(row) != std::string::npos);
  }
  CHECK(ev.err.find("no test split") != std::string::npos);

  const Run ex = cli(ws.with_config({"export-embeddings"}));
  REQUIRE(ex.code == 0);
  const std::string e1 = test_util::read_bytes(ws.out / "embeddings.csv");
  CHECK(count_lines(e1) == 37);
  CHECK(e1.substr(0, e1.find('\n')) == "segment_id,z_0,z_1,z_2,z_3,label");
  REQUIRE(cli(ws.with_config({"export-embeddings"})).code == 0);
  CHECK(test_util::read_bytes(ws.out / "embeddings.csv") == e1);
}

TEST_CASE("checkpoint problems exit with code 2") {
  Workspace ws;
  REQUIRE(cli(ws.with_config({"pretrain"})).code == 0);
  const std::string bytes = test_util::read_bytes(ws.out / "pretrain.ckpt");
  write(ws.out / "stale.ckpt", "SEQCLUSTER-CKPT-v0" + bytes.substr(18));
  const Run stale = cli(ws.with_config({"refine", "--checkpoint", (ws.out / "stale.ckpt").string()}));
  CHECK(stale.code == kExitConfig);
  CHECK(stale.err.find("SEQCLUSTER-CKPT-v1") != std::string::npos);

  // checkpoint trained on 4 channels against a 2-channel dataset
  const fs::path other = ws.tmp.path() / "other";
  REQUIRE(cli({"synth", "--channels", "2", "--per-regime", "5", "--output-dir", other.string()}).code == 0);
  const Run mismatch = cli(ws.with_config({"refine", "--dataset", other.string(), "--checkpoint",
                                           (ws.out / "pretrain.ckpt").string()}));
  CHECK(mismatch.code == kExitConfig);

  const Run missing = cli(ws.with_config({"refine", "--checkpoint", (ws.out / "none.ckpt").string()}));
  CHECK(missing.code == kExitIo);
}

TEST_CASE("unlabeled data evaluates to n/a with a warning") {
  Workspace ws;
  data::SegmentSet set = data::read_canonical(ws.data);
  for (auto& s : set.segments) s.label = data::kUnknownLabel;
  const fs::path unl = ws.tmp.path() / "unlabeled";
  data::write_canonical(set, unl);
  REQUIRE(cli(ws.with_config({"pretrain", "--dataset", unl.string()})).code == 0);
  const Run ev = cli(ws.with_config({"evaluate", "--dataset", unl.string()}));
  // no refined checkpoint yet: the end-to-end row cannot be produced
  CHECK(ev.code == kExitConfig);
  REQUIRE(cli(ws.with_config({"refine", "--dataset", unl.string()})).code == 0);
  CHECK(test_util::read_bytes(ws.out / "refine_history.csv").find("train_ACC") == std::string::npos);
  const Run ev2 = cli(ws.with_config({"evaluate", "--dataset", unl.string()}));
  CHECK(ev2.code == 0);
  CHECK(ev2.err.find("warning") != std::string::npos);
  CHECK(test_util::read_bytes(ws.out / "eval.csv").find("n/a,n/a") != std::string::npos);
}

TEST_CASE("re-running a command reproduces every output byte for byte") {
  Workspace ws;
  std::map<std::string, std::string> first;
  auto snapshot = [&] {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(ws.out)) files[e.path().filename().string()] = test_util::read_bytes(e.path());
    return files;
  };
  auto pipeline = [&] {
    REQUIRE(cli(ws.with_config({"pretrain"})).code == 0);
    REQUIRE(cli(ws.with_config({"refine", "--init", "both"})).code == 0);
    REQUIRE(cli(ws.with_config({"evaluate"})).code == 0);
    REQUIRE(cli(ws.with_config({"export-embeddings"})).code == 0);
  };
  pipeline();
  first = snapshot();
  CHECK(first.count("refined_ward.ckpt") == 1);
  CHECK(first.count("assignments_kmeans.csv") == 1);
  fs::remove_all(ws.out);
  pipeline();
  CHECK(snapshot() == first);
}
