#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dpdl/feature_store.hpp"
#include "dpdl/training.hpp"
#include "dpdl_tools/cli.hpp"

namespace fs = std::filesystem;
using namespace dpdl;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "dpdl");
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "dpdl_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const std::string kSmallSynth =
    "n_normal_clusters = 2\nn_anomaly_classes = 2\nnormal_per_cluster = 30\nanomaly_per_class = 6\n"
    "height = 2\nwidth = 2\nchannels = 3\nanomaly_patch_fraction = 0.25\n";

}  // namespace

TEST_CASE("verify suites") {
  const Run r = run({"verify", "bridge"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("all checks passed") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(run({"verify", "losses"}).code == cli::kOk);
  CHECK(run({"verify", "everything"}).code == cli::kInvalid);
}

TEST_CASE("parse errors exit 1 with usage") {
  const Run missing = run({"train", "--seed", "1", "--out", "x.ckpt"});
  CHECK(missing.code == cli::kInvalid);
  CHECK(missing.err.find("--data") != std::string::npos);
  CHECK(missing.err.find("Usage") != std::string::npos);

  const Run unknown = run({"verify", "bridge", "--bogus"});
  CHECK(unknown.code == cli::kInvalid);
  CHECK(run({}).code == cli::kInvalid);
  CHECK(run({"frobnicate"}).code == cli::kInvalid);
}

TEST_CASE("help lists training defaults") {
  const Run r = run({"train", "--help"});
  CHECK(r.code == cli::kOk);
  for (const char* key : {"--learning-rate", "--epsilon", "--kappa", "--lambda", "--residual-scale",
                          "--topk-fraction", "--pseudo-anomaly-rate", "--log-variance-min"})
    CHECK(r.out.find(key) != std::string::npos);
  CHECK(r.out.find("0.00020000000000000001") != std::string::npos);
}

TEST_CASE("synth, train, score, eval end to end") {
  const fs::path dir = scratch();
  write(dir / "synth.conf", kSmallSynth);
  write(dir / "train.conf", "epochs = 2\niters_per_epoch = 2\nbatch_size = 8\nC = 2\nepsilon = 1\nvq_iters = 5\n");
  const std::string data = (dir / "data.feat").string();

  REQUIRE(run({"synth", "--config", (dir / "synth.conf").string(), "--seed", "4", "--out", data}).code == cli::kOk);
  const Dataset ds = read_feature_file(data);
  CHECK(ds.size() == 72);
  const std::string data_bytes = slurp(data);

  const std::string ck = (dir / "model.ckpt").string();
  const Run tr = run({"train", "--data", data, "--protocol", "hard", "--m", "1", "--seed", "3", "--config",
                      (dir / "train.conf").string(), "--learning-rate", "0.02", "--out", ck});
  REQUIRE(tr.code == cli::kOk);
  const Checkpoint model = load_checkpoint(ck);
  CHECK(model.config.learning_rate == 0.02);  // flag beats config file
  CHECK(model.config.C == 2);                 // config file beats default
  CHECK(model.config.batch_size == 8);
  CHECK(model.config.protocol == Protocol::hard);
  CHECK(model.epoch == 2);
  CHECK(slurp(ck + ".log.csv").rfind("epoch,L_Ma", 0) == 0);

  const std::string scores = (dir / "scores.csv").string();
  REQUIRE(run({"score", "--model", ck, "--data", data, "--out", scores}).code == cli::kOk);
  const std::string csv = slurp(scores);
  CHECK(csv.rfind("source_id,label,score\n0,0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 73);

  const std::string report = (dir / "report.txt").string();
  const Run ev = run({"eval", "--data", data, "--protocol", "general", "--m", "2", "--runs", "2", "--seed", "0",
                      "--config", (dir / "train.conf").string(), "--out", report, "--checkpoint-dir",
                      (dir / "cks").string()});
  REQUIRE(ev.code == cli::kOk);
  CHECK(fs::exists(dir / "report.csv"));
  CHECK(fs::exists(dir / "cks" / "run0.ckpt"));
  CHECK(fs::exists(dir / "cks" / "run1.ckpt"));
  CHECK(slurp(report) == ev.out);

  CHECK(slurp(data) == data_bytes);
  CHECK(run({"score", "--model", ck, "--data", data, "--out", data}).code == cli::kInvalid);
  CHECK(slurp(data) == data_bytes);
}

TEST_CASE("error exit codes") {
  const fs::path dir = scratch();
  write(dir / "bad.feat", "not a feature file");
  write(dir / "synth.conf", kSmallSynth);
  const std::string data = (dir / "data.feat").string();
  REQUIRE(run({"synth", "--config", (dir / "synth.conf").string(), "--seed", "1", "--out", data}).code == cli::kOk);

  CHECK(run({"train", "--data", (dir / "bad.feat").string(), "--seed", "1", "--out", (dir / "m").string()}).code ==
        cli::kInvalid);
  // hard protocol cannot give 50 anomalies from one class of 6
  CHECK(run({"train", "--data", data, "--protocol", "hard", "--m", "50", "--seed", "1", "--out",
             (dir / "m").string()})
            .code == cli::kInvalid);
  CHECK(run({"train", "--data", data, "--seed", "1", "--epochs", "0", "--out", (dir / "m").string()}).code ==
        cli::kInvalid);
  CHECK(run({"train", "--data", data, "--seed", "1", "--epochs", "1", "--C", "2", "--m", "2", "--out",
             (dir / "missing_dir" / "m").string()})
            .code == cli::kRuntime);
}

TEST_CASE("bundled configs parse") {
  const fs::path root = DPDL_SOURCE_DIR;
  CHECK_NOTHROW(synth_config_from_file((root / "configs" / "synthetic.conf").string()));
  const TrainConfig c = train_config_from_file((root / "configs" / "train_synthetic.conf").string());
  CHECK(c.epsilon == 1.0);
  CHECK(c.residual_scale == ResidualScale::variance);
}
