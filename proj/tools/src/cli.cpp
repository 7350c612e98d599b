#include "dpdl_tools/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "dpdl/error.hpp"
#include "dpdl/evaluation.hpp"
#include "dpdl/feature_store.hpp"
#include "dpdl/key_value.hpp"
#include "dpdl/training.hpp"
#include "dpdl/verification.hpp"

namespace dpdl::cli {

namespace {

namespace fs = std::filesystem;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

// Outputs must not clobber inputs.
void check_distinct(const std::string& output, std::initializer_list<const std::string*> inputs) {
  for (const auto* in : inputs) {
    if (!in || in->empty()) continue;
    std::error_code ec;
    if (*in == output || fs::equivalent(*in, output, ec))
      throw ValidationError("output path would overwrite input: " + output);
  }
}

// Every TrainConfig field except M, protocol and seed, which have dedicated
// flags. Values stay strings so that defaults are printed exactly as the
// config file format writes them.
struct TrainFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void add_to(CLI::App& app) {
    const auto defaults = parse_key_value(train_config_to_text(TrainConfig{}));
    for (const auto& [key, value] : defaults) {
      if (key == "M" || key == "protocol" || key == "seed") continue;
      values[key] = value;
      std::string names = "--" + key;
      if (key.find('_') != std::string::npos) {
        std::string dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        names += ",--" + dashed;
      }
      options[key] = app.add_option(names, values[key], "TrainConfig." + key)->default_str(value);
    }
  }

  // defaults < --config file < explicit flags
  TrainConfig resolve(const std::string& config_path, std::size_t m, Protocol protocol,
                      std::uint64_t seed) const {
    std::map<std::string, std::string> kv;
    if (!config_path.empty()) kv = read_key_value_file(config_path);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) kv[key] = values.at(key);
    kv["M"] = std::to_string(m);
    kv["protocol"] = to_string(protocol);
    kv["seed"] = std::to_string(seed);
    return train_config_from_map(kv);
  }
};

struct Args {
  std::string config, data, out, model, log, resume, checkpoint_dir, protocol = "general", suite;
  std::size_t m = TrainConfig{}.M;
  std::size_t runs = 5;
  std::optional<std::size_t> stop_after;
  std::uint64_t seed = 0;
  TrainFlags train_flags;
};

int run_synth(const Args& a, std::ostream& out) {
  check_distinct(a.out, {&a.config});
  const SynthConfig cfg = synth_config_from_file(a.config);
  const Dataset ds = synth_generate(cfg, a.seed);
  write_feature_file(a.out, ds);
  out << "wrote " << ds.size() << " items to " << a.out << "\n";
  return kOk;
}

int run_train(const Args& a, std::ostream& out) {
  const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
  check_distinct(a.out, {&a.data, &a.config, &a.resume});
  check_distinct(log_path, {&a.data, &a.config, &a.resume});
  const Protocol protocol = parse_protocol(a.protocol);
  const TrainConfig cfg = a.train_flags.resolve(a.config, a.m, protocol, a.seed);
  const Dataset ds = read_feature_file(a.data);
  const SplitPlan split = make_splits(ds, protocol, cfg.M, a.seed);
  TrainOptions opts;
  if (!a.resume.empty()) opts.resume = load_checkpoint(a.resume);
  opts.stop_after = a.stop_after;
  const TrainResult r = train(ds, split, cfg, opts);
  save_checkpoint(a.out, r.checkpoint);
  write_text(log_path, training_log_csv(r.log));
  out << "trained " << r.checkpoint.epoch << " epochs; checkpoint " << a.out << ", log " << log_path << "\n";
  return kOk;
}

int run_score(const Args& a, std::ostream& out) {
  check_distinct(a.out, {&a.data, &a.model});
  const Checkpoint model = load_checkpoint(a.model);
  const Dataset ds = read_feature_file(a.data);
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto scores = score_items(model, ds, all);
  std::string csv = "source_id,label,score\n";
  char buf[40];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", scores[i]);
    csv += ds.items[i].source_id + ',' + (ds.items[i].is_anomaly() ? "1" : "0") + ',' + buf + '\n';
  }
  write_text(a.out, csv);
  out << "scored " << ds.size() << " items to " << a.out << "\n";
  return kOk;
}

std::string csv_sibling(const std::string& report_path) {
  fs::path p(report_path);
  if (p.extension() == ".csv") return report_path + ".csv";
  return p.replace_extension(".csv").string();
}

int run_eval(const Args& a, std::ostream& out) {
  const std::string csv_path = csv_sibling(a.out);
  check_distinct(a.out, {&a.data, &a.config});
  check_distinct(csv_path, {&a.data, &a.config});
  const Protocol protocol = parse_protocol(a.protocol);
  const TrainConfig cfg = a.train_flags.resolve(a.config, a.m, protocol, a.seed);
  const Dataset ds = read_feature_file(a.data);
  std::vector<RunResult> runs;
  const Report rep = run_experiment(ds, protocol, cfg.M, a.runs, a.seed, cfg,
                                    a.checkpoint_dir.empty() ? nullptr : &runs);
  write_text(a.out, report_text(rep));
  write_text(csv_path, report_csv(rep));
  if (!a.checkpoint_dir.empty()) {
    fs::create_directories(a.checkpoint_dir);
    for (std::size_t k = 0; k < runs.size(); ++k)
      save_checkpoint((fs::path(a.checkpoint_dir) / ("run" + std::to_string(k) + ".ckpt")).string(),
                      runs[k].checkpoint);
  }
  out << report_text(rep);
  return kOk;
}

int run_verify(const Args& a, std::ostream& out) {
  bool ok = true;
  if (a.suite == "bridge" || a.suite == "all") {
    out << "[bridge]\n";
    ok = verify_bridge(out) && ok;
  }
  if (a.suite == "losses" || a.suite == "all") {
    out << "[losses]\n";
    ok = verify_losses(out) && ok;
  }
  out << (ok ? "verify: all checks passed\n" : "verify: FAILED\n");
  return ok ? kOk : kVerifyFailed;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-prototype anomaly detection toolkit", "dpdl"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Args a;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic feature dataset");
  synth->add_option("--config", a.config, "Synthetic dataset config (key = value)")->required()->check(CLI::ExistingFile);
  synth->add_option("--seed", a.seed, "Generator seed")->required();
  synth->add_option("--out", a.out, "Output DPDLFEAT file")->required();

  auto* train = app.add_subcommand("train", "Train a model on one split");
  train->add_option("--data", a.data, "Input DPDLFEAT file")->required()->check(CLI::ExistingFile);
  train->add_option("--protocol", a.protocol, "Sampling protocol")->check(CLI::IsMember({"general", "hard"}));
  train->add_option("--m", a.m, "Number of labelled anomalies (TrainConfig.M)");
  train->add_option("--seed", a.seed, "Split and training seed")->required();
  train->add_option("--config", a.config, "Training config (key = value)")->check(CLI::ExistingFile);
  train->add_option("--out", a.out, "Output checkpoint")->required();
  train->add_option("--log", a.log, "Training log CSV (default: <out>.log.csv)");
  train->add_option("--resume", a.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--stop-after", a.stop_after, "Stop once this many epochs are complete");
  a.train_flags.add_to(*train);

  auto* score = app.add_subcommand("score", "Score every item of a dataset");
  score->add_option("--model", a.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  score->add_option("--data", a.data, "Input DPDLFEAT file")->required()->check(CLI::ExistingFile);
  score->add_option("--out", a.out, "Output CSV")->required();

  Args eval_args;  // separate flag storage: TrainFlags binds by reference
  auto* eval = app.add_subcommand("eval", "Multi-run experiment with AUC report");
  eval->add_option("--data", eval_args.data, "Input DPDLFEAT file")->required()->check(CLI::ExistingFile);
  eval->add_option("--protocol", eval_args.protocol, "Sampling protocol")->check(CLI::IsMember({"general", "hard"}));
  eval->add_option("--m", eval_args.m, "Number of labelled anomalies (TrainConfig.M)");
  eval->add_option("--runs", eval_args.runs, "Independent runs")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_args.seed, "Base seed; run k uses seed + k")->required();
  eval->add_option("--out", eval_args.out, "Report path; a CSV sibling is written next to it")->required();
  eval->add_option("--config", eval_args.config, "Training config (key = value)")->check(CLI::ExistingFile);
  eval->add_option("--checkpoint-dir", eval_args.checkpoint_dir, "Also save run<k>.ckpt here");
  eval_args.train_flags.add_to(*eval);

  auto* verify = app.add_subcommand("verify", "Run the numerical oracle suites");
  verify->add_option("suite", a.suite, "Suite to run")->required()->check(CLI::IsMember({"bridge", "losses", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kInvalid;
  }

  try {
    if (*synth) return run_synth(a, out);
    if (*train) return run_train(a, out);
    if (*score) return run_score(a, out);
    if (*eval) return run_eval(eval_args, out);
    if (*verify) return run_verify(a, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kInvalid;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace dpdl::cli
