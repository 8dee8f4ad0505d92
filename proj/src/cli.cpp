#include "gsfl/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "gsfl/binio.hpp"
#include "gsfl/config.hpp"
#include "gsfl/evalab.hpp"
#include "gsfl/featureio.hpp"
#include "gsfl/grouping.hpp"
#include "gsfl/trainer.hpp"

namespace gsfl {

namespace fs = std::filesystem;

namespace {

// Tracks the current pipeline stage so every error names where it happened.
struct Stage {
  std::string command;
  std::string step = "setup";
};

void require_input(const std::string& path, const char* what) {
  if (path.empty()) fail(ErrorKind::kUsage, std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) fail(ErrorKind::kUsage, std::string(what) + " not found: " + path);
}

void require_output_dir(const std::string& path) {
  if (path.empty()) fail(ErrorKind::kUsage, "missing output path");
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    fail(ErrorKind::kUsage, "output directory does not exist: " + parent.string());
  }
}

std::string format_accuracy(double acc) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", acc);
  return buf;
}

int cmd_synth(const SyntheticSpec& spec, std::uint32_t test_per_class, const std::string& out_dir,
              std::ostream& out, Stage& stage) {
  stage.step = "validate";
  try {
    spec.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kUsage, e.what());
  }
  if (test_per_class == 0) fail(ErrorKind::kUsage, "--test-per-class must be >= 1");
  if (out_dir.empty()) fail(ErrorKind::kUsage, "--out-dir must not be empty");

  stage.step = "generate";
  const auto train_set = generate_synthetic(spec, Split::kTrain);
  SyntheticSpec test_spec = spec;
  test_spec.per_class_count = test_per_class;
  const auto test_set = generate_synthetic(test_spec, Split::kTest);
  GroupAssignment truth;
  truth.num_groups = spec.num_groups;
  for (std::uint32_t c = 1; c <= spec.num_classes; ++c) {
    truth.class_to_group.push_back(synthetic_group_of(static_cast<int>(c), spec.num_groups));
  }

  stage.step = "write";
  fs::create_directories(out_dir);
  const auto dir = fs::path(out_dir);
  save_features(train_set, (dir / "train.bin").string());
  save_features(test_set, (dir / "test.bin").string());
  save_groups(truth, (dir / "groups.txt").string());
  out << "wrote " << (dir / "train.bin").string() << " (N=" << train_set.size() << "), "
      << (dir / "test.bin").string() << " (N=" << test_set.size() << "), "
      << (dir / "groups.txt").string() << "\n";
  return 0;
}

struct ClusterArgs {
  std::string features;
  std::uint32_t groups = 5;
  std::uint64_t seed = 0;
  std::string mode = "kmeans";
  int max_iters = 300;
  std::string out = "groups.txt";
};

int cmd_cluster(const ClusterArgs& a, std::ostream& out, Stage& stage) {
  stage.step = "validate";
  require_input(a.features, "feature file");
  require_output_dir(a.out);
  if (a.mode != "kmeans" && a.mode != "random") {
    fail(ErrorKind::kUsage, "--mode must be kmeans or random");
  }
  if (a.groups < 1) fail(ErrorKind::kUsage, "--groups must be >= 1");
  if (a.max_iters < 1) fail(ErrorKind::kUsage, "--max-iters must be >= 1");

  stage.step = "load features";
  const auto data = load_features(a.features);
  data.validate();

  GroupAssignment groups;
  if (a.mode == "random") {
    stage.step = "random grouping";
    groups = random_groups(data.num_classes, a.groups, a.seed);
  } else {
    stage.step = "kmeans";
    const auto cluster = kmeans(data, a.groups, a.seed, a.max_iters);
    out << "inertia: " << cluster.inertia << " after " << cluster.iterations << " iterations\n";
    stage.step = "assign groups";
    groups = assign_groups(cluster, data.labels(), data.num_classes);
  }
  stage.step = "write";
  save_groups(groups, a.out);
  out << "group sizes:";
  for (auto s : groups.sizes()) out << " " << s;
  out << "\nwrote " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string train, test, groups, checkpoint, log;
  std::string seed, epochs;
};

KeyValueConfig assemble_config(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValueConfig cfg = path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err, Stage& stage) {
  stage.step = "config";
  if (!a.config.empty()) require_input(a.config, "config file");
  KeyValueConfig cfg = assemble_config(a.config, a.overrides);
  if (!a.train.empty()) cfg.set("data.train", a.train);
  if (!a.test.empty()) cfg.set("data.test", a.test);
  if (!a.groups.empty()) cfg.set("data.groups", a.groups);
  if (!a.checkpoint.empty()) cfg.set("output.checkpoint", a.checkpoint);
  if (!a.log.empty()) cfg.set("output.log", a.log);
  if (!a.seed.empty()) cfg.set("train.seed", a.seed);
  if (!a.epochs.empty()) cfg.set("train.epochs", a.epochs);
  cfg.require_known(train_config_keys());
  const TrainConfig tc = train_config_from(cfg);

  const auto train_path = cfg.get_string("data.train", "");
  const auto test_path = cfg.get_string("data.test", train_path);
  const auto groups_path = cfg.get_string("data.groups", "");
  const auto ckpt_path = cfg.get_string("output.checkpoint", "model.ckpt");
  const auto log_path = cfg.get_string("output.log", "");
  require_input(train_path, "training features");
  require_input(test_path, "evaluation features");
  if (!groups_path.empty()) require_input(groups_path, "grouping file");
  require_output_dir(ckpt_path);
  if (!log_path.empty()) require_output_dir(log_path);

  stage.step = "load data";
  const auto train_set = load_features(train_path, Split::kTrain);
  const auto test_set = load_features(test_path, Split::kTest);
  const auto groups = groups_path.empty() ? single_group(train_set.num_classes)
                                          : load_groups(groups_path);

  stage.step = "train";
  TrainResult res;
  try {
    res = train(tc, train_set, test_set, groups);
  } catch (const TrainingDiverged& d) {
    stage.step = "write last checkpoint";
    save_train_state(d.last_state, ckpt_path);
    if (!log_path.empty()) binio::write_text_atomic(log_path, d.log.to_csv());
    err << "train [train]: divergence: " << d.what() << "\nlast finite state saved to "
        << ckpt_path << "\n";
    return exit_code(ErrorKind::kDivergence);
  }

  stage.step = "write";
  save_train_state(res.state, ckpt_path);
  if (!log_path.empty()) binio::write_text_atomic(log_path, res.log.to_csv());
  if (!res.log.epochs.empty()) {
    out << "epochs: " << res.state.epoch << "\n";
    out << "best eval accuracy: " << format_accuracy(res.state.best_eval) << " (epoch "
        << res.state.best_epoch << ")\n";
    out << "convergence epoch: " << res.state.convergence_epoch << "\n";
  }
  out << "accuracy: " << format_accuracy(evaluate(res.state, test_set)) << "\n";
  out << "wrote " << ckpt_path << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& features, std::ostream& out,
             Stage& stage) {
  stage.step = "validate";
  require_input(checkpoint, "checkpoint");
  require_input(features, "feature file");
  stage.step = "load";
  const auto bytes = binio::read_file(checkpoint);
  const auto data = load_features(features, Split::kTest);
  data.validate();
  stage.step = "evaluate";
  double acc = 0.0;
  const std::string magic(bytes.begin(), bytes.begin() + std::min<std::size_t>(4, bytes.size()));
  if (magic == "GSFT") {
    acc = evaluate(decode_train_state(bytes, checkpoint), data);
  } else if (magic == "GSFI") {
    acc = InferenceModel::decode(bytes, checkpoint).evaluate(data);
  } else {
    fail(ErrorKind::kFormat, checkpoint + ": not a GSFT or GSFI checkpoint (byte offset 0)");
  }
  out << "accuracy: " << format_accuracy(acc) << "\n";
  return 0;
}

struct AblateArgs {
  std::string spec;
  std::vector<std::string> overrides;
  std::string train, test, out = "ablation.csv";
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, Stage& stage) {
  stage.step = "config";
  require_input(a.spec, "ablation spec");
  KeyValueConfig cfg = assemble_config(a.spec, a.overrides);
  if (!a.train.empty()) cfg.set("data.train", a.train);
  if (!a.test.empty()) cfg.set("data.test", a.test);
  cfg.require_known(train_config_keys(), {"run."});
  const TrainConfig base = train_config_from(cfg);
  const auto train_path = cfg.get_string("data.train", "");
  const auto test_path = cfg.get_string("data.test", train_path);
  require_input(train_path, "training features");
  require_input(test_path, "evaluation features");
  require_output_dir(a.out);

  stage.step = "load data";
  const auto train_set = load_features(train_path, Split::kTrain);
  const auto test_set = load_features(test_path, Split::kTest);
  const auto plan = ablation_plan_from(cfg, train_set.num_classes);

  std::vector<EvalReport> reports;
  for (const auto& spec : plan) {
    stage.step = "run " + spec.name;
    reports.push_back(run_ablation(spec, base, train_set, test_set));
  }
  stage.step = "write";
  binio::write_text_atomic(a.out, reports_to_csv(reports));
  out << reports_to_table(reports);
  out << "wrote " << a.out << "\n";
  return 0;
}

int cmd_export(const std::string& checkpoint, const std::string& dest, std::ostream& out,
               Stage& stage) {
  stage.step = "validate";
  require_input(checkpoint, "checkpoint");
  require_output_dir(dest);
  stage.step = "load";
  const auto state = load_train_state(checkpoint);
  stage.step = "write";
  export_inference(state, dest);
  out << "wrote " << dest << " (" << fs::file_size(dest) << " bytes; full checkpoint "
      << fs::file_size(checkpoint) << " bytes)\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GSFL: shared/discriminative feature decomposition head"};
  app.require_subcommand(1);

  SyntheticSpec synth;
  std::uint32_t test_per_class = 20;
  std::string synth_dir = ".";
  auto* s = app.add_subcommand("synth", "generate synthetic train/test features and ground-truth groups");
  s->add_option("--classes", synth.num_classes, "number of classes")->required();
  s->add_option("--groups", synth.num_groups, "number of ground-truth groups")->required();
  s->add_option("--dim", synth.dim, "feature dimension")->required();
  s->add_option("--per-class", synth.per_class_count, "training samples per class")->required();
  s->add_option("--test-per-class", test_per_class, "test samples per class");
  s->add_option("--shared-scale", synth.shared_scale, "group anchor scale");
  s->add_option("--discrim-scale", synth.discriminative_scale, "class anchor scale");
  s->add_option("--noise", synth.noise_scale, "isotropic noise scale");
  s->add_option("--seed", synth.seed, "root seed");
  s->add_option("--out-dir", synth_dir, "output directory");

  ClusterArgs cl;
  auto* c = app.add_subcommand("cluster", "group classes by k-means plurality (or randomly)");
  c->add_option("--features", cl.features, "feature file")->required();
  c->add_option("--groups", cl.groups, "number of groups");
  c->add_option("--seed", cl.seed, "root seed");
  c->add_option("--mode", cl.mode, "kmeans or random");
  c->add_option("--max-iters", cl.max_iters, "Lloyd iteration cap");
  c->add_option("--out", cl.out, "grouping file to write");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the decomposition head");
  t->add_option("--config", tr.config, "config file");
  t->add_option("--set", tr.overrides, "override section.key=value (repeatable)");
  t->add_option("--train", tr.train, "training features");
  t->add_option("--test", tr.test, "evaluation features");
  t->add_option("--groups", tr.groups, "grouping file");
  t->add_option("--checkpoint", tr.checkpoint, "checkpoint to write");
  t->add_option("--log", tr.log, "training log CSV to write");
  t->add_option("--seed", tr.seed, "root seed");
  t->add_option("--epochs", tr.epochs, "epoch count");

  std::string eval_ckpt, eval_features;
  auto* e = app.add_subcommand("eval", "accuracy of a full or exported checkpoint");
  e->add_option("--checkpoint", eval_ckpt, "GSFT or GSFI checkpoint")->required();
  e->add_option("--features", eval_features, "feature file")->required();

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "run an ablation spec");
  a->add_option("--spec", ab.spec, "ablation spec file")->required();
  a->add_option("--set", ab.overrides, "override section.key=value (repeatable)");
  a->add_option("--train", ab.train, "training features");
  a->add_option("--test", ab.test, "evaluation features");
  a->add_option("--out", ab.out, "CSV report to write");

  std::string exp_ckpt, exp_out;
  auto* x = app.add_subcommand("export", "write the reduced inference model");
  x->add_option("--checkpoint", exp_ckpt, "full GSFT checkpoint")->required();
  x->add_option("--out", exp_out, "reduced model to write")->required();

  std::vector<std::string> argv_store = args;
  if (argv_store.empty()) argv_store.push_back("gsfl");
  std::vector<char*> argv;
  for (auto& arg : argv_store) argv.push_back(arg.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? 0 : exit_code(ErrorKind::kUsage);
  }

  Stage stage;
  try {
    if (s->parsed()) {
      stage.command = "synth";
      return cmd_synth(synth, test_per_class, synth_dir, out, stage);
    }
    if (c->parsed()) {
      stage.command = "cluster";
      return cmd_cluster(cl, out, stage);
    }
    if (t->parsed()) {
      stage.command = "train";
      return cmd_train(tr, out, err, stage);
    }
    if (e->parsed()) {
      stage.command = "eval";
      return cmd_eval(eval_ckpt, eval_features, out, stage);
    }
    if (a->parsed()) {
      stage.command = "ablate";
      return cmd_ablate(ab, out, stage);
    }
    if (x->parsed()) {
      stage.command = "export";
      return cmd_export(exp_ckpt, exp_out, out, stage);
    }
  } catch (const Error& ex) {
    err << stage.command << " [" << stage.step << "]: " << to_string(ex.kind()) << ": "
        << ex.what() << "\n";
    return exit_code(ex.kind());
  } catch (const std::exception& ex) {
    err << stage.command << " [" << stage.step << "]: " << ex.what() << "\n";
    return exit_code(ErrorKind::kIo);
  }
  return exit_code(ErrorKind::kUsage);
}

}  // namespace gsfl
