#include "commands.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"

#include "dastack/checkpoint.hpp"
#include "dastack/data.hpp"
#include "dastack/errors.hpp"
#include "dastack/io.hpp"
#include "dastack/rng.hpp"
#include "dastack/stack.hpp"

namespace dastack::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kMetricsHeader = "name,split,accuracy,seed\n";

void write_history_csv(const fs::path& path, const TrainHistory& hist) {
  std::string out = "epoch,class_loss,adapt_loss,lr,source_acc,target_acc\n";
  for (const EpochStats& e : hist.epochs) {
    out += std::to_string(e.epoch);
    out += ',';
    out += format_double(e.class_loss);
    out += ',';
    out += format_double(e.adapt_loss);
    out += ',';
    out += format_double(e.lr);
    out += ',';
    out += format_double(e.source_acc);
    out += ',';
    if (e.target_acc) out += format_double(*e.target_acc);
    out += '\n';
  }
  atomic_write(path, out);
}

void write_meta_history_csv(const fs::path& path, const std::vector<MetaEpochStats>& hist) {
  std::string out = "epoch,loss,lr,val_acc\n";
  for (const MetaEpochStats& e : hist) {
    out += std::to_string(e.epoch);
    out += ',';
    out += format_double(e.loss);
    out += ',';
    out += format_double(e.lr);
    out += ',';
    out += format_double(e.val_acc);
    out += '\n';
  }
  atomic_write(path, out);
}

void write_confusion_csv(const fs::path& path, const Evaluation& ev) {
  std::string out;
  for (const std::vector<long>& row : ev.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) out += ',';
      out += std::to_string(row[j]);
    }
    out += '\n';
  }
  atomic_write(path, out);
}

// ---- shared option bundles ----------------------------------------------

struct SplitOpts {
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  bool no_group_split = false;
};

void add_split_opts(CLI::App* cmd, SplitOpts& o) {
  cmd->add_option("--train-fraction", o.train_frac, "Rows used for training")
      ->capture_default_str();
  cmd->add_option("--val-fraction", o.val_frac, "Rows held out for the meta learner")
      ->capture_default_str();
  cmd->add_option("--test-fraction", o.test_frac, "Rows held out for evaluation")
      ->capture_default_str();
  cmd->add_flag("--no-group-split", o.no_group_split,
                "Split individual rows instead of whole groups");
}

struct SgdOpts {
  double eta0 = 0.01;
  double alpha = 10.0;
  double beta = 0.75;
  double momentum = 0.9;
  std::size_t batch = 32;
  std::size_t epochs = 30;
};

void add_sgd_opts(CLI::App* cmd, SgdOpts& o) {
  cmd->add_option("--eta0", o.eta0, "Initial learning rate")->capture_default_str();
  cmd->add_option("--lr-alpha", o.alpha, "Learning rate decay alpha")->capture_default_str();
  cmd->add_option("--lr-beta", o.beta, "Learning rate decay beta")->capture_default_str();
  cmd->add_option("--momentum", o.momentum, "Heavy-ball momentum")->capture_default_str();
  cmd->add_option("--batch", o.batch, "Minibatch size per domain")->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
}

SgdConfig to_sgd(const SgdOpts& o, std::uint64_t seed) {
  SgdConfig cfg;
  cfg.eta0 = o.eta0;
  cfg.alpha = o.alpha;
  cfg.beta = o.beta;
  cfg.momentum = o.momentum;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.seed = seed;
  return cfg;
}

MethodTag require_tag(const std::string& name) {
  const auto tag = parse_method_tag(name);
  if (!tag)
    throw ConfigError("unknown method '" + name + "' (expected mmd, cmmd, lowrank or coral)");
  return *tag;
}

LabeledSet load_domain_csv(const std::string& path, Domain expected) {
  LabeledSet set = load_csv(path);
  if (set.domain != expected)
    throw ConfigError(path + ": expected rows from the " + domain_name(expected) + " domain");
  return set;
}

std::size_t infer_classes(const LabeledSet& labeled) {
  int max_label = 0;
  for (int y : *labeled.labels) max_label = std::max(max_label, y);
  return static_cast<std::size_t>(max_label) + 1;
}

struct SplitPair {
  DataSplit source;
  DataSplit target;
};

SplitPair split_domains(const LabeledSet& src, const LabeledSet& tgt, const SplitOpts& o,
                        std::uint64_t seed) {
  const std::array<double, 3> fr{o.train_frac, o.val_frac, o.test_frac};
  SplitPair out;
  Rng rs = make_rng(seed, "split:source");
  out.source = split(src, fr, !o.no_group_split, rs);
  Rng rt = make_rng(seed, "split:target");
  out.target = split(tgt, fr, !o.no_group_split, rt);
  return out;
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  bool moons = false;
  std::size_t classes = 4;
  std::size_t per_class = 100;
  double rotate = 30.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

void cmd_generate(const GenerateArgs& a) {
  ShiftSpec spec;
  spec.generator = a.moons ? Generator::Moons : Generator::Blobs;
  spec.n_classes = a.classes;
  spec.n_per_class = a.per_class;
  spec.rotation_deg = a.rotate;
  spec.translation = {a.translate_x, a.translate_y};
  spec.noise_sd = a.noise;
  spec.seed = a.seed;
  const ShiftPair pair = generate_shift_pair(spec);
  const fs::path dir(a.out);
  save_csv(dir / "source.csv", pair.source);
  save_csv(dir / "target.csv", pair.target);
  std::cout << "wrote " << (dir / "source.csv").string() << " (" << pair.source.size()
            << " rows) and " << (dir / "target.csv").string() << " (" << pair.target.size()
            << " rows)\n";
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string source;
  std::string target;
  std::string out;
  std::string method = "cmmd";
  std::uint64_t seed = 0;
  SplitOpts split;
  SgdOpts sgd;
  std::optional<double> lambda;
  std::size_t warmup = 3;
  bool no_pseudo_refresh = false;
  std::optional<std::size_t> alm_iters;
  std::optional<double> alm_lambda_e;
};

void cmd_train(const TrainArgs& a) {
  const MethodTag tag = require_tag(a.method);
  const LabeledSet src = load_domain_csv(a.source, Domain::Source);
  const LabeledSet tgt = load_domain_csv(a.target, Domain::Target);
  const SplitPair parts = split_domains(src, tgt, a.split, a.seed);

  TrainConfig cfg = default_train_config(tag);
  cfg.sgd = to_sgd(a.sgd, a.seed);
  if (a.lambda) cfg.lambda_tradeoff = *a.lambda;
  cfg.warmup_epochs = a.warmup;
  cfg.pseudo_refresh = !a.no_pseudo_refresh;

  DiscrepancyMethod method = default_method(tag);
  if (a.alm_iters) method.alm.max_iters = *a.alm_iters;
  if (a.alm_lambda_e) method.alm.lambda_e = *a.alm_lambda_e;

  const std::size_t n_classes = infer_classes(src);
  const std::uint64_t slot_seed =
      derive_seed(a.seed, "base" + std::to_string(method_slot(tag)));
  Rng init = make_rng(slot_seed, "init");
  BaseLearner learner = make_base_learner(src.features.cols(), n_classes, tag, init);
  learner.method = method;
  Rng sgd_rng = make_rng(slot_seed, "sgd");
  const TrainHistory hist = train_base(learner, parts.source.train, parts.target.train, cfg,
                                       sgd_rng);

  const fs::path dir(a.out);
  write_history_csv(dir / "history.csv", hist);
  save_base_checkpoint(dir / "checkpoint.json", learner, a.seed, cfg);
  const std::string name = std::string("base_") + method_name(tag);
  if (parts.target.test.labels) {
    const Evaluation ev = evaluate(learner, parts.target.test);
    atomic_write(dir / "metrics.csv", kMetricsHeader + name + ",test," +
                                          format_double(ev.accuracy) + ',' +
                                          std::to_string(a.seed) + '\n');
    std::cout << name << " accuracy on the target test split: " << format_double(ev.accuracy)
              << "\n";
  } else {
    std::cerr << "note: target test split is unlabeled, skipping metrics.csv\n";
  }
  std::cout << "wrote " << (dir / "history.csv").string() << " and "
            << (dir / "checkpoint.json").string() << "\n";
}

// ---- stack / ablate ---------------------------------------------------------

struct StackArgs {
  std::string source;
  std::string target;
  std::string out;
  std::string first = "cmmd";
  std::string val_domain = "source";
  std::uint64_t seed = 0;
  SplitOpts split;
  SgdOpts sgd;
  std::optional<double> lambda_kernel;
  std::optional<double> lambda_lowrank;
  std::optional<double> lambda_coral;
  std::size_t warmup = 3;
  bool no_pseudo_refresh = false;
  std::optional<std::size_t> alm_iters;
  std::size_t meta_epochs = 30;
};

void add_stack_opts(CLI::App* cmd, StackArgs& a) {
  cmd->add_option("--source", a.source, "Source domain CSV")->required();
  cmd->add_option("--target", a.target, "Target domain CSV")->required();
  cmd->add_option("--out,-o", a.out, "Output directory")->required();
  cmd->add_option("--first", a.first, "Kernel-mean base variant: cmmd or mmd")
      ->capture_default_str();
  cmd->add_option("--val-domain", a.val_domain,
                  "Domain whose validation split trains the meta learner")
      ->capture_default_str();
  cmd->add_option("--seed,-s", a.seed, "Root seed")->capture_default_str();
  add_split_opts(cmd, a.split);
  add_sgd_opts(cmd, a.sgd);
  cmd->add_option("--lambda-kernel", a.lambda_kernel,
                  "Trade-off weight for the kernel-mean base");
  cmd->add_option("--lambda-lowrank", a.lambda_lowrank,
                  "Trade-off weight for the low-rank base");
  cmd->add_option("--lambda-coral", a.lambda_coral,
                  "Trade-off weight for the covariance base");
  cmd->add_option("--warmup", a.warmup, "Epochs before the adaptation term switches on")
      ->capture_default_str();
  cmd->add_flag("--no-pseudo-refresh", a.no_pseudo_refresh,
                "Freeze cmmd pseudo-labels after the first estimate");
  cmd->add_option("--alm-iters", a.alm_iters, "Low-rank solver iterations during training");
  cmd->add_option("--meta-epochs", a.meta_epochs, "Meta learner training epochs")
      ->capture_default_str();
}

struct FittedStack {
  StackedModel model;
  StackHistory history;
  SplitPair parts;
  MethodTag first_tag = MethodTag::Cmmd;
};

FittedStack run_stack(const StackArgs& a) {
  const MethodTag first = require_tag(a.first);
  if (method_slot(first) != 0)
    throw ConfigError("--first must be mmd or cmmd; " + a.first + " has a fixed slot");
  ValDomain vd;
  if (a.val_domain == "source")
    vd = ValDomain::Source;
  else if (a.val_domain == "target")
    vd = ValDomain::Target;
  else
    throw ConfigError("--val-domain must be 'source' or 'target'");

  const LabeledSet src = load_domain_csv(a.source, Domain::Source);
  const LabeledSet tgt = load_domain_csv(a.target, Domain::Target);
  FittedStack f;
  f.first_tag = first;
  f.parts = split_domains(src, tgt, a.split, a.seed);

  StackConfig cfg = StackConfig::defaults(first);
  for (BaseSpec& base : cfg.bases) {
    base.train.sgd = to_sgd(a.sgd, a.seed);
    base.train.warmup_epochs = a.warmup;
    base.train.pseudo_refresh = !a.no_pseudo_refresh;
  }
  if (a.lambda_kernel) cfg.bases[0].train.lambda_tradeoff = *a.lambda_kernel;
  if (a.lambda_lowrank) cfg.bases[1].train.lambda_tradeoff = *a.lambda_lowrank;
  if (a.lambda_coral) cfg.bases[2].train.lambda_tradeoff = *a.lambda_coral;
  if (a.alm_iters) cfg.bases[1].method.alm.max_iters = *a.alm_iters;
  cfg.meta_sgd.epochs = a.meta_epochs;
  cfg.meta_sgd.seed = a.seed;

  StackPlan plan;
  plan.source = f.parts.source;
  plan.target = f.parts.target;
  plan.val_domain = vd;
  f.model = fit_stack(plan, cfg, a.seed, &f.history);
  return f;
}

void cmd_stack(const StackArgs& a) {
  const FittedStack f = run_stack(a);
  const fs::path dir(a.out);
  for (std::size_t i = 0; i < 3; ++i)
    write_history_csv(dir / ("history_" + std::string(method_name(f.model.bases[i].method.tag)) +
                             ".csv"),
                      f.history.bases[i]);
  write_meta_history_csv(dir / "meta_history.csv", f.history.meta);
  save_stacked_checkpoint(dir / "checkpoint.json", f.model, a.seed);

  if (f.parts.target.test.labels) {
    std::string metrics = kMetricsHeader;
    for (const BaseLearner& base : f.model.bases) {
      const Evaluation ev = evaluate(base, f.parts.target.test);
      metrics += std::string("base_") + method_name(base.method.tag) + ",test," +
                 format_double(ev.accuracy) + ',' + std::to_string(a.seed) + '\n';
    }
    const Evaluation ev = evaluate(f.model, f.parts.target.test);
    metrics += "stacked,test," + format_double(ev.accuracy) + ',' + std::to_string(a.seed) + '\n';
    atomic_write(dir / "metrics.csv", metrics);
    std::cout << "stacked accuracy on the target test split: " << format_double(ev.accuracy)
              << "\n";
  } else {
    std::cerr << "note: target test split is unlabeled, skipping metrics.csv\n";
  }
  std::cout << "wrote " << (dir / "checkpoint.json").string() << "\n";
}

void cmd_ablate(const StackArgs& a) {
  const FittedStack f = run_stack(a);
  if (!f.parts.target.test.labels)
    throw ConfigError("ablate: the target test split has no labels to score against");

  std::string table = "name,test_accuracy,seed\n";
  std::cout << "name,test_accuracy\n";
  for (const BaseLearner& base : f.model.bases) {
    const Evaluation ev = evaluate(base, f.parts.target.test);
    const std::string name = std::string("base_") + method_name(base.method.tag);
    table += name + ',' + format_double(ev.accuracy) + ',' + std::to_string(a.seed) + '\n';
    std::cout << name << ',' << format_double(ev.accuracy) << "\n";
  }
  const Evaluation ev = evaluate(f.model, f.parts.target.test);
  table += "stacked," + format_double(ev.accuracy) + ',' + std::to_string(a.seed) + '\n';
  std::cout << "stacked," << format_double(ev.accuracy) << "\n";

  const fs::path dir(a.out);
  atomic_write(dir / "ablation.csv", table);
  std::cout << "wrote " << (dir / "ablation.csv").string() << "\n";
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
};

void cmd_eval(const EvalArgs& a) {
  const auto model = load_checkpoint(a.checkpoint);
  const LabeledSet set = load_csv(a.data);
  if (!set.labels) throw ConfigError(a.data + ": no labels to evaluate against");

  Evaluation ev;
  std::string name;
  if (const BaseLearner* base = std::get_if<BaseLearner>(&model)) {
    ev = evaluate(*base, set);
    name = std::string("base_") + method_name(base->method.tag);
  } else {
    ev = evaluate(std::get<StackedModel>(model), set);
    name = "stacked";
  }

  const fs::path dir(a.out);
  const std::uint64_t seed = checkpoint_seed(a.checkpoint);
  atomic_write(dir / "metrics.csv", kMetricsHeader + name + ',' + domain_name(set.domain) + ',' +
                                        format_double(ev.accuracy) + ',' + std::to_string(seed) +
                                        '\n');
  write_confusion_csv(dir / "confusion.csv", ev);
  std::cout << name << " accuracy on " << a.data << ": " << format_double(ev.accuracy) << "\n";
  std::cout << "wrote " << (dir / "metrics.csv").string() << " and "
            << (dir / "confusion.csv").string() << "\n";
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Synthetic-benchmark toolkit for unsupervised domain adaptation: "
               "discrepancy-minimizing base learners combined by stacking"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");
  // CLI11 only reads config files on the root app, so the option lives here
  // and each subcommand falls unmatched flags through to it. Keys belong in
  // a section named for the subcommand, e.g. [train] method=coral.
  app.set_config("--config", "", "INI file with a section per subcommand");

  GenerateArgs gen_args;
  CLI::App* gen = app.add_subcommand("generate", "Write a synthetic source/target CSV pair");
  gen->fallthrough();
  gen->add_option("--out,-o", gen_args.out, "Output directory")->required();
  CLI::Option* moons_flag = gen->add_flag("--moons", gen_args.moons, "Two entangled half-circles");
  gen->add_flag("--blobs", "Gaussian blobs on a circle (default)")->excludes(moons_flag);
  gen->add_option("--classes", gen_args.classes, "Number of blob classes")->capture_default_str();
  gen->add_option("--per-class", gen_args.per_class, "Examples per class and domain")
      ->capture_default_str();
  gen->add_option("--rotate", gen_args.rotate, "Target rotation in degrees")
      ->capture_default_str();
  gen->add_option("--translate-x", gen_args.translate_x, "Target shift, first coordinate")
      ->capture_default_str();
  gen->add_option("--translate-y", gen_args.translate_y, "Target shift, second coordinate")
      ->capture_default_str();
  gen->add_option("--noise", gen_args.noise, "Gaussian noise standard deviation")
      ->capture_default_str();
  gen->add_option("--seed,-s", gen_args.seed, "Root seed")->capture_default_str();
  gen->callback([&gen_args] { cmd_generate(gen_args); });

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a single base learner");
  train->fallthrough();
  train->add_option("--source", train_args.source, "Source domain CSV")->required();
  train->add_option("--target", train_args.target, "Target domain CSV")->required();
  train->add_option("--out,-o", train_args.out, "Output directory")->required();
  train->add_option("--method,-m", train_args.method, "mmd, cmmd, lowrank or coral")
      ->capture_default_str();
  train->add_option("--seed,-s", train_args.seed, "Root seed")->capture_default_str();
  add_split_opts(train, train_args.split);
  add_sgd_opts(train, train_args.sgd);
  train->add_option("--lambda", train_args.lambda,
                    "Adaptation trade-off weight (default depends on the method)");
  train->add_option("--warmup", train_args.warmup,
                    "Epochs before the adaptation term switches on")
      ->capture_default_str();
  train->add_flag("--no-pseudo-refresh", train_args.no_pseudo_refresh,
                  "Freeze cmmd pseudo-labels after the first estimate");
  train->add_option("--alm-iters", train_args.alm_iters,
                    "Low-rank solver iterations during training");
  train->add_option("--alm-lambda-e", train_args.alm_lambda_e,
                    "Low-rank sparse-term weight");
  train->callback([&train_args] { cmd_train(train_args); });

  StackArgs stack_args;
  CLI::App* stack = app.add_subcommand("stack", "Train all three bases plus the meta learner");
  stack->fallthrough();
  add_stack_opts(stack, stack_args);
  stack->callback([&stack_args] { cmd_stack(stack_args); });

  StackArgs ablate_args;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "Fit the stack and tabulate each base against the combination");
  ablate->fallthrough();
  add_stack_opts(ablate, ablate_args);
  ablate->callback([&ablate_args] { cmd_ablate(ablate_args); });

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Score a saved checkpoint on a labeled CSV");
  eval->fallthrough();
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint JSON")->required();
  eval->add_option("--data", eval_args.data, "Labeled CSV to score")->required();
  eval->add_option("--out,-o", eval_args.out, "Output directory")->required();
  eval->callback([&eval_args] { cmd_eval(eval_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NoOverlappingClassError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace dastack::cli
