// salnet command-line driver: train, predict, eval, pr-curve, gradcheck.
// Exit codes: 0 success, 1 check/assertion failure, 2 usage or I/O error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "salnet/autograd.hpp"
#include "salnet/checkpoint.hpp"
#include "salnet/data.hpp"
#include "salnet/error.hpp"
#include "salnet/eval.hpp"
#include "salnet/gradcheck_suite.hpp"
#include "salnet/model.hpp"
#include "salnet/parallel.hpp"
#include "salnet/train.hpp"

namespace fs = std::filesystem;
using namespace salnet;

namespace {

// Every effective value is echoed at startup so runs are reproducible from
// their logs alone.
void echo_config(const CLI::App* cmd) {
  std::cout << "[config] command = " << cmd->get_name() << "\n";
  for (const CLI::Option* opt : cmd->get_options()) {
    std::string name = opt->get_name(false, true);
    if (name.empty() || name == "--help" || name == "--config") continue;
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    std::string value;
    if (opt->count() > 0) {
      const auto& rs = opt->results();
      for (std::size_t i = 0; i < rs.size(); ++i) value += (i ? "," : "") + rs[i];
    } else {
      value = opt->get_default_str();
    }
    if (value.empty()) value = "(unset)";
    std::cout << "[config] " << name << " = " << value << "\n";
  }
}

void apply_threads(int threads) {
  if (threads > 0) set_max_threads(threads);
}

NormalizeConfig make_normalize(const std::vector<float>& means) {
  NormalizeConfig n;
  for (std::size_t i = 0; i < 3 && i < means.size(); ++i) n.means[i] = means[i];
  return n;
}

struct TrainArgs {
  std::string manifest;
  std::string out_checkpoint;
  std::string weights;
  std::string log_path;
  bool freeze = true;
  int epochs = 20;
  int batch_size = 20;
  float lr = 1e-4f;
  std::uint64_t seed = 0;
  double channel_scale = 1.0;
  int train_size = 224;
  std::string pool = "average";
  bool no_decoder_bn = false;
  bool no_decoder_relu = false;
  bool binarize_masks = false;
  int checkpoint_every = 0;
  std::vector<float> means = {0.485f, 0.456f, 0.406f};
  int threads = 0;
};

int run_train(const TrainArgs& a) {
  apply_threads(a.threads);
  ModelConfig config;
  config.channel_scale = a.channel_scale;
  config.encoder_pool_kind = a.pool == "max" ? PoolKind::max : PoolKind::average;
  config.decoder_batch_norm = !a.no_decoder_bn;
  config.decoder_relu = !a.no_decoder_relu;
  auto [model, params] = Model::build(config, a.seed);

  if (!a.weights.empty()) {
    const ImportReport report = import_weights(params, a.weights);
    std::cout << "imported " << report.matched.size() << " tensors, skipped "
              << report.skipped.size() << ", missing " << report.missing.size() << "\n";
    for (const auto& [name, reason] : report.skipped) {
      std::cout << "  skipped " << name << ": " << reason << "\n";
    }
  }
  if (a.freeze) freeze_encoder(params);

  const Manifest manifest = load_manifest(a.manifest);
  SampleOptions options;
  options.target_h = options.target_w = a.train_size;
  options.normalize = make_normalize(a.means);
  options.binarize_mask = a.binarize_masks;
  ManifestDataset dataset(manifest, options);

  TrainConfig train;
  train.epochs = a.epochs;
  train.batch_size = a.batch_size;
  train.adam.lr = a.lr;
  train.shuffle_seed = a.seed;
  train.checkpoint_every = a.checkpoint_every;
  train.checkpoint_path = a.out_checkpoint;

  std::ofstream log;
  if (!a.log_path.empty()) {
    log.open(a.log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open log for writing: " + a.log_path);
    log << "epoch,step,loss\n";
  }
  AdamState adam(train.adam);
  fit(model, params, dataset, train, &adam, [&](const StepRecord& r) {
    std::ostringstream line;
    line << r.epoch << "," << r.step << "," << std::fixed << std::setprecision(6) << r.loss;
    std::cout << line.str() << "\n";
    if (log) log << line.str() << "\n";
  });
  save_checkpoint(params, config, &adam, a.out_checkpoint);
  std::cout << "checkpoint written to " << a.out_checkpoint << "\n";
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::string out_dir;
  std::vector<float> means = {0.485f, 0.456f, 0.406f};
  int threads = 0;
};

int run_predict(const PredictArgs& a) {
  apply_threads(a.threads);
  const LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
  const Model model(ckpt.config);
  const NormalizeConfig norm = make_normalize(a.means);

  std::vector<std::string> inputs;
  if (fs::is_directory(a.input)) {
    for (const auto& e : fs::directory_iterator(a.input)) {
      const std::string ext = e.path().extension().string();
      if (ext == ".ppm" || ext == ".pgm") inputs.push_back(e.path().string());
    }
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw UsageError("no .ppm/.pgm inputs in " + a.input);
  } else if (fs::exists(a.input)) {
    inputs.push_back(a.input);
  } else {
    throw IoError("input not found: " + a.input);
  }

  fs::create_directories(a.out_dir);
  int ok = 0;
  for (const std::string& path : inputs) {
    try {
      const ImageBuffer image = read_image(path);
      const Tensor x = normalize(image, norm);
      const Tensor map = model.forward(ckpt.params, x, Mode::infer);
      const fs::path out = fs::path(a.out_dir) / (fs::path(path).stem().string() + ".pgm");
      write_image(tensor_to_gray(map), out.string());
      std::cout << path << " -> " << out.string() << "\n";
      ++ok;
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
    }
  }
  if (ok == 0) throw UsageError("no input could be processed");
  return 0;
}

struct EvalArgs {
  std::string pred_dir;
  std::string manifest;
  double threshold = 0.5;
  double beta_squared = 0.09;
  std::string out;
  int pr_points = 0;
  int threads = 0;
};

int run_eval(const EvalArgs& a) {
  apply_threads(a.threads);
  const Manifest manifest = load_manifest(a.manifest);
  EvalConfig config;
  config.threshold = a.threshold;
  config.beta_squared = a.beta_squared;
  config.pr_thresholds = a.pr_points;
  const MetricsReport report =
      evaluate_dataset(directory_map_source(a.pred_dir), manifest, config);
  for (const std::string& s : report.skipped) {
    std::cout << "skipped (no prediction): " << s << "\n";
  }
  if (report.per_image.empty()) {
    throw UsageError("no prediction in " + a.pred_dir + " matches any manifest image");
  }
  const std::string csv = metrics_csv(report);
  if (!a.out.empty()) {
    std::ofstream f(a.out, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + a.out);
    f << csv;
  } else {
    std::cout << csv;
  }
  const ImageMetrics& avg = report.average;
  std::cout << "__average__ precision=" << std::fixed << std::setprecision(6) << avg.precision
            << " recall=" << avg.recall << " f_measure=" << avg.f_measure << " mae=" << avg.mae
            << "\n";
  return 0;
}

struct PrCurveArgs {
  std::string pred_dir;
  std::string manifest;
  int points = 256;
  std::string out;
  int threads = 0;
};

int run_pr_curve(const PrCurveArgs& a) {
  apply_threads(a.threads);
  if (a.points < 2) throw UsageError("--points must be >= 2");
  const Manifest manifest = load_manifest(a.manifest);
  EvalConfig config;
  config.pr_thresholds = a.points;
  const MetricsReport report =
      evaluate_dataset(directory_map_source(a.pred_dir), manifest, config);
  for (const std::string& s : report.skipped) {
    std::cout << "skipped (no prediction): " << s << "\n";
  }
  if (report.per_image.empty()) {
    throw UsageError("no prediction in " + a.pred_dir + " matches any manifest image");
  }
  const std::string csv = pr_curve_csv(report.pr_curve);
  if (!a.out.empty()) {
    std::ofstream f(a.out, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + a.out);
    f << csv;
    std::cout << "pr curve written to " << a.out << "\n";
  } else {
    std::cout << csv;
  }
  return 0;
}

struct GradcheckArgs {
  double epsilon = 1e-2;
  std::uint64_t seed = 7;
  int cases = 5;
  double channel_scale = 0.03125;  // full-model composition check
  bool corrupt = false;
  int threads = 0;
};

// Wiring check over the whole network. Central differences over every weight
// would cost #params x 2 forwards, so only a spread of representative tensors
// is perturbed; every backward rule itself is covered by the per-op problems.
// Narrow random nets can die under relu (all-zero feature maps leave nothing
// for finite differences to resolve), so seeds are retried until the output
// has real spread.
GradCheckProblem<float> full_model_problem(double channel_scale, std::uint64_t seed) {
  ModelConfig config;
  config.channel_scale = channel_scale;

  for (int attempt = 0;; ++attempt) {
    auto [model, store] = Model::build(config, seed + static_cast<std::uint64_t>(attempt));
    Rng rng(seed + static_cast<std::uint64_t>(attempt) + 13);
    Tensor input = rand_tensor<float>(rng, 1, 3, 32, 32, -0.5f, 0.5f);
    const Tensor probe = model.forward(store, input, Mode::infer);
    float lo = probe[0], hi = probe[0];
    for (std::int64_t i = 0; i < probe.size(); ++i) {
      lo = std::min(lo, probe[i]);
      hi = std::max(hi, probe[i]);
    }
    if (hi - lo < 0.01f && attempt < 20) continue;

    const std::vector<std::string> perturbed = {
        "encoder.stage1.conv1.weight", "encoder.stage3.conv2.bias",
        "encoder.stage5.conv3.bias",   "decoder.stage2.tconv.weight",
        "decoder.stage3.bn.gamma",     "decoder.stage5.tconv.bias",
        "decoder.stage5.bn.beta",      "head.conv.weight",
        "head.conv.bias"};
    GradCheckProblem<float> p;
    p.name = "model[scale=" + std::to_string(channel_scale) + "]";
    for (const std::string& name : perturbed) {
      p.param_names.push_back(name);
      p.params.push_back(store.value(name));
    }
    Tensor target(1, 1, 32, 32);
    for (std::int64_t i = 0; i < target.size(); ++i) {
      target[i] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
    }
    p.build = [model = Model(config), store = store, perturbed, input, target](
                  Tape& tape, const std::vector<Var>& vars) {
      std::map<std::string, Var> leaves;
      for (const std::string& name : store.names()) {
        if (store.entry(name).buffer) continue;
        leaves.emplace(name, tape.leaf(store.value(name)));
      }
      for (std::size_t i = 0; i < perturbed.size(); ++i) {
        leaves.insert_or_assign(perturbed[i], vars[i]);
      }
      // Infer-mode batch norm (fresh 0/1 running stats): the train-mode rule
      // is covered by the per-op problems.
      const Var out = model.forward_traced(tape, leaves, input, Mode::infer, nullptr);
      return l1_loss(tape, out, target);
    };
    return p;
  }
}

int run_gradcheck(const GradcheckArgs& a) {
  apply_threads(a.threads);
  if (a.epsilon <= 0.0) throw UsageError("--epsilon must be > 0");
  g_corrupt_relu_backward.store(a.corrupt);

  struct Row {
    std::string name;
    double worst;
    double tolerance;
    bool passed;
  };
  std::vector<Row> rows;
  const auto run = [&rows](const GradCheckReport& r) {
    rows.push_back({r.name, r.worst, r.tolerance, r.passed});
  };

  for (const auto& p : standard_gradcheck_problems<float>(a.cases, a.seed)) {
    run(grad_check(p, a.epsilon, 1e-2));
  }
  for (const auto& p : standard_gradcheck_problems<double>(a.cases, a.seed)) {
    run(grad_check(p, a.epsilon, 1e-4));
  }
  run(grad_check(make_tiny_model_problem<float>(a.seed), a.epsilon, 1e-2));
  run(grad_check(make_tiny_model_problem<double>(a.seed), a.epsilon, 1e-3));
  run(grad_check(full_model_problem(a.channel_scale, a.seed), a.epsilon, 1e-2));
  g_corrupt_relu_backward.store(false);

  bool all_passed = true;
  double worst = 0.0;
  std::string worst_name;
  for (const Row& r : rows) {
    std::cout << (r.passed ? "ok   " : "FAIL ") << std::left << std::setw(34) << r.name
              << " max_rel_err=" << std::scientific << std::setprecision(3) << r.worst
              << " tol=" << r.tolerance << "\n";
    if (!r.passed && r.worst > worst) {
      worst = r.worst;
      worst_name = r.name;
    }
    all_passed = all_passed && r.passed;
  }
  if (!all_passed) {
    std::cout << "gradcheck FAILED; worst offender: " << worst_name << " ("
              << std::scientific << worst << ")\n";
    return 1;
  }
  std::cout << "gradcheck passed (" << rows.size() << " checks)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"salnet: fully convolutional saliency detection"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a manifest dataset");
  train_cmd->set_config("--config", "", "key=value config file; flags take precedence");
  train_cmd->add_option("--manifest", train_args.manifest, "dataset manifest file")->required();
  train_cmd->add_option("--out-checkpoint", train_args.out_checkpoint, "final checkpoint path")
      ->required();
  train_cmd->add_option("--weights", train_args.weights, "FCNW1 container to import first");
  train_cmd->add_flag("--freeze-encoder,!--no-freeze-encoder", train_args.freeze,
                      "freeze encoder parameters")
      ->capture_default_str();
  train_cmd->add_option("--epochs", train_args.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", train_args.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", train_args.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed, "init and shuffle seed")
      ->capture_default_str();
  train_cmd->add_option("--channel-scale", train_args.channel_scale)->capture_default_str();
  train_cmd->add_option("--train-size", train_args.train_size, "square training resolution")
      ->capture_default_str();
  train_cmd->add_option("--pool", train_args.pool, "encoder pooling: average or max")
      ->check(CLI::IsMember({"average", "max"}))
      ->capture_default_str();
  train_cmd->add_flag("--no-decoder-bn", train_args.no_decoder_bn,
                      "disable decoder batch norm");
  train_cmd->add_flag("--no-decoder-relu", train_args.no_decoder_relu,
                      "disable decoder activations");
  train_cmd->add_flag("--binarize-masks", train_args.binarize_masks,
                      "threshold training masks at 0.5");
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every,
                        "write a rolling checkpoint every N epochs")
      ->capture_default_str();
  train_cmd->add_option("--log", train_args.log_path, "write the step CSV log here");
  train_cmd->add_option("--means", train_args.means, "input normalization means (r,g,b)")
      ->delimiter(',')
      ->expected(3)
      ->capture_default_str();
  train_cmd->add_option("--threads", train_args.threads, "kernel threads; 1 = deterministic")
      ->capture_default_str();

  PredictArgs predict_args;
  CLI::App* predict_cmd =
      app.add_subcommand("predict", "export saliency maps for images");
  predict_cmd->set_config("--config", "", "key=value config file; flags take precedence");
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint)->required();
  predict_cmd->add_option("--input", predict_args.input, "image file or directory")
      ->required();
  predict_cmd->add_option("--out-dir", predict_args.out_dir)->required();
  predict_cmd->add_option("--means", predict_args.means, "input normalization means (r,g,b)")
      ->delimiter(',')
      ->expected(3)
      ->capture_default_str();
  predict_cmd->add_option("--threads", predict_args.threads)->capture_default_str();

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  eval_cmd->set_config("--config", "", "key=value config file; flags take precedence");
  eval_cmd->add_option("--pred-dir", eval_args.pred_dir)->required();
  eval_cmd->add_option("--manifest", eval_args.manifest)->required();
  eval_cmd->add_option("--threshold", eval_args.threshold)->capture_default_str();
  eval_cmd->add_option("--beta-squared", eval_args.beta_squared)->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out, "metrics CSV path (stdout when omitted)");
  eval_cmd->add_option("--threads", eval_args.threads)->capture_default_str();

  PrCurveArgs pr_args;
  CLI::App* pr_cmd = app.add_subcommand("pr-curve", "averaged precision-recall sweep");
  pr_cmd->set_config("--config", "", "key=value config file; flags take precedence");
  pr_cmd->add_option("--pred-dir", pr_args.pred_dir)->required();
  pr_cmd->add_option("--manifest", pr_args.manifest)->required();
  pr_cmd->add_option("--points", pr_args.points)->capture_default_str();
  pr_cmd->add_option("--out", pr_args.out, "curve CSV path (stdout when omitted)");
  pr_cmd->add_option("--threads", pr_args.threads)->capture_default_str();

  GradcheckArgs gc_args;
  CLI::App* gc_cmd =
      app.add_subcommand("gradcheck", "finite-difference check of every backward rule");
  gc_cmd->set_config("--config", "", "key=value config file; flags take precedence");
  gc_cmd->add_option("--epsilon", gc_args.epsilon, "central-difference step")
      ->capture_default_str();
  gc_cmd->add_option("--seed", gc_args.seed)->capture_default_str();
  gc_cmd->add_option("--cases", gc_args.cases, "random shapes per op")->capture_default_str();
  gc_cmd->add_option("--channel-scale", gc_args.channel_scale,
                     "width scale for the whole-model check")
      ->capture_default_str();
  gc_cmd->add_flag("--corrupt", gc_args.corrupt,
                   "negative control: break one backward rule; the check must fail");
  gc_cmd->add_option("--threads", gc_args.threads)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* active = app.get_subcommands().front();
  echo_config(active);
  try {
    if (active == train_cmd) return run_train(train_args);
    if (active == predict_cmd) return run_predict(predict_args);
    if (active == eval_cmd) return run_eval(eval_args);
    if (active == pr_cmd) return run_pr_curve(pr_args);
    if (active == gc_cmd) return run_gradcheck(gc_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
