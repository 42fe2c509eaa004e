#include "malis/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include "malis/evaluation.hpp"
#include "malis/gradcheck.hpp"
#include "malis/graph.hpp"
#include "malis/synthgen.hpp"
#include "malis/trainer.hpp"

namespace malis {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Option name of a `--key` or `--key=value` argument, empty otherwise.
std::string flag_name(const std::string& arg) {
  if (arg.rfind("--", 0) != 0) return "";
  return arg.substr(2, arg.find('=') == std::string::npos ? std::string::npos : arg.find('=') - 2);
}

std::string find_config_path(const std::vector<std::string>& args) {
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) return args[k + 1];
    if (args[k].rfind("--config=", 0) == 0) return args[k].substr(9);
  }
  return "";
}

struct Flags {
  // synth
  std::vector<std::uint32_t> dims{64, 64};
  std::size_t count = 1;
  std::uint32_t n_seeds = 12;
  double boundary_width = 2.0;
  double noise = 0.1;
  double gap = 0.1;
  // shared
  std::uint64_t seed = 1;
  std::string out;
  std::string manifest;
  std::string config;
  // train
  std::string mode = "malis";
  std::uint64_t iters = 20000;
  std::uint64_t pretrain = 0;
  double eta = 0.05;
  std::uint32_t window = 32;
  double margin = 0.3;
  std::string loss = "square-square";
  bool balanced = false;
  std::uint64_t snapshot = 1000;
  std::uint32_t layers = 3;
  std::uint32_t maps = 4;
  std::uint32_t k = 5;
  // segment / evaluate
  std::string checkpoint;
  std::string image;
  std::string affinities;
  double theta = 0.5;
  std::vector<double> thetas;
  bool no_mask = false;
  // gradcheck
  double tol = 1e-5;
  int bits = 64;
  std::size_t cases = 20;
};

int cmd_synth(const Flags& f, std::ostream& out) {
  SynthConfig cfg;
  cfg.dims = f.dims;
  cfg.n_seeds = f.n_seeds;
  cfg.boundary_width = f.boundary_width;
  cfg.noise_sigma = f.noise;
  cfg.gap_probability = f.gap;
  cfg.seed = f.seed;
  generate_corpus(cfg, f.count, f.out);
  out << "wrote " << f.count << " image/label pairs and manifest.txt to " << f.out << "\n";
  return kExitOk;
}

int cmd_train(const Flags& f, std::ostream& out) {
  const auto dataset = read_manifest(f.manifest);
  if (dataset.empty()) throw ConfigError("manifest lists no images");
  TrainConfig cfg;
  cfg.mode = parse_train_mode(f.mode);
  cfg.iterations = f.iters;
  cfg.pretrain_iterations = cfg.mode == TrainMode::Malis ? f.pretrain : 0;
  cfg.learning_rate = f.eta;
  cfg.window = f.window;
  cfg.loss = {parse_loss_kind(f.loss), f.margin};
  cfg.seed = f.seed;
  cfg.snapshot_every = f.snapshot;
  cfg.balanced = f.balanced;
  cfg.arch = {static_cast<std::uint32_t>(dataset.front().image.shape().ndim()), f.layers, f.maps, f.k};
  const std::filesystem::path out_dir = f.out;
  cfg.snapshot_dir = out_dir / "snapshots";

  const TrainResult result = train(cfg, dataset);
  for (const auto& r : result.log)
    out << "iter " << r.iteration << " [" << to_string(r.mode) << "] mean loss " << r.mean_loss << "\n";
  if (result.skipped_iterations)
    out << "skipped " << result.skipped_iterations << " iterations without labeled windows\n";
  write_checkpoint(out_dir / "checkpoint.mlwt", result.params);
  write_train_log(out_dir / "train_log.csv", result.log);
  out << "wrote " << (out_dir / "checkpoint.mlwt").string() << " and train_log.csv\n";
  return kExitOk;
}

int cmd_segment(const Flags& f, std::ostream& out) {
  const Params32 params = read_checkpoint(f.checkpoint);
  const Image image = read_tensor(f.image);
  const AffinityGraph g = forward_image(params, image);
  if (!f.affinities.empty()) write_affinities(f.affinities, g);
  const Segmentation seg = segment(g, f.theta);
  write_labels(f.out, seg);
  const auto segments = *std::max_element(seg.labels().begin(), seg.labels().end());
  out << "segmented into " << segments << " segments at theta " << f.theta << "\n";
  return kExitOk;
}

int cmd_evaluate(const Flags& f, std::ostream& out) {
  const Params32 params = read_checkpoint(f.checkpoint);
  const auto dataset = read_manifest(f.manifest);
  const std::vector<double> thetas = f.thetas.empty() ? threshold_grid(0.02) : f.thetas;
  const DatasetSweep result = evaluate_dataset(params, dataset, thetas, !f.no_mask);
  write_sweep_csv(f.out, result.points);
  const CurvePoint& best = result.best();
  out << "best theta " << best.theta << ": rand error " << best.rand_error() << ", splits "
      << best.split_merge.splits << ", mergers " << best.split_merge.mergers << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Flags& f, std::ostream& out, std::ostream& err) {
  double tol = f.tol;
  double step = 1e-6;
  if (f.bits == 32) {
    err << "warning: 32-bit gradient check is imprecise; tolerance loosened to 1e-2\n";
    tol = std::max(tol, 1e-2);
    step = 1e-3;
  }
  const GradcheckReport report = gradient_check(f.seed, f.cases, f.bits, step);
  const double worst = report.max_relative_error();
  out << "max relative error " << worst << " over " << report.cases.size() << " cases (tol " << tol
      << ")\n";
  if (!(worst < tol)) {
    out << "worst: " << report.worst().describe() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

std::vector<std::string> merge_config_file(const std::vector<std::string>& args,
                                           const std::string& config_path) {
  std::ifstream in(config_path);
  if (!in) throw IoError(config_path, "cannot open config file");
  std::set<std::string> given;
  for (const auto& a : args) given.insert(flag_name(a));
  std::vector<std::string> merged = args;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line without '=': " + line);
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key == "config" || given.count(key)) continue;
    merged.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return merged;
}

int run_cli(const std::vector<std::string>& input_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Maximin affinity learning for image segmentation", "malis"};
  app.require_subcommand(1, 1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic image/label corpus");
  synth->add_option("--dims", f.dims, "Grid size, e.g. 64,64")->delimiter(',')->expected(2, 3)->capture_default_str();
  synth->add_option("--count", f.count, "Number of images")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--n-seeds", f.n_seeds, "Voronoi cells per image")->capture_default_str();
  synth->add_option("--boundary-width", f.boundary_width, "Boundary width in pixels")->capture_default_str();
  synth->add_option("--noise", f.noise, "Gaussian noise sigma")->capture_default_str();
  synth->add_option("--gap", f.gap, "Probability a boundary pixel renders bright")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  synth->add_option("--seed", f.seed, "Random seed")->capture_default_str();
  synth->add_option("--out", f.out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train an affinity classifier");
  train_cmd->add_option("--manifest", f.manifest, "Training manifest")->required();
  train_cmd->add_option("--out", f.out, "Output directory")->required();
  train_cmd->add_option("--mode", f.mode, "standard or malis")
      ->check(CLI::IsMember({"standard", "malis"}))->capture_default_str();
  train_cmd->add_option("--iters", f.iters, "Total iterations")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--pretrain", f.pretrain, "Standard warmup iterations (malis mode)")->capture_default_str();
  train_cmd->add_option("--eta", f.eta, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--window", f.window, "MALIS sub-image side")->capture_default_str();
  train_cmd->add_option("--margin", f.margin, "Loss margin")->check(CLI::Range(0.0, 0.4999999))->capture_default_str();
  train_cmd->add_option("--loss", f.loss, "square-square, square or hinge")
      ->check(CLI::IsMember({"square-square", "square", "hinge"}))->capture_default_str();
  train_cmd->add_flag("--balanced", f.balanced, "Class-balanced MALIS pair sampling");
  train_cmd->add_option("--seed", f.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--snapshot", f.snapshot, "Log/checkpoint interval")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--layers", f.layers, "Convolution layers")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--maps", f.maps, "Feature maps per hidden layer")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--k", f.k, "Filter size (odd)")->check(CLI::PositiveNumber)->capture_default_str();

  auto* segment_cmd = app.add_subcommand("segment", "Segment an image with a trained classifier");
  segment_cmd->add_option("--checkpoint", f.checkpoint, "Classifier checkpoint")->required();
  segment_cmd->add_option("--image", f.image, "Input TENSRv01 image")->required();
  segment_cmd->add_option("--theta", f.theta, "Affinity threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  segment_cmd->add_option("--out", f.out, "Output LABLv01 file")->required();
  segment_cmd->add_option("--affinities", f.affinities, "Optional stem for affinity map output");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Sweep thresholds over a labeled corpus");
  evaluate_cmd->add_option("--checkpoint", f.checkpoint, "Classifier checkpoint")->required();
  evaluate_cmd->add_option("--manifest", f.manifest, "Evaluation manifest")->required();
  evaluate_cmd->add_option("--thetas", f.thetas, "Ascending thresholds (default 0,0.02,...,1)")
      ->delimiter(',')->check(CLI::Range(0.0, 1.0));
  evaluate_cmd->add_option("--out", f.out, "Output CSV")->required();
  evaluate_cmd->add_flag("--no-mask", f.no_mask, "Also evaluate pairs touching truth label 0");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gradcheck_cmd->add_option("--seed", f.seed, "Random seed")->capture_default_str();
  gradcheck_cmd->add_option("--tol", f.tol, "Maximum relative error")->capture_default_str();
  gradcheck_cmd->add_option("--bits", f.bits, "Arithmetic width")->check(CLI::IsMember({32, 64}))->capture_default_str();
  gradcheck_cmd->add_option("--cases", f.cases, "Random configurations")->check(CLI::PositiveNumber)->capture_default_str();

  for (auto* sub : {synth, train_cmd, segment_cmd, evaluate_cmd, gradcheck_cmd})
    sub->add_option("--config", f.config, "key=value file merged below command-line flags");

  std::vector<std::string> args = input_args;
  try {
    const std::string config_path = find_config_path(args);
    if (!config_path.empty()) args = merge_config_file(args, config_path);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  out << "# " << sub->get_name() << " configuration\n" << sub->config_to_str(true, false);
  try {
    if (sub == synth) return cmd_synth(f, out);
    if (sub == train_cmd) return cmd_train(f, out);
    if (sub == segment_cmd) return cmd_segment(f, out);
    if (sub == evaluate_cmd) return cmd_evaluate(f, out);
    return cmd_gradcheck(f, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace malis
