#include "malis/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>

#include "malis/graph.hpp"

namespace malis {

namespace {

constexpr int kWindowRetries = 10;
constexpr int kBalancedTries = 10000;

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

void apply_update(Params32& params, std::span<const float> direction, double scale) {
  const auto step = static_cast<float>(scale);
  auto flat = params.flat();
  for (std::size_t k = 0; k < flat.size(); ++k) flat[k] -= step * direction[k];
}

/// Evaluates the loss of one edge and, if its gradient is nonzero, descends on it.
void train_edge(Params32& params, const TrainingImage& image, std::size_t pixel,
                std::uint32_t edge_dim, double affinity, const TrainConfig& cfg, StepResult& result) {
  result.affinity = affinity;
  result.loss = loss_value(cfg.loss, result.target, affinity);
  const double dloss = loss_grad(cfg.loss, result.target, affinity);
  if (dloss == 0.0) return;
  const auto edge = backward_edge(params, image.padded.patch(pixel), edge_dim, 1.0f);
  apply_update(params, edge.gradient, cfg.learning_rate * dloss);
  result.updated = true;
}

}  // namespace

TrainMode parse_train_mode(const std::string& name) {
  if (name == "standard") return TrainMode::Standard;
  if (name == "malis") return TrainMode::Malis;
  throw std::invalid_argument("unknown training mode '" + name + "'");
}

std::string to_string(TrainMode mode) { return mode == TrainMode::Malis ? "malis" : "standard"; }

void TrainConfig::validate() const {
  arch.validate();
  loss.validate();
  if (iterations == 0) throw ConfigError("iterations must be > 0");
  if (pretrain_iterations > iterations) throw ConfigError("pretrain iterations exceed the budget");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (window < arch.field_of_view())
    throw ConfigError("window " + std::to_string(window) + " is smaller than the field of view " +
                      std::to_string(arch.field_of_view()));
  if (snapshot_every == 0) throw ConfigError("snapshot interval must be > 0");
}

PairSample pair_sampler(const Segmentation& truth, Rng& rng, bool balanced) {
  std::vector<std::uint32_t> labeled;
  std::map<std::uint32_t, std::size_t> sizes;
  for (std::uint32_t i = 0; i < truth.shape().size(); ++i)
    if (truth[i] != 0) {
      labeled.push_back(i);
      ++sizes[truth[i]];
    }
  if (labeled.size() < 2) throw std::invalid_argument("pair sampling needs two labeled pixels");

  auto draw = [&] {
    const std::size_t a = uniform_index(rng, labeled.size());
    std::size_t b = uniform_index(rng, labeled.size() - 1);
    if (b >= a) ++b;
    const std::uint32_t i = labeled[a], j = labeled[b];
    return PairSample{i, j, truth[i] == truth[j] ? 1 : 0, false};
  };
  if (!balanced) return draw();

  const int wanted = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
  const bool has_connected =
      std::any_of(sizes.begin(), sizes.end(), [](const auto& s) { return s.second >= 2; });
  const bool has_disconnected = sizes.size() >= 2;
  if ((wanted == 1 && has_connected) || (wanted == 0 && has_disconnected)) {
    for (int t = 0; t < kBalancedTries; ++t) {
      PairSample s = draw();
      if (s.target == wanted) return s;
    }
  }
  PairSample s = draw();
  s.fell_back = true;
  return s;
}

StepResult standard_step(Params32& params, const TrainingImage& image, Rng& rng,
                         const TrainConfig& cfg) {
  const Shape& shape = image.truth.shape();
  std::size_t total = 0;
  std::vector<std::size_t> per_dim(shape.ndim());
  for (std::size_t d = 0; d < shape.ndim(); ++d) {
    per_dim[d] = shape.size() / shape.dim(d) * (shape.dim(d) - 1);
    total += per_dim[d];
  }
  if (total == 0) throw std::invalid_argument("image has no edges");

  std::size_t r = uniform_index(rng, total);
  std::uint32_t d = 0;
  while (r >= per_dim[d]) r -= per_dim[d++];
  std::size_t i;
  do i = uniform_index(rng, shape.size());
  while (!shape.has_next(i, d));
  const std::size_t j = i + shape.stride(d);

  StepResult result;
  result.pixel_i = static_cast<std::uint32_t>(i);
  result.pixel_j = static_cast<std::uint32_t>(j);
  result.edge_id = d * shape.size() + i;
  result.target = image.truth[i] != 0 && image.truth[i] == image.truth[j] ? 1 : 0;
  const double affinity = forward_patch(params, image.padded.patch(i), d);
  train_edge(params, image, i, d, affinity, cfg, result);
  return result;
}

StepResult malis_step(Params32& params, const TrainingImage& image, Rng& rng, const TrainConfig& cfg) {
  const Shape& shape = image.truth.shape();
  const std::size_t ndim = shape.ndim();

  std::vector<std::uint32_t> origin(ndim), side(ndim);
  std::vector<std::uint32_t> window_labels;
  bool found = false;
  for (int attempt = 0; attempt < kWindowRetries && !found; ++attempt) {
    for (std::size_t d = 0; d < ndim; ++d) {
      side[d] = std::min(cfg.window, shape.dim(d));
      origin[d] = static_cast<std::uint32_t>(uniform_index(rng, shape.dim(d) - side[d] + 1));
    }
    const Shape window_shape(side);
    window_labels.assign(window_shape.size(), 0);
    std::size_t labeled = 0;
    for (std::size_t w = 0; w < window_shape.size(); ++w) {
      std::size_t global = 0;
      for (std::size_t d = 0; d < ndim; ++d)
        global += (origin[d] + window_shape.coord(w, d)) * shape.stride(d);
      window_labels[w] = image.truth[global];
      labeled += window_labels[w] != 0;
    }
    found = labeled >= 2;
  }
  StepResult result;
  if (!found) {
    std::cerr << "warning: no window with two labeled pixels; skipping iteration\n";
    result.skipped = true;
    return result;
  }

  const Shape window_shape(side);
  const Segmentation window_truth(window_shape, std::move(window_labels));
  std::array<std::uint32_t, 3> origin3{0, 0, 0}, extent3{1, 1, 1};
  for (std::size_t d = 0; d < ndim; ++d) {
    origin3[3 - ndim + d] = origin[d];
    extent3[3 - ndim + d] = side[d];
  }
  const AffinityGraph graph = forward_region(params, image.padded, origin3, extent3);

  const PairSample pair = pair_sampler(window_truth, rng, cfg.balanced);
  const MaximinResult mm = maximin_query(graph, pair.i, pair.j, rng);

  auto to_global = [&](std::size_t w) {
    std::size_t global = 0;
    for (std::size_t d = 0; d < ndim; ++d) global += (origin[d] + window_shape.coord(w, d)) * shape.stride(d);
    return global;
  };
  const auto edge_dim = static_cast<std::uint32_t>(mm.edge_id / window_shape.size());
  const std::size_t owner = to_global(mm.edge_id % window_shape.size());

  result.pixel_i = static_cast<std::uint32_t>(to_global(pair.i));
  result.pixel_j = static_cast<std::uint32_t>(to_global(pair.j));
  result.edge_id = edge_dim * shape.size() + owner;
  result.target = pair.target;
  train_edge(params, image, owner, edge_dim, mm.affinity, cfg, result);
  return result;
}

TrainResult train(const TrainConfig& cfg, std::span<const CorpusItem> dataset,
                  std::optional<Params32> initial) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("training needs a non-empty dataset");
  for (const auto& item : dataset) {
    if (item.image.shape().ndim() != cfg.arch.ndim)
      throw ConfigError("dataset dimensionality does not match the classifier");
    if (cfg.mode == TrainMode::Malis)
      for (auto d : item.image.shape().dims())
        if (d < cfg.window) throw ConfigError("dataset image smaller than the training window");
  }

  Rng rng(cfg.seed);
  TrainResult result;
  if (initial) {
    if (!(initial->architecture() == cfg.arch))
      throw ConfigError("initial parameters do not match the configured architecture");
    result.params = std::move(*initial);
  } else {
    result.params = Params32::random(cfg.arch, rng);
  }

  std::vector<TrainingImage> images;
  images.reserve(dataset.size());
  for (const auto& item : dataset) images.emplace_back(item.image, item.truth, cfg.arch.radius());

  if (cfg.snapshot_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*cfg.snapshot_dir, ec);
    if (ec) throw IoError(cfg.snapshot_dir->string(), ec.message());
  }

  const auto start = std::chrono::steady_clock::now();
  double loss_sum = 0.0;
  std::uint64_t loss_count = 0;
  for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
    const TrainMode mode = t < cfg.pretrain_iterations ? TrainMode::Standard : cfg.mode;
    const TrainingImage& image = images[uniform_index(rng, images.size())];
    const StepResult step = mode == TrainMode::Standard ? standard_step(result.params, image, rng, cfg)
                                                        : malis_step(result.params, image, rng, cfg);
    if (step.skipped) {
      ++result.skipped_iterations;
    } else {
      loss_sum += step.loss;
      ++loss_count;
    }

    const std::uint64_t done = t + 1;
    if (done % cfg.snapshot_every == 0 || done == cfg.iterations) {
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.log.push_back({done, loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0,
                            mode, elapsed});
      loss_sum = 0.0;
      loss_count = 0;
      if (cfg.snapshot_dir) {
        char name[64];
        std::snprintf(name, sizeof name, "snapshot_%09llu.mlwt", static_cast<unsigned long long>(done));
        write_checkpoint(*cfg.snapshot_dir / name, result.params);
      }
    }
  }
  return result;
}

void write_train_log(const std::filesystem::path& path, std::span<const TrainRecord> log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  auto number = [](double v) {
    char buffer[32];
    auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
    return std::string(buffer, end);
  };
  out << "iteration,mean_loss,mode,elapsed_s\n";
  for (const auto& r : log)
    out << r.iteration << ',' << number(r.mean_loss) << ',' << to_string(r.mode) << ','
        << number(r.elapsed_s) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace malis
