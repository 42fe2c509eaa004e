#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "malis/classifier.hpp"
#include "malis/synthgen.hpp"

namespace malis {

enum class TrainMode { Standard, Malis };

TrainMode parse_train_mode(const std::string& name);
std::string to_string(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::Malis;
  std::uint64_t iterations = 20000;
  /// Standard-mode warmup counted inside `iterations`.
  std::uint64_t pretrain_iterations = 0;
  double learning_rate = 0.05;
  /// Side of the sub-image used for each MALIS iteration.
  std::uint32_t window = 32;
  LossSpec loss;
  std::uint64_t seed = 1;
  std::uint64_t snapshot_every = 1000;
  bool balanced = false;
  Architecture arch;
  /// When set, a checkpoint is written every snapshot_every iterations.
  std::optional<std::filesystem::path> snapshot_dir;

  void validate() const;
};

struct TrainRecord {
  std::uint64_t iteration = 0;
  /// Mean loss over the iterations since the previous record.
  double mean_loss = 0.0;
  TrainMode mode = TrainMode::Standard;
  double elapsed_s = 0.0;
};

/// A training image with its zero-padded copy, prepared once per run.
struct TrainingImage {
  TrainingImage(const Image& image, Segmentation truth, std::uint32_t radius)
      : truth(std::move(truth)), padded(image, radius) {}

  Segmentation truth;
  PaddedImage<float> padded;
};

struct StepResult {
  double loss = 0.0;
  double affinity = 0.0;
  int target = 0;
  /// Trained edge as AffinityGraph::edge_id of the full image grid.
  std::size_t edge_id = 0;
  std::uint32_t pixel_i = 0;
  std::uint32_t pixel_j = 0;
  /// True when the parameters were modified.
  bool updated = false;
  /// MALIS only: no window with two labeled pixels was found.
  bool skipped = false;
};

struct PairSample {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  int target = 0;
  /// Balanced sampling fell back to uniform because a class was absent.
  bool fell_back = false;
};

/// Pair of distinct labeled (>= 1) pixels of `truth`. Uniform over unordered
/// pairs, or with balanced set, target class drawn by a fair coin first.
PairSample pair_sampler(const Segmentation& truth, Rng& rng, bool balanced);

/// One update on a uniformly drawn nearest-neighbor edge.
StepResult standard_step(Params32& params, const TrainingImage& image, Rng& rng,
                         const TrainConfig& cfg);

/// One update through the maximin edge of a random pixel pair inside a random window.
StepResult malis_step(Params32& params, const TrainingImage& image, Rng& rng, const TrainConfig& cfg);

struct TrainResult {
  Params32 params;
  std::vector<TrainRecord> log;
  std::uint64_t skipped_iterations = 0;
};

/// Online SGD: pretrain_iterations standard steps, then cfg.mode steps, each on
/// a uniformly drawn dataset image. Parameters start from `initial` or a
/// seeded random draw.
TrainResult train(const TrainConfig& cfg, std::span<const CorpusItem> dataset,
                  std::optional<Params32> initial = std::nullopt);

/// Header `iteration,mean_loss,mode,elapsed_s`.
void write_train_log(const std::filesystem::path& path, std::span<const TrainRecord> log);

}  // namespace malis
