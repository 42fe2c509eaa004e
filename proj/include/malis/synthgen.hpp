#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "malis/imagery.hpp"
#include "malis/maximin.hpp"

namespace malis {

/// Voronoi cells separated by dark boundaries, rendered with noise and with
/// boundary pixels randomly brightened ("gaps").
struct SynthConfig {
  std::vector<std::uint32_t> dims{64, 64};
  std::uint32_t n_seeds = 12;
  double boundary_width = 2.0;
  double noise_sigma = 0.1;
  double gap_probability = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr float kInteriorIntensity = 0.8f;
inline constexpr float kBoundaryIntensity = 0.2f;

/// Labels 1..n_seeds for cell interiors, 0 within boundary_width/2 of a cell
/// border. Deterministic in cfg.seed; regenerates until every cell is present
/// and 4/6-connected.
Segmentation generate_truth(const SynthConfig& cfg);

Image render_image(const Segmentation& truth, const SynthConfig& cfg, Rng& rng);

struct CorpusItem {
  Image image;
  Segmentation truth;
};

/// Item k uses seeds derived from (cfg.seed, k).
std::vector<CorpusItem> make_corpus(const SynthConfig& cfg, std::size_t count);

/// make_corpus plus `image_NNN.tensor`, `labels_NNN.labels` and `manifest.txt`
/// (one `image<TAB>labels` line per item, paths relative to out_dir).
std::vector<CorpusItem> generate_corpus(const SynthConfig& cfg, std::size_t count,
                                        const std::filesystem::path& out_dir);

/// Loads a manifest; relative paths resolve against the manifest's directory.
std::vector<CorpusItem> read_manifest(const std::filesystem::path& manifest);

/// Whether every label >= 1 forms a single face-connected region.
bool labels_connected(const Segmentation& seg);

}  // namespace malis
