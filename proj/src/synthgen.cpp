#include "malis/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "malis/graph.hpp"

namespace malis {

namespace {

constexpr int kMaxAttempts = 200;

Rng derived_rng(std::uint64_t seed, std::uint64_t item, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(item), static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t item) {
  return derived_rng(seed, item, 0)();
}

std::string numbered(const char* stem, std::size_t k, const char* ext) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%s_%03zu%s", stem, k, ext);
  return buffer;
}

}  // namespace

void SynthConfig::validate() const {
  const Shape shape(dims);
  if (n_seeds < 2) throw std::invalid_argument("need at least 2 seeds");
  if (n_seeds > shape.size() / 4) throw std::invalid_argument("too many seeds for the grid");
  if (!(boundary_width >= 0.0)) throw std::invalid_argument("boundary width must be >= 0");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (!(gap_probability >= 0.0 && gap_probability <= 1.0))
    throw std::invalid_argument("gap probability must lie in [0,1]");
}

bool labels_connected(const Segmentation& seg) {
  // Number of face-connected components of each label must be one.
  const Shape& shape = seg.shape();
  EdgeList same{shape.size(), {}};
  for (std::size_t d = 0; d < shape.ndim(); ++d)
    for (std::size_t i = 0; i < shape.size(); ++i)
      if (shape.has_next(i, d) && seg[i] != 0 && seg[i] == seg[i + shape.stride(d)])
        same.edges.push_back({static_cast<std::uint32_t>(i),
                              static_cast<std::uint32_t>(i + shape.stride(d)), 1.0f, 0});
  const auto components = connected_components(shape.size(), same);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> seen;  // (label, component)
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (seg[i] == 0) continue;
    auto it = std::find_if(seen.begin(), seen.end(), [&](auto& p) { return p.first == seg[i]; });
    if (it == seen.end()) seen.emplace_back(seg[i], components[i]);
    else if (it->second != components[i]) return false;
  }
  return true;
}

Segmentation generate_truth(const SynthConfig& cfg) {
  cfg.validate();
  const Shape shape(cfg.dims);
  const std::size_t ndim = shape.ndim();
  const double half_width = cfg.boundary_width / 2.0;
  // seeds closer than this are treated as colliding
  const double min_separation = std::max(1.0, cfg.boundary_width + 1.0);
  Rng rng(cfg.seed);

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::vector<double>> seeds;
    int collisions = 0;
    while (seeds.size() < cfg.n_seeds) {
      std::vector<double> p(ndim);
      for (std::size_t d = 0; d < ndim; ++d)
        p[d] = std::uniform_real_distribution<double>(0.0, shape.dim(d))(rng) - 0.5;
      const bool collides = std::any_of(seeds.begin(), seeds.end(), [&](const auto& q) {
        double dist2 = 0;
        for (std::size_t d = 0; d < ndim; ++d) dist2 += (p[d] - q[d]) * (p[d] - q[d]);
        return dist2 < min_separation * min_separation;
      });
      if (collides) {
        if (++collisions > 10000) throw std::runtime_error("cannot place non-colliding seeds");
        continue;
      }
      seeds.push_back(std::move(p));
    }

    std::vector<std::uint32_t> labels(shape.size(), 0);
    std::vector<double> dist2(cfg.n_seeds);
    for (std::size_t i = 0; i < shape.size(); ++i) {
      for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
        double acc = 0;
        for (std::size_t d = 0; d < ndim; ++d) {
          const double delta = shape.coord(i, d) - seeds[s][d];
          acc += delta * delta;
        }
        dist2[s] = acc;
      }
      const auto nearest = static_cast<std::size_t>(std::min_element(dist2.begin(), dist2.end()) - dist2.begin());
      // distance to the cell border is the distance to the nearest bisector
      double border = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
        if (s == nearest) continue;
        double sep2 = 0;
        for (std::size_t d = 0; d < ndim; ++d)
          sep2 += (seeds[s][d] - seeds[nearest][d]) * (seeds[s][d] - seeds[nearest][d]);
        border = std::min(border, (dist2[s] - dist2[nearest]) / (2.0 * std::sqrt(sep2)));
      }
      labels[i] = border < half_width ? 0 : static_cast<std::uint32_t>(nearest + 1);
    }

    Segmentation truth(shape, std::move(labels));
    std::vector<bool> present(cfg.n_seeds + 1, false);
    for (auto l : truth.labels()) present[l] = true;
    if (!std::all_of(present.begin() + 1, present.end(), [](bool b) { return b; })) continue;
    if (!labels_connected(truth)) continue;
    return truth;
  }
  throw std::runtime_error("could not generate a valid ground truth in " +
                           std::to_string(kMaxAttempts) + " attempts");
}

Image render_image(const Segmentation& truth, const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  std::bernoulli_distribution gap(cfg.gap_probability);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  std::vector<float> values(truth.shape().size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    float v = truth[i] == 0 ? kBoundaryIntensity : kInteriorIntensity;
    if (truth[i] == 0 && gap(rng)) v = kInteriorIntensity;
    values[i] = v;
  }
  if (cfg.noise_sigma > 0.0)
    for (auto& v : values) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
  return Image(truth.shape(), std::move(values));
}

std::vector<CorpusItem> make_corpus(const SynthConfig& cfg, std::size_t count) {
  if (count == 0) throw std::invalid_argument("corpus count must be >= 1");
  cfg.validate();
  std::vector<CorpusItem> items;
  items.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    SynthConfig item_cfg = cfg;
    item_cfg.seed = derived_seed(cfg.seed, k);
    Segmentation truth = generate_truth(item_cfg);
    Rng render_rng = derived_rng(cfg.seed, k, 1);
    Image image = render_image(truth, item_cfg, render_rng);
    items.push_back({std::move(image), std::move(truth)});
  }
  return items;
}

std::vector<CorpusItem> generate_corpus(const SynthConfig& cfg, std::size_t count,
                                        const std::filesystem::path& out_dir) {
  auto items = make_corpus(cfg, count);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string(), ec.message());
  const auto manifest_path = out_dir / "manifest.txt";
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!manifest) throw IoError(manifest_path.string(), "cannot open for writing");
  for (std::size_t k = 0; k < items.size(); ++k) {
    const std::string image_name = numbered("image", k, ".tensor");
    const std::string label_name = numbered("labels", k, ".labels");
    write_tensor(out_dir / image_name, items[k].image);
    write_labels(out_dir / label_name, items[k].truth);
    manifest << image_name << '\t' << label_name << '\n';
  }
  manifest.close();
  if (!manifest) throw IoError(manifest_path.string(), "write failed");
  return items;
}

std::vector<CorpusItem> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError(manifest.string(), "cannot open manifest");
  const auto base = manifest.parent_path();
  std::vector<CorpusItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("manifest", manifest.string() + ":" + std::to_string(line_no) + ": missing tab");
    std::filesystem::path image_path = line.substr(0, tab), label_path = line.substr(tab + 1);
    if (image_path.is_relative()) image_path = base / image_path;
    if (label_path.is_relative()) label_path = base / label_path;
    CorpusItem item{read_tensor(image_path), read_labels(label_path)};
    if (!(item.image.shape() == item.truth.shape()))
      throw FormatError("manifest", manifest.string() + ":" + std::to_string(line_no) +
                                        ": image and labels differ in size");
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace malis
