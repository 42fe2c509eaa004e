#include "malis/evaluation.hpp"

#include <stdexcept>

namespace malis {

const CurvePoint& DatasetSweep::best() const {
  if (points.empty()) throw std::logic_error("empty sweep");
  const CurvePoint* best = &points.front();
  for (const auto& p : points)
    if (p.rand_error() < best->rand_error()) best = &p;
  return *best;
}

DatasetSweep evaluate_dataset(const Params32& params, std::span<const CorpusItem> dataset,
                              std::span<const double> thetas, bool mask_zero) {
  if (dataset.empty()) throw std::invalid_argument("evaluation needs a non-empty dataset");
  DatasetSweep pooled;
  for (const auto& item : dataset) {
    const AffinityGraph g = forward_image(params, item.image);
    const auto points = sweep(item.truth, g, thetas, mask_zero);
    if (pooled.points.empty()) {
      pooled.points = points;
      continue;
    }
    for (std::size_t k = 0; k < points.size(); ++k) {
      pooled.points[k].counts += points[k].counts;
      pooled.points[k].split_merge.splits += points[k].split_merge.splits;
      pooled.points[k].split_merge.mergers += points[k].split_merge.mergers;
    }
  }
  return pooled;
}

}  // namespace malis
