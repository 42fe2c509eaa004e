#pragma once

#include <span>
#include <vector>

#include "malis/classifier.hpp"
#include "malis/metrics.hpp"
#include "malis/synthgen.hpp"

namespace malis {

/// Threshold sweep pooled over a dataset: pair counts and split/merge tallies
/// are summed over images at each theta.
struct DatasetSweep {
  std::vector<CurvePoint> points;

  /// Point with the lowest pooled rand error (lowest theta on ties).
  const CurvePoint& best() const;
};

DatasetSweep evaluate_dataset(const Params32& params, std::span<const CorpusItem> dataset,
                              std::span<const double> thetas, bool mask_zero = true);

}  // namespace malis
