#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "malis/classifier.hpp"

namespace malis {

/// One randomly drawn (network, patch, edge, target, loss) configuration.
struct GradcheckCase {
  Architecture arch;
  LossSpec loss;
  std::uint32_t edge_dim = 0;
  int target = 0;
  /// ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double relative_error = 0.0;
  /// Parameter with the largest absolute disagreement.
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  std::string describe() const;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_relative_error() const;
  const GradcheckCase& worst() const;
};

/// Compares the analytic gradient of loss(forward_patch) with central finite
/// differences on `count` random configurations. The first case is always
/// square-square with margin 0.3. bits selects 64- or 32-bit arithmetic;
/// step is the finite-difference step.
GradcheckReport gradient_check(std::uint64_t seed, std::size_t count, int bits, double step);

}  // namespace malis
