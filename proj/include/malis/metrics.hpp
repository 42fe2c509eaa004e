#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "malis/maximin.hpp"

namespace malis {

/// Unordered evaluated pixel pairs by (truth connected, predicted connected).
struct PairCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  /// Fraction of evaluated pairs on which truth and prediction disagree.
  double rand_error() const;
  double tpr() const;
  double fpr() const;
  double precision() const;
  double recall() const { return tpr(); }

  PairCounts& operator+=(const PairCounts& other);
  bool operator==(const PairCounts&) const = default;
};

struct SplitMerge {
  std::uint64_t splits = 0;
  std::uint64_t mergers = 0;
  bool operator==(const SplitMerge&) const = default;
};

/// One threshold of a sweep: pair counts plus the split/merge tally of segment(g, theta).
struct CurvePoint {
  double theta = 0.0;
  PairCounts counts;
  SplitMerge split_merge;

  double rand_error() const { return counts.rand_error(); }
};

/// Pair counts between two labelings. Label 0 in either labeling is never
/// connected to anything. With mask_zero, pairs touching a truth-0 pixel are
/// excluded. Counts come from the overlap contingency table, never from a
/// pair loop.
PairCounts pair_counts(const Segmentation& truth, const Segmentation& pred, bool mask_zero = true);

/// Throws EmptyEvaluation when no pair is evaluated.
double rand_error(const Segmentation& truth, const Segmentation& pred, bool mask_zero = true);

/// Prediction is H(A*_ij - theta) over the maximin forest of g.
PairCounts pair_counts_at_threshold(const Segmentation& truth, const AffinityGraph& g, double theta,
                                    bool mask_zero = true);
PairCounts pair_counts_at_threshold(const Segmentation& truth, const MaximinForest& forest,
                                    double theta, bool mask_zero = true);

/// Builds the forest once and evaluates every theta (ascending order required).
std::vector<CurvePoint> sweep(const Segmentation& truth, const AffinityGraph& g,
                              std::span<const double> thetas, bool mask_zero = true);

SplitMerge split_merge_counts(const Segmentation& truth, const Segmentation& pred);

/// 0, step, 2*step, ... up to 1 inclusive.
std::vector<double> threshold_grid(double step);

/// Header `theta,rand_error,tpr,fpr,precision,recall,splits,mergers`.
void write_sweep_csv(const std::filesystem::path& path, std::span<const CurvePoint> points);

}  // namespace malis
