#include "malis/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace malis {

namespace {

std::uint64_t choose2(std::uint64_t n) { return n * (n - (n > 0)) / 2; }

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

void check_same_grid(const Shape& a, const Shape& b) {
  if (!(a == b)) throw std::invalid_argument("segmentations have different dimensions");
}

/// Contingency counting shared by label-vs-label and label-vs-forest evaluation.
/// pred_of(i) returns the predicted cluster id with 0 meaning "isolated".
template <typename PredOf>
PairCounts contingency_counts(const Segmentation& truth, PredOf pred_of, bool mask_zero) {
  std::unordered_map<std::uint64_t, std::uint64_t> joint;
  std::unordered_map<std::uint32_t, std::uint64_t> truth_sizes;
  std::unordered_map<std::uint32_t, std::uint64_t> pred_sizes;
  std::uint64_t evaluated = 0;
  for (std::size_t i = 0; i < truth.shape().size(); ++i) {
    const std::uint32_t a = truth[i];
    if (mask_zero && a == 0) continue;
    ++evaluated;
    const std::uint32_t b = pred_of(i);
    if (a != 0) ++truth_sizes[a];
    if (b != 0) ++pred_sizes[b];
    if (a != 0 && b != 0) ++joint[pair_key(a, b)];
  }
  std::uint64_t both = 0, truth_connected = 0, pred_connected = 0;
  for (const auto& [key, n] : joint) both += choose2(n);
  for (const auto& [label, n] : truth_sizes) truth_connected += choose2(n);
  for (const auto& [label, n] : pred_sizes) pred_connected += choose2(n);

  PairCounts counts;
  counts.tp = both;
  counts.fn = truth_connected - both;
  counts.fp = pred_connected - both;
  counts.tn = choose2(evaluated) - counts.tp - counts.fn - counts.fp;
  return counts;
}

}  // namespace

double PairCounts::rand_error() const {
  if (total() == 0) throw EmptyEvaluation("no pixel pairs were evaluated");
  return static_cast<double>(fp + fn) / static_cast<double>(total());
}

double PairCounts::tpr() const {
  return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double PairCounts::fpr() const {
  return fp + tn == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(fp + tn);
}

double PairCounts::precision() const {
  return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

PairCounts& PairCounts::operator+=(const PairCounts& other) {
  tp += other.tp;
  fp += other.fp;
  tn += other.tn;
  fn += other.fn;
  return *this;
}

PairCounts pair_counts(const Segmentation& truth, const Segmentation& pred, bool mask_zero) {
  check_same_grid(truth.shape(), pred.shape());
  return contingency_counts(truth, [&](std::size_t i) { return pred[i]; }, mask_zero);
}

double rand_error(const Segmentation& truth, const Segmentation& pred, bool mask_zero) {
  return pair_counts(truth, pred, mask_zero).rand_error();
}

PairCounts pair_counts_at_threshold(const Segmentation& truth, const MaximinForest& forest,
                                    double theta, bool mask_zero) {
  if (forest.node_count() != truth.shape().size())
    throw std::invalid_argument("forest and segmentation cover different grids");
  const PairConnectivity connectivity = all_pairs_connectivity(forest, theta);
  const auto& component = connectivity.components();
  return contingency_counts(truth, [&](std::size_t i) { return component[i] + 1; }, mask_zero);
}

PairCounts pair_counts_at_threshold(const Segmentation& truth, const AffinityGraph& g, double theta,
                                    bool mask_zero) {
  check_same_grid(truth.shape(), g.shape());
  // ties only affect which maximin edge is reported, never connectivity
  Rng rng(0);
  return pair_counts_at_threshold(truth, build_maximin_forest(g, rng), theta, mask_zero);
}

std::vector<CurvePoint> sweep(const Segmentation& truth, const AffinityGraph& g,
                              std::span<const double> thetas, bool mask_zero) {
  if (thetas.empty()) throw std::invalid_argument("sweep needs at least one threshold");
  if (!std::is_sorted(thetas.begin(), thetas.end()))
    throw std::invalid_argument("sweep thresholds must be ascending");
  check_same_grid(truth.shape(), g.shape());
  for (double theta : thetas) check_threshold(theta);

  Rng rng(0);
  const MaximinForest forest = build_maximin_forest(g, rng);
  std::vector<CurvePoint> points(thetas.size());
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    points[k].theta = thetas[k];
    points[k].counts = pair_counts_at_threshold(truth, forest, thetas[k], mask_zero);
    points[k].split_merge = split_merge_counts(truth, segment(g, thetas[k]));
  }
  return points;
}

SplitMerge split_merge_counts(const Segmentation& truth, const Segmentation& pred) {
  check_same_grid(truth.shape(), pred.shape());
  std::unordered_set<std::uint64_t> overlaps;
  std::unordered_set<std::uint32_t> truth_labels, pred_labels;
  for (std::size_t i = 0; i < truth.shape().size(); ++i) {
    const std::uint32_t a = truth[i], b = pred[i];
    if (a == 0 || b == 0) continue;
    overlaps.insert(pair_key(a, b));
    truth_labels.insert(a);
    pred_labels.insert(b);
  }
  return {overlaps.size() - truth_labels.size(), overlaps.size() - pred_labels.size()};
}

std::vector<double> threshold_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw std::invalid_argument("grid step must lie in (0,1]");
  const auto count = static_cast<std::size_t>(std::llround(1.0 / step));
  std::vector<double> grid;
  for (std::size_t k = 0; k <= count; ++k) grid.push_back(static_cast<double>(k) / static_cast<double>(count));
  return grid;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const CurvePoint> points) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  auto number = [](double v) {
    char buffer[32];
    auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
    return std::string(buffer, end);
  };
  out << "theta,rand_error,tpr,fpr,precision,recall,splits,mergers\n";
  for (const auto& p : points) {
    out << number(p.theta) << ',' << number(p.counts.rand_error()) << ',' << number(p.counts.tpr())
        << ',' << number(p.counts.fpr()) << ',' << number(p.counts.precision()) << ','
        << number(p.counts.recall()) << ',' << p.split_merge.splits << ','
        << p.split_merge.mergers << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace malis
