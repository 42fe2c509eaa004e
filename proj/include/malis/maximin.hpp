#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "malis/graph.hpp"

namespace malis {

/// Every source of randomness in the library is an explicit engine of this type.
using Rng = std::mt19937_64;

/// The maximin edge of a pixel pair and its weight (the maximin affinity).
struct MaximinResult {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  float affinity = 0.0f;
  std::size_t edge_id = 0;
};

/// Edge indices in descending weight order. Runs of bit-identical weights are
/// shuffled with rng, which realizes random tie breaking.
std::vector<std::size_t> descending_order(const EdgeList& g, Rng& rng);

/// Descending Kruskal stopped at the first union that joins i's and j's
/// components. Throws NoPathError when i and j are not connected.
MaximinResult maximin_query(const EdgeList& g, std::uint32_t i, std::uint32_t j, Rng& rng);
MaximinResult maximin_query(const AffinityGraph& g, std::uint32_t i, std::uint32_t j, Rng& rng);

/// Maximum spanning forest, rooted per tree for path queries.
class MaximinForest {
 public:
  struct Link {
    std::uint32_t u;
    std::uint32_t v;
    float weight;
    std::size_t edge_id;
  };

  MaximinForest(const EdgeList& g, Rng& rng);

  std::size_t node_count() const { return parent_.size(); }
  /// Forest links in the order Kruskal accepted them (non-increasing weight).
  const std::vector<Link>& links() const { return links_; }
  std::size_t tree_count() const { return tree_count_; }
  std::uint32_t tree_of(std::uint32_t node) const { return tree_[node]; }

  /// Minimum-weight link on the forest path between i and j.
  MaximinResult query(std::uint32_t i, std::uint32_t j) const;

  /// Dense |V| x |V| maximin affinities (row-major), -1 for disconnected pairs
  /// and on the diagonal. Quadratic in |V|; meant for debugging and tests.
  std::vector<float> dense_matrix() const;

 private:
  static constexpr std::uint32_t kNoLink = ~0u;

  std::vector<Link> links_;
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> parent_link_;
  std::vector<std::uint32_t> depth_;
  std::vector<std::uint32_t> tree_;
  std::size_t tree_count_ = 0;
};

MaximinForest build_maximin_forest(const EdgeList& g, Rng& rng);
MaximinForest build_maximin_forest(const AffinityGraph& g, Rng& rng);

MaximinResult forest_maximin(const MaximinForest& f, std::uint32_t i, std::uint32_t j);

/// Pair connectivity H(A*_ij - theta) (with H(0) = 1) stored as components of
/// the forest restricted to links with weight >= theta.
class PairConnectivity {
 public:
  PairConnectivity(const MaximinForest& f, double theta);

  bool connected(std::uint32_t i, std::uint32_t j) const {
    return component_[i] == component_[j];
  }
  /// Component index per node, numbered from 0 by first appearance.
  const std::vector<std::uint32_t>& components() const { return component_; }
  const std::vector<std::size_t>& component_sizes() const { return sizes_; }
  /// Number of unordered connected pairs.
  std::uint64_t connected_pairs() const;

 private:
  std::vector<std::uint32_t> component_;
  std::vector<std::size_t> sizes_;
};

PairConnectivity all_pairs_connectivity(const MaximinForest& f, double theta);

}  // namespace malis
