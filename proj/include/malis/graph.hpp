#pragma once

#include <cstddef>
#include <cstdint>
#include <tuple>
#include <vector>

#include "malis/imagery.hpp"

namespace malis {

struct Edge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  float weight = 0.0f;
  /// Position in the source graph's enumeration: AffinityGraph::edge_id for
  /// grid graphs, the list index for hand-built lists.
  std::size_t id = 0;
};

/// Weighted undirected graph as a flat edge list.
struct EdgeList {
  std::size_t node_count = 0;
  std::vector<Edge> edges;

  /// Builds a list from (u, v, weight) triples, numbering ids by position.
  /// Rejects self loops, out-of-range nodes and weights outside [0,1].
  static EdgeList from_triples(std::size_t node_count,
                               const std::vector<std::tuple<std::uint32_t, std::uint32_t, float>>& triples);
};

/// Union-find with union by rank and path compression.
class DisjointSet {
 public:
  explicit DisjointSet(std::size_t count);

  std::uint32_t find(std::uint32_t x);
  /// Returns false when a and b were already in one set.
  bool unite(std::uint32_t a, std::uint32_t b);
  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint8_t> rank_;
};

/// Weight 1 when both endpoints carry the same label >= 1, else 0.
AffinityGraph groundtruth_affinities(const Segmentation& seg);

/// All valid edges of the grid graph, in edge-id order.
EdgeList edge_list(const AffinityGraph& g);

/// Valid edges with weight >= theta (edges at exactly theta are kept).
EdgeList threshold_graph(const AffinityGraph& g, double theta);

/// Component labels >= 1, numbered by first appearance in node order.
std::vector<std::uint32_t> connected_components(std::size_t node_count, const EdgeList& edges);

/// Thresholds g and labels connected components on the grid. Pixels with no
/// surviving incident edge get label 0.
Segmentation segment(const AffinityGraph& g, double theta);

void check_threshold(double theta);

}  // namespace malis
