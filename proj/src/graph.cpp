#include "malis/graph.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace malis {

EdgeList EdgeList::from_triples(
    std::size_t node_count,
    const std::vector<std::tuple<std::uint32_t, std::uint32_t, float>>& triples) {
  EdgeList list{node_count, {}};
  list.edges.reserve(triples.size());
  for (const auto& [u, v, w] : triples) {
    if (u >= node_count || v >= node_count)
      throw std::invalid_argument("edge endpoint out of range");
    if (u == v) throw std::invalid_argument("self loop");
    if (!(w >= 0.0f && w <= 1.0f)) throw RangeError(list.edges.size(), "weight outside [0,1]");
    list.edges.push_back({u, v, w, list.edges.size()});
  }
  return list;
}

DisjointSet::DisjointSet(std::size_t count) : parent_(count), rank_(count, 0) {
  std::iota(parent_.begin(), parent_.end(), 0u);
}

std::uint32_t DisjointSet::find(std::uint32_t x) {
  std::uint32_t root = x;
  while (parent_[root] != root) root = parent_[root];
  while (parent_[x] != root) {
    const std::uint32_t next = parent_[x];
    parent_[x] = root;
    x = next;
  }
  return root;
}

bool DisjointSet::unite(std::uint32_t a, std::uint32_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (rank_[a] < rank_[b]) std::swap(a, b);
  parent_[b] = a;
  if (rank_[a] == rank_[b]) ++rank_[a];
  return true;
}

void check_threshold(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0))
    throw std::invalid_argument("threshold must lie in [0,1], got " + std::to_string(theta));
}

AffinityGraph groundtruth_affinities(const Segmentation& seg) {
  const Shape& shape = seg.shape();
  std::vector<std::vector<float>> maps(shape.ndim(), std::vector<float>(shape.size(), 0.0f));
  for (std::size_t d = 0; d < shape.ndim(); ++d) {
    const std::size_t step = shape.stride(d);
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (!shape.has_next(i, d)) continue;
      const auto a = seg[i];
      maps[d][i] = (a != 0 && a == seg[i + step]) ? 1.0f : 0.0f;
    }
  }
  return AffinityGraph(shape, std::move(maps));
}

EdgeList edge_list(const AffinityGraph& g) {
  const Shape& shape = g.shape();
  EdgeList list{shape.size(), {}};
  list.edges.reserve(g.valid_edge_count());
  for (std::size_t d = 0; d < shape.ndim(); ++d) {
    const std::size_t step = shape.stride(d);
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (!g.valid(d, i)) continue;
      list.edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + step),
                            g.affinity(d, i), g.edge_id(d, i)});
    }
  }
  return list;
}

EdgeList threshold_graph(const AffinityGraph& g, double theta) {
  check_threshold(theta);
  const Shape& shape = g.shape();
  EdgeList list{shape.size(), {}};
  for (std::size_t d = 0; d < shape.ndim(); ++d) {
    const std::size_t step = shape.stride(d);
    const auto map = g.map(d);
    for (std::size_t i = 0; i < shape.size(); ++i) {
      // invalid entries hold -1 and never pass a threshold in [0,1]
      if (map[i] >= theta)
        list.edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + step),
                              map[i], g.edge_id(d, i)});
    }
  }
  return list;
}

std::vector<std::uint32_t> connected_components(std::size_t node_count, const EdgeList& edges) {
  DisjointSet sets(node_count);
  for (const Edge& e : edges.edges) {
    if (e.u >= node_count || e.v >= node_count)
      throw std::invalid_argument("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                                  ") references a node >= " + std::to_string(node_count));
    sets.unite(e.u, e.v);
  }
  std::vector<std::uint32_t> root_label(node_count, 0);
  std::vector<std::uint32_t> labels(node_count);
  std::uint32_t next = 0;
  for (std::uint32_t i = 0; i < node_count; ++i) {
    auto& label = root_label[sets.find(i)];
    if (label == 0) label = ++next;
    labels[i] = label;
  }
  return labels;
}

Segmentation segment(const AffinityGraph& g, double theta) {
  const EdgeList kept = threshold_graph(g, theta);
  const std::size_t n = g.node_count();
  std::vector<bool> touched(n, false);
  for (const Edge& e : kept.edges) touched[e.u] = touched[e.v] = true;

  DisjointSet sets(n);
  for (const Edge& e : kept.edges) sets.unite(e.u, e.v);
  std::vector<std::uint32_t> root_label(n, 0);
  std::vector<std::uint32_t> labels(n, 0);
  std::uint32_t next = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!touched[i]) continue;
    auto& label = root_label[sets.find(i)];
    if (label == 0) label = ++next;
    labels[i] = label;
  }
  return Segmentation(g.shape(), std::move(labels));
}

}  // namespace malis
