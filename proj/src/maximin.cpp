#include "malis/maximin.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace malis {

namespace {

void check_pair(std::size_t node_count, std::uint32_t i, std::uint32_t j) {
  if (i >= node_count || j >= node_count)
    throw std::invalid_argument("pixel index out of range");
  if (i == j) throw std::invalid_argument("maximin pair must be two distinct pixels");
}

}  // namespace

std::vector<std::size_t> descending_order(const EdgeList& g, Rng& rng) {
  std::vector<std::size_t> order(g.edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const float wa = g.edges[a].weight, wb = g.edges[b].weight;
    return wa != wb ? wa > wb : a < b;
  });
  for (auto run = order.begin(); run != order.end();) {
    const float w = g.edges[*run].weight;
    auto end = std::find_if(run, order.end(), [&](std::size_t e) { return g.edges[e].weight != w; });
    if (end - run > 1) std::shuffle(run, end, rng);
    run = end;
  }
  return order;
}

MaximinResult maximin_query(const EdgeList& g, std::uint32_t i, std::uint32_t j, Rng& rng) {
  check_pair(g.node_count, i, j);
  DisjointSet sets(g.node_count);
  for (std::size_t index : descending_order(g, rng)) {
    const Edge& e = g.edges[index];
    const std::uint32_t ru = sets.find(e.u), rv = sets.find(e.v);
    if (ru == rv) continue;
    const std::uint32_t ri = sets.find(i), rj = sets.find(j);
    if ((ru == ri && rv == rj) || (ru == rj && rv == ri)) return {e.u, e.v, e.weight, e.id};
    sets.unite(ru, rv);
  }
  throw NoPathError("pixels " + std::to_string(i) + " and " + std::to_string(j) +
                    " are not connected");
}

MaximinResult maximin_query(const AffinityGraph& g, std::uint32_t i, std::uint32_t j, Rng& rng) {
  return maximin_query(edge_list(g), i, j, rng);
}

MaximinForest::MaximinForest(const EdgeList& g, Rng& rng)
    : parent_(g.node_count, kNoLink),
      parent_link_(g.node_count, kNoLink),
      depth_(g.node_count, 0),
      tree_(g.node_count, kNoLink) {
  DisjointSet sets(g.node_count);
  for (std::size_t index : descending_order(g, rng)) {
    const Edge& e = g.edges[index];
    if (sets.unite(e.u, e.v)) links_.push_back({e.u, e.v, e.weight, e.id});
  }

  // Root every tree at its smallest node and record parent links.
  std::vector<std::vector<std::uint32_t>> incident(g.node_count);
  for (std::uint32_t k = 0; k < links_.size(); ++k) {
    incident[links_[k].u].push_back(k);
    incident[links_[k].v].push_back(k);
  }
  std::vector<std::uint32_t> stack;
  for (std::uint32_t root = 0; root < g.node_count; ++root) {
    if (tree_[root] != kNoLink) continue;
    const auto tree = static_cast<std::uint32_t>(tree_count_++);
    tree_[root] = tree;
    stack.push_back(root);
    while (!stack.empty()) {
      const std::uint32_t node = stack.back();
      stack.pop_back();
      for (std::uint32_t k : incident[node]) {
        const std::uint32_t other = links_[k].u == node ? links_[k].v : links_[k].u;
        if (tree_[other] != kNoLink) continue;
        tree_[other] = tree;
        parent_[other] = node;
        parent_link_[other] = k;
        depth_[other] = depth_[node] + 1;
        stack.push_back(other);
      }
    }
  }
}

MaximinResult MaximinForest::query(std::uint32_t i, std::uint32_t j) const {
  check_pair(node_count(), i, j);
  if (tree_[i] != tree_[j])
    throw NoPathError("pixels " + std::to_string(i) + " and " + std::to_string(j) +
                      " lie in different trees");
  std::uint32_t best = kNoLink;
  auto climb = [&](std::uint32_t& node) {
    const std::uint32_t k = parent_link_[node];
    if (best == kNoLink || links_[k].weight < links_[best].weight) best = k;
    node = parent_[node];
  };
  while (depth_[i] > depth_[j]) climb(i);
  while (depth_[j] > depth_[i]) climb(j);
  while (i != j) {
    climb(i);
    climb(j);
  }
  const Link& link = links_[best];
  return {link.u, link.v, link.weight, link.edge_id};
}

std::vector<float> MaximinForest::dense_matrix() const {
  const std::size_t n = node_count();
  std::vector<float> matrix(n * n, -1.0f);
  std::vector<std::vector<std::uint32_t>> incident(n);
  for (std::uint32_t k = 0; k < links_.size(); ++k) {
    incident[links_[k].u].push_back(k);
    incident[links_[k].v].push_back(k);
  }
  // One traversal per source carrying the running path minimum.
  std::vector<std::pair<std::uint32_t, float>> stack;
  std::vector<bool> seen(n);
  for (std::uint32_t source = 0; source < n; ++source) {
    std::fill(seen.begin(), seen.end(), false);
    seen[source] = true;
    stack.assign(1, {source, 2.0f});
    while (!stack.empty()) {
      auto [node, path_min] = stack.back();
      stack.pop_back();
      if (node != source) matrix[source * n + node] = path_min;
      for (std::uint32_t k : incident[node]) {
        const std::uint32_t other = links_[k].u == node ? links_[k].v : links_[k].u;
        if (seen[other]) continue;
        seen[other] = true;
        stack.push_back({other, std::min(path_min, links_[k].weight)});
      }
    }
  }
  return matrix;
}

MaximinForest build_maximin_forest(const EdgeList& g, Rng& rng) { return MaximinForest(g, rng); }

MaximinForest build_maximin_forest(const AffinityGraph& g, Rng& rng) {
  return MaximinForest(edge_list(g), rng);
}

MaximinResult forest_maximin(const MaximinForest& f, std::uint32_t i, std::uint32_t j) {
  return f.query(i, j);
}

PairConnectivity::PairConnectivity(const MaximinForest& f, double theta) {
  check_threshold(theta);
  const std::size_t n = f.node_count();
  DisjointSet sets(n);
  // links are sorted by non-increasing weight
  for (const auto& link : f.links()) {
    if (link.weight < theta) break;
    sets.unite(link.u, link.v);
  }
  component_.resize(n);
  std::vector<std::uint32_t> root_component(n, ~0u);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& c = root_component[sets.find(i)];
    if (c == ~0u) {
      c = static_cast<std::uint32_t>(sizes_.size());
      sizes_.push_back(0);
    }
    component_[i] = c;
    ++sizes_[c];
  }
}

std::uint64_t PairConnectivity::connected_pairs() const {
  std::uint64_t total = 0;
  for (std::size_t s : sizes_) total += static_cast<std::uint64_t>(s) * (s - 1) / 2;
  return total;
}

PairConnectivity all_pairs_connectivity(const MaximinForest& f, double theta) {
  return PairConnectivity(f, theta);
}

}  // namespace malis
