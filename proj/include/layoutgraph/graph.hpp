#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "layoutgraph/error.hpp"
#include "layoutgraph/geometry.hpp"
#include "layoutgraph/log.hpp"

namespace layoutgraph {

struct GraphNode {
  int id = 0;
  BBox box;
  NodeGeomVector geom;
  std::optional<std::string> entity_label;
  std::optional<std::string> text;  // metadata only, never a model input
};

struct GraphEdge {
  int src = 0;
  int dst = 0;
  EdgeGeomVector geom;
  std::optional<std::string> link_label;  // "none" | "key-value" | "table"
};

// Attributed document graph: text-region nodes plus directed kNN edges.
// Values are immutable after construction by convention; every feature is a
// deterministic function of the boxes and the image size.
struct DocumentGraph {
  ImageSize image_size;
  int k = 0;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }

  std::vector<int> out_degree() const {
    std::vector<int> deg(nodes.size(), 0);
    for (const auto& e : edges) ++deg[static_cast<std::size_t>(e.src)];
    return deg;
  }
};

// Directed kNN edges over box centers. Each node links to its min(k, N-1)
// nearest neighbors by Euclidean distance, ties broken by lower node id.
inline std::vector<std::pair<int, int>> knn_edges(
    const std::vector<std::pair<double, double>>& centers, int k) {
  if (k < 1) throw ValidationError("knn: k must be positive, got " + std::to_string(k));
  const int n = static_cast<int>(centers.size());
  std::vector<std::pair<int, int>> edges;
  if (n < 2) {
    log::warn("knn: fewer than 2 nodes, graph has no edges");
    return edges;
  }
  const int take = std::min(k, n - 1);
  edges.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(take));
  std::vector<int> order(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n; ++i) {
    int m = 0;
    for (int j = 0; j < n; ++j)
      if (j != i) order[static_cast<std::size_t>(m++)] = j;
    const auto d2 = [&](int j) {
      const double dx = centers[static_cast<std::size_t>(j)].first -
                        centers[static_cast<std::size_t>(i)].first;
      const double dy = centers[static_cast<std::size_t>(j)].second -
                        centers[static_cast<std::size_t>(i)].second;
      return dx * dx + dy * dy;
    };
    const auto closer = [&](int a, int b) {
      const double da = d2(a), db = d2(b);
      if (da != db) return da < db;
      return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + take, order.end(), closer);
    for (int t = 0; t < take; ++t) edges.emplace_back(i, order[static_cast<std::size_t>(t)]);
  }
  return edges;
}

// Build the attributed graph for a document. Node order follows the input
// box order; the whole construction is deterministic.
inline DocumentGraph build_graph(const std::vector<BBox>& boxes, const ImageSize& image, int k) {
  DocumentGraph g;
  g.image_size = image;
  g.k = k;
  g.nodes.reserve(boxes.size());
  std::vector<std::pair<double, double>> centers;
  centers.reserve(boxes.size());
  for (int i = 0; i < static_cast<int>(boxes.size()); ++i) {
    GraphNode node;
    node.id = i;
    node.box = boxes[static_cast<std::size_t>(i)];
    node.geom = normalize_box(node.box, image, i);
    centers.emplace_back(node.geom.ncx(), node.geom.ncy());
    g.nodes.push_back(std::move(node));
  }
  for (const auto& [src, dst] : knn_edges(centers, k)) {
    GraphEdge e;
    e.src = src;
    e.dst = dst;
    e.geom = edge_geometry(g.nodes[static_cast<std::size_t>(src)].box,
                           g.nodes[static_cast<std::size_t>(dst)].box, image);
    g.edges.push_back(std::move(e));
  }
  return g;
}

inline void validate_graph(const DocumentGraph& g) {
  const int n = g.num_nodes();
  for (int i = 0; i < n; ++i) {
    if (g.nodes[static_cast<std::size_t>(i)].id != i)
      throw ValidationError("graph: node ids must be dense 0..N-1");
  }
  const int expected_deg = n >= 2 ? std::min(g.k, n - 1) : 0;
  std::vector<int> deg(static_cast<std::size_t>(n), 0);
  for (const auto& e : g.edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
      throw ValidationError("graph: edge endpoint out of range");
    if (e.src == e.dst) throw ValidationError("graph: self-loop on node " + std::to_string(e.src));
    ++deg[static_cast<std::size_t>(e.src)];
  }
  for (int i = 0; i < n; ++i) {
    if (deg[static_cast<std::size_t>(i)] != expected_deg)
      throw ValidationError("graph: node " + std::to_string(i) + " has out-degree " +
                            std::to_string(deg[static_cast<std::size_t>(i)]) + ", expected " +
                            std::to_string(expected_deg));
  }
}

}  // namespace layoutgraph
