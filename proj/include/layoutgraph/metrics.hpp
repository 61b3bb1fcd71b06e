#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "layoutgraph/error.hpp"
#include "layoutgraph/geometry.hpp"
#include "layoutgraph/graph.hpp"
#include "layoutgraph/log.hpp"

// Evaluation: per-class and micro F1, area under the precision-recall curve,
// and table detection by IoU matching of edge-induced components.
namespace layoutgraph {

struct ClassScore {
  int class_id = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;        // ground-truth count
  bool zero_support = false;
};

struct F1Report {
  std::vector<ClassScore> per_class;
  double micro_f1 = 0.0;
  long total = 0;
};

inline F1Report classification_f1(const std::vector<int>& predictions,
                                  const std::vector<int>& labels, int num_classes) {
  if (predictions.size() != labels.size())
    throw DataError("metrics: prediction and label counts differ");
  if (predictions.empty()) throw DataError("metrics: empty evaluation input");
  if (num_classes < 1) throw ConfigError("metrics: num_classes must be positive");
  std::vector<long> tp(static_cast<std::size_t>(num_classes), 0);
  std::vector<long> fp(static_cast<std::size_t>(num_classes), 0);
  std::vector<long> fn(static_cast<std::size_t>(num_classes), 0);
  long correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if (y < 0 || y >= num_classes || p < 0 || p >= num_classes)
      throw DataError("metrics: class id out of range at index " + std::to_string(i));
    if (p == y) {
      ++tp[static_cast<std::size_t>(y)];
      ++correct;
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(y)];
    }
  }
  F1Report report;
  report.total = static_cast<long>(labels.size());
  for (int c = 0; c < num_classes; ++c) {
    ClassScore s;
    s.class_id = c;
    const auto ci = static_cast<std::size_t>(c);
    s.support = tp[ci] + fn[ci];
    const long denom_p = tp[ci] + fp[ci];
    const long denom_r = tp[ci] + fn[ci];
    s.precision = denom_p > 0 ? static_cast<double>(tp[ci]) / static_cast<double>(denom_p) : 0.0;
    s.recall = denom_r > 0 ? static_cast<double>(tp[ci]) / static_cast<double>(denom_r) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                        : 0.0;
    if (s.support == 0) {
      s.zero_support = true;
      s.f1 = 0.0;
      log::warn("metrics: class " + std::to_string(c) + " has zero support");
    }
    report.per_class.push_back(s);
  }
  // Single-label micro F1: pooled TP/(TP+FP) and TP/(TP+FN) coincide, so the
  // micro average reduces to accuracy.
  report.micro_f1 = static_cast<double>(correct) / static_cast<double>(labels.size());
  return report;
}

// Area under the precision-recall curve by exact step integration: sweep the
// distinct scores descending, add precision * recall-increment at each step.
// Tied scores enter together. Single-class inputs have no defined curve.
inline std::optional<double> auc_pr(const std::vector<double>& scores,
                                    const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DataError("metrics: score and label counts differ");
  if (scores.empty()) throw DataError("metrics: empty evaluation input");
  long positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("metrics: auc_pr labels must be 0/1");
    if (!std::isfinite(scores[i])) throw DataError("metrics: non-finite score");
    positives += labels[i];
  }
  if (positives == 0 || positives == static_cast<long>(labels.size())) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  double area = 0.0;
  long tp = 0, fp = 0;
  double prev_recall = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (labels[order[i]] == 1)
        ++tp;
      else
        ++fp;
      ++i;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += precision * (recall - prev_recall);
    prev_recall = recall;
  }
  return area;
}

inline double box_iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin));
  const double iy = std::max(0.0, std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin));
  const double inter = ix * iy;
  const double area_a = (a.xmax - a.xmin) * (a.ymax - a.ymin);
  const double area_b = (b.xmax - b.xmin) * (b.ymax - b.ymin);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Predicted tables: connected components of the undirected graph made of
// edges labeled positive. Components of at least two nodes become detections,
// each reported as the union box of its member nodes.
inline std::vector<BBox> predicted_table_boxes(const DocumentGraph& g,
                                               const std::vector<int>& edge_labels) {
  if (edge_labels.size() != g.edges.size())
    throw DataError("metrics: edge label count does not match graph");
  std::vector<int> parent(static_cast<std::size_t>(g.num_nodes()));
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int v) {
    while (parent[static_cast<std::size_t>(v)] != v) {
      parent[static_cast<std::size_t>(v)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
      v = parent[static_cast<std::size_t>(v)];
    }
    return v;
  };
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    if (edge_labels[i] != 1) continue;
    const int a = find(g.edges[i].src);
    const int b = find(g.edges[i].dst);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
  std::vector<int> count(parent.size(), 0);
  for (std::size_t v = 0; v < parent.size(); ++v) ++count[static_cast<std::size_t>(find(static_cast<int>(v)))];
  std::vector<BBox> boxes;
  std::vector<int> root_to_box(parent.size(), -1);
  for (std::size_t v = 0; v < parent.size(); ++v) {
    const int root = find(static_cast<int>(v));
    if (count[static_cast<std::size_t>(root)] < 2) continue;
    const BBox& b = g.nodes[v].box;
    int& slot = root_to_box[static_cast<std::size_t>(root)];
    if (slot < 0) {
      slot = static_cast<int>(boxes.size());
      boxes.push_back(b);
    } else {
      BBox& u = boxes[static_cast<std::size_t>(slot)];
      u.xmin = std::min(u.xmin, b.xmin);
      u.ymin = std::min(u.ymin, b.ymin);
      u.xmax = std::max(u.xmax, b.xmax);
      u.ymax = std::max(u.ymax, b.ymax);
    }
  }
  return boxes;
}

struct TableDetectionCounts {
  long true_positives = 0;
  long predicted = 0;
  long ground_truth = 0;

  void add(const TableDetectionCounts& o) {
    true_positives += o.true_positives;
    predicted += o.predicted;
    ground_truth += o.ground_truth;
  }

  double precision() const {
    return predicted > 0 ? static_cast<double>(true_positives) / static_cast<double>(predicted)
                         : 0.0;
  }
  double recall() const {
    return ground_truth > 0
               ? static_cast<double>(true_positives) / static_cast<double>(ground_truth)
               : 0.0;
  }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
};

// Greedy IoU matching, best overlaps first; a detection counts only when its
// IoU strictly exceeds the threshold. Counts pool across documents.
inline TableDetectionCounts match_table_boxes(const std::vector<BBox>& predicted,
                                              const std::vector<BBox>& ground_truth,
                                              double iou_threshold = 0.5) {
  TableDetectionCounts counts;
  counts.predicted = static_cast<long>(predicted.size());
  counts.ground_truth = static_cast<long>(ground_truth.size());
  struct Pair {
    double iou;
    std::size_t p, g;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < predicted.size(); ++p)
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      const double iou = box_iou(predicted[p], ground_truth[g]);
      if (iou > iou_threshold) pairs.push_back({iou, p, g});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.p != b.p) return a.p < b.p;
    return a.g < b.g;
  });
  std::vector<bool> used_p(predicted.size(), false), used_g(ground_truth.size(), false);
  for (const auto& pr : pairs) {
    if (used_p[pr.p] || used_g[pr.g]) continue;
    used_p[pr.p] = true;
    used_g[pr.g] = true;
    ++counts.true_positives;
  }
  return counts;
}

inline TableDetectionCounts table_detection(const DocumentGraph& g,
                                            const std::vector<int>& edge_labels,
                                            const std::vector<BBox>& gt_tables,
                                            double iou_threshold = 0.5) {
  return match_table_boxes(predicted_table_boxes(g, edge_labels), gt_tables, iou_threshold);
}

struct EvalReport {
  F1Report node;
  F1Report link;
  std::optional<double> auc_pr;
  std::optional<TableDetectionCounts> tables;
  double link_coverage = -1.0;  // negative = not applicable
};

}  // namespace layoutgraph
