#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "layoutgraph/metrics.hpp"
#include "layoutgraph/rng.hpp"

using namespace layoutgraph;

namespace {

// Graph with given boxes on a fixed page; edges supplied as (src, dst) pairs.
DocumentGraph grid_graph(const std::vector<BBox>& boxes,
                         const std::vector<std::pair<int, int>>& edges) {
  DocumentGraph g;
  g.image_size = {1000, 1000};
  g.k = 2;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    GraphNode node;
    node.id = static_cast<int>(i);
    node.box = boxes[i];
    node.geom = normalize_box(node.box, g.image_size, static_cast<int>(i));
    g.nodes.push_back(node);
  }
  for (auto [s, d] : edges) {
    GraphEdge e;
    e.src = s;
    e.dst = d;
    e.geom = edge_geometry(boxes[static_cast<std::size_t>(s)],
                           boxes[static_cast<std::size_t>(d)], g.image_size);
    g.edges.push_back(e);
  }
  return g;
}

double brute_force_auc_pr(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  long positives = 0;
  for (int y : labels) positives += y;
  double area = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    long tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        if (labels[i] == 1)
          ++tp;
        else
          ++fp;
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += precision * (recall - prev_recall);
    prev_recall = recall;
  }
  return area;
}

}  // namespace

TEST_CASE("perfect predictions score one everywhere") {
  const std::vector<int> y = {0, 1, 2, 1, 0, 2};
  const auto r = classification_f1(y, y, 3);
  REQUIRE(r.micro_f1 == 1.0);
  for (const auto& c : r.per_class) {
    REQUIRE(c.f1 == 1.0);
    REQUIRE(c.precision == 1.0);
    REQUIRE(c.recall == 1.0);
    REQUIRE_FALSE(c.zero_support);
  }
}

TEST_CASE("three of four correct gives micro 0.75") {
  const auto r = classification_f1({1, 0, 1, 1}, {1, 0, 1, 0}, 2);
  REQUIRE(r.micro_f1 == 0.75);
  REQUIRE(r.total == 4);
  // class 1: tp=2 fp=1 fn=0 -> p=2/3 r=1
  REQUIRE(std::abs(r.per_class[1].precision - 2.0 / 3.0) < 1e-12);
  REQUIRE(r.per_class[1].recall == 1.0);
  REQUIRE(std::abs(r.per_class[1].f1 - 0.8) < 1e-12);
}

TEST_CASE("zero-support classes are flagged with F1 zero") {
  const auto r = classification_f1({0, 2, 0}, {0, 0, 0}, 3);
  REQUIRE(r.per_class[0].support == 3);
  REQUIRE(r.per_class[1].zero_support);
  REQUIRE(r.per_class[1].f1 == 0.0);
  REQUIRE(r.per_class[2].zero_support);
  REQUIRE(r.per_class[2].f1 == 0.0);  // predicted but never true
}

TEST_CASE("classification_f1 validates input") {
  REQUIRE_THROWS_AS(classification_f1({}, {}, 2), DataError);
  REQUIRE_THROWS_AS(classification_f1({0}, {0, 1}, 2), DataError);
  REQUIRE_THROWS_AS(classification_f1({2}, {0}, 2), DataError);
  REQUIRE_THROWS_AS(classification_f1({0}, {-1}, 2), DataError);
}

TEST_CASE("random instances agree with a confusion-matrix oracle") {
  Rng rng(321);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 200;
    const int classes = 5;
    std::vector<int> pred(n), truth(n);
    for (int i = 0; i < n; ++i) {
      pred[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(0, classes - 1));
      truth[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(0, classes - 1));
    }
    const auto r = classification_f1(pred, truth, classes);

    long correct = 0;
    for (int c = 0; c < classes; ++c) {
      long tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < n; ++i) {
        const bool is_p = pred[static_cast<std::size_t>(i)] == c;
        const bool is_t = truth[static_cast<std::size_t>(i)] == c;
        if (is_p && is_t) ++tp;
        if (is_p && !is_t) ++fp;
        if (!is_p && is_t) ++fn;
      }
      correct += tp;
      const double p = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
      const double rec = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
      const double f1 = p + rec > 0 ? 2 * p * rec / (p + rec) : 0.0;
      REQUIRE(std::abs(r.per_class[static_cast<std::size_t>(c)].precision - p) < 1e-12);
      REQUIRE(std::abs(r.per_class[static_cast<std::size_t>(c)].recall - rec) < 1e-12);
      REQUIRE(std::abs(r.per_class[static_cast<std::size_t>(c)].f1 - f1) < 1e-12);
      REQUIRE(r.per_class[static_cast<std::size_t>(c)].support == tp + fn);
    }
    REQUIRE(std::abs(r.micro_f1 - double(correct) / n) < 1e-12);
  }
}

TEST_CASE("perfectly separating scores give AUC-PR 1") {
  const auto a = auc_pr({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  REQUIRE(a.has_value());
  REQUIRE(std::abs(*a - 1.0) < 1e-12);
}

TEST_CASE("constant scores give AUC-PR equal to prevalence") {
  const auto a = auc_pr({0.4, 0.4, 0.4, 0.4, 0.4}, {1, 0, 0, 1, 0});
  REQUIRE(a.has_value());
  REQUIRE(std::abs(*a - 0.4) < 1e-12);
}

TEST_CASE("single-class labels have no PR curve") {
  REQUIRE_FALSE(auc_pr({0.1, 0.9}, {1, 1}).has_value());
  REQUIRE_FALSE(auc_pr({0.1, 0.9}, {0, 0}).has_value());
}

TEST_CASE("auc_pr validates input") {
  REQUIRE_THROWS_AS(auc_pr({}, {}), DataError);
  REQUIRE_THROWS_AS(auc_pr({0.5}, {0, 1}), DataError);
  REQUIRE_THROWS_AS(auc_pr({0.5, 0.2}, {0, 2}), DataError);
  REQUIRE_THROWS_AS(auc_pr({std::nan(""), 0.2}, {0, 1}), DataError);
}

TEST_CASE("random instances match the exhaustive-threshold oracle") {
  Rng rng(777);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 20;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      // Quantized scores force plenty of ties.
      scores[static_cast<std::size_t>(i)] = rng.uniform_int(0, 9) / 10.0;
      labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.3 ? 1 : 0;
      (labels[static_cast<std::size_t>(i)] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    const auto a = auc_pr(scores, labels);
    REQUIRE(a.has_value());
    REQUIRE(std::abs(*a - brute_force_auc_pr(scores, labels)) < 1e-9);
  }
}

TEST_CASE("auc_pr is invariant to strictly monotone score transforms") {
  Rng rng(888);
  std::vector<double> scores(30);
  std::vector<int> labels(30);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.uniform_int(0, 5) / 5.0;
    labels[i] = rng.uniform() < 0.4 ? 1 : 0;
  }
  labels[0] = 1;
  labels[1] = 0;
  auto transformed = scores;
  for (auto& s : transformed) s = std::atan(3.0 * s - 1.0);
  REQUIRE(*auc_pr(scores, labels) == *auc_pr(transformed, labels));
}

TEST_CASE("box IoU closed forms") {
  REQUIRE(box_iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  REQUIRE(box_iou({0, 0, 10, 10}, {20, 20, 30, 30}) == 0.0);
  REQUIRE(std::abs(box_iou({0, 0, 2, 1}, {0, 0, 1, 1}) - 0.5) < 1e-12);
  REQUIRE(std::abs(box_iou({0, 0, 10, 10}, {5, 0, 15, 10}) - 50.0 / 150.0) < 1e-12);
}

TEST_CASE("components of table edges become union boxes") {
  const std::vector<BBox> boxes = {{0, 0, 10, 10},    {20, 0, 30, 12},  {5, 20, 18, 28},
                                   {500, 500, 510, 510}, {100, 100, 130, 110}, {120, 105, 150, 125}};
  // Component {0,1,2} via labeled edges, component {4,5}, node 3 isolated.
  const std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 0}, {3, 0}, {4, 5}, {5, 4}};
  const std::vector<int> labels = {1, 1, 0, 0, 1, 1};
  const auto g = grid_graph(boxes, edges);
  const auto pred = predicted_table_boxes(g, labels);
  REQUIRE(pred.size() == 2);
  REQUIRE(pred[0].xmin == 0.0);
  REQUIRE(pred[0].ymin == 0.0);
  REQUIRE(pred[0].xmax == 30.0);
  REQUIRE(pred[0].ymax == 28.0);
  REQUIRE(pred[1].xmin == 100.0);
  REQUIRE(pred[1].ymax == 125.0);

  REQUIRE(predicted_table_boxes(g, {0, 0, 0, 0, 0, 0}).empty());
  REQUIRE_THROWS_AS(predicted_table_boxes(g, {1, 0}), DataError);
}

TEST_CASE("IoU exactly at the threshold is rejected") {
  // Predicted (0,0,2,1) vs GT (0,0,1,1): IoU is exactly 0.5.
  const auto c = match_table_boxes({{0, 0, 2, 1}}, {{0, 0, 1, 1}}, 0.5);
  REQUIRE(c.true_positives == 0);
  REQUIRE(c.predicted == 1);
  REQUIRE(c.ground_truth == 1);

  const auto c2 = match_table_boxes({{0, 0, 1.8, 1}}, {{0, 0, 1, 1}}, 0.5);
  REQUIRE(c2.true_positives == 1);
  REQUIRE(c2.f1() == 1.0);
}

TEST_CASE("greedy matching assigns best overlaps first, one to one") {
  // Two predictions overlap the same GT; only the better one may claim it.
  const std::vector<BBox> pred = {{0, 0, 10, 10}, {1, 1, 11, 11}};
  const std::vector<BBox> gt = {{0, 0, 10, 11}};
  const auto c = match_table_boxes(pred, gt, 0.5);
  REQUIRE(c.true_positives == 1);
  REQUIRE(c.predicted == 2);
  REQUIRE(c.ground_truth == 1);
  REQUIRE(std::abs(c.precision() - 0.5) < 1e-12);
  REQUIRE(c.recall() == 1.0);
  REQUIRE(std::abs(c.f1() - 2.0 / 3.0) < 1e-12);
}

TEST_CASE("one merged detection cannot claim two ground-truth tables") {
  const std::vector<BBox> boxes = {{0, 0, 40, 20}, {0, 30, 40, 50}, {0, 200, 40, 220},
                                   {0, 230, 40, 250}};
  const std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}};
  const std::vector<int> labels = {1, 1, 1};  // everything glued into one component
  const auto g = grid_graph(boxes, edges);
  const std::vector<BBox> gt = {{0, 0, 40, 50}, {0, 200, 40, 250}};
  const auto c = table_detection(g, labels, gt, 0.5);
  REQUIRE(c.predicted == 1);
  REQUIRE(c.ground_truth == 2);
  REQUIRE(c.true_positives == 0);  // the union box dilutes IoU below 0.5 for both
}

TEST_CASE("table detection pools counts over synthetic pages") {
  TableDetectionCounts pooled;
  // Five pages, hand-enumerated: pages 0-2 detect their table, page 3 misses
  // (box drifts), page 4 has a false positive and no GT.
  struct Page {
    std::vector<BBox> boxes;
    std::vector<std::pair<int, int>> edges;
    std::vector<int> labels;
    std::vector<BBox> gt;
  };
  std::vector<Page> pages;
  for (int i = 0; i < 3; ++i) {
    Page p;
    p.boxes = {{0, 0, 50, 20}, {0, 25, 50, 45}, {300, 300, 340, 330}};
    p.edges = {{0, 1}, {2, 0}};
    p.labels = {1, 0};
    p.gt = {{0, 0, 50, 45}};
    pages.push_back(p);
  }
  {
    Page p;
    p.boxes = {{0, 0, 50, 20}, {0, 25, 50, 45}};
    p.edges = {{0, 1}};
    p.labels = {1};
    p.gt = {{200, 200, 260, 260}};  // wrong place: detection misses
    pages.push_back(p);
  }
  {
    Page p;
    p.boxes = {{10, 10, 60, 30}, {10, 35, 60, 55}};
    p.edges = {{0, 1}};
    p.labels = {1};
    p.gt = {};  // no tables on this page
    pages.push_back(p);
  }
  for (const auto& p : pages)
    pooled.add(table_detection(grid_graph(p.boxes, p.edges), p.labels, p.gt, 0.5));

  REQUIRE(pooled.true_positives == 3);
  REQUIRE(pooled.predicted == 5);
  REQUIRE(pooled.ground_truth == 4);
  REQUIRE(std::abs(pooled.precision() - 3.0 / 5.0) < 1e-12);
  REQUIRE(std::abs(pooled.recall() - 3.0 / 4.0) < 1e-12);
  REQUIRE(std::abs(pooled.f1() - 2.0 * 0.6 * 0.75 / (0.6 + 0.75)) < 1e-12);
}
