#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdlib>
#include <set>

#include "layoutgraph/dataset.hpp"

using namespace layoutgraph;

namespace {

std::string fixture(const std::string& rel) {
  const char* env = std::getenv("LAYOUTGRAPH_FIXTURES");
  REQUIRE(env != nullptr);
  return std::string(env) + "/datasets/" + rel;
}

std::vector<std::string> ids(const std::vector<DocumentRecord>& docs) {
  std::vector<std::string> out;
  for (const auto& d : docs) out.push_back(d.doc_id);
  return out;
}

}  // namespace

TEST_CASE("funsd mini corpus loads with splits, skip report, and sorted ids") {
  const auto splits = load_funsd(fixture("funsd_mini"), 0.2, 7);
  REQUIRE(splits.train.size() == 4);
  REQUIRE(splits.val.size() == 1);
  REQUIRE(splits.test.size() == 2);
  REQUIRE(splits.skipped.size() == 1);
  REQUIRE(splits.skipped[0].doc_id == "9999990");
  REQUIRE(splits.skipped[0].reason == "missing image");

  std::set<std::string> all;
  for (const auto* part : {&splits.train, &splits.val, &splits.test})
    for (const auto& d : *part) REQUIRE(all.insert(d.doc_id).second);
  REQUIRE(all.size() == 7);

  const auto train_ids = ids(splits.train);
  REQUIRE(std::is_sorted(train_ids.begin(), train_ids.end()));
  REQUIRE(ids(splits.test) == std::vector<std::string>{"0000090", "0000091"});

  for (const auto& d : splits.train) {
    REQUIRE(d.image_size.width == 480);
    REQUIRE(d.image_size.height == 360);
    REQUIRE_FALSE(d.entities.empty());
  }
}

TEST_CASE("validation carve is seed-deterministic and partitions the training docs") {
  const auto a = load_funsd(fixture("funsd_mini"), 0.2, 7);
  const auto b = load_funsd(fixture("funsd_mini"), 0.2, 7);
  REQUIRE(ids(a.val) == ids(b.val));
  REQUIRE(ids(a.train) == ids(b.train));

  const auto c = load_funsd(fixture("funsd_mini"), 0.2, 8);
  auto union_a = ids(a.train);
  auto union_c = ids(c.train);
  const auto a_val = ids(a.val);
  const auto c_val = ids(c.val);
  union_a.insert(union_a.end(), a_val.begin(), a_val.end());
  union_c.insert(union_c.end(), c_val.begin(), c_val.end());
  std::sort(union_a.begin(), union_a.end());
  std::sort(union_c.begin(), union_c.end());
  REQUIRE(union_a == union_c);

  const auto d = load_funsd(fixture("funsd_mini"));  // defaults: round(0.1 * 5) = 1
  REQUIRE(d.val.size() == 1);
  REQUIRE(d.train.size() == 4);
}

TEST_CASE("funsd entities parse with ids, labels, boxes, text, and linking") {
  const auto splits = load_funsd(fixture("funsd_mini"), 0.0, 1);
  const auto& doc = splits.train.front();
  REQUIRE(doc.doc_id == "0000000");
  REQUIRE(doc.entities.size() == 8);

  const auto& header = doc.entities[0];
  REQUIRE(header.id == 0);
  REQUIRE(header.label == "header");
  REQUIRE(header.box.xmin == 148.0);
  REQUIRE(header.box.ymax == 40.0);
  REQUIRE(header.links.empty());
  REQUIRE(header.text.has_value());

  const auto& q = doc.entities[1];
  REQUIRE(q.label == "question");
  REQUIRE(q.links == std::vector<std::pair<int, int>>{{1, 2}});
  REQUIRE(doc.entities[2].label == "answer");
  REQUIRE(doc.entities[2].links == std::vector<std::pair<int, int>>{{1, 2}});
}

TEST_CASE("funsd root resolution accepts the nested dataset directory") {
  const auto splits = load_funsd(fixture("funsd_nested"), 0.0, 3);
  REQUIRE(splits.train.size() == 1);
  REQUIRE(splits.test.size() == 1);
}

TEST_CASE("malformed annotations name the offending file") {
  try {
    load_funsd(fixture("funsd_broken"), 0.1, 1);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    REQUIRE(std::string(e.what()).find("0000007.json") != std::string::npos);
  }
}

TEST_CASE("missing dataset roots are io errors") {
  REQUIRE_THROWS_AS(load_funsd(fixture("no_such_dir")), IoError);
  REQUIRE_THROWS_AS(load_funsd(fixture("funsd_mini") + "/training_data"), IoError);
  REQUIRE_THROWS_AS(load_rvlcdip_invoices(fixture("no_such_dir")), IoError);
  REQUIRE_THROWS_AS(load_funsd(fixture("funsd_mini"), 1.0), ConfigError);
}

TEST_CASE("document graphs preserve entity ids and labels in sorted order") {
  const auto splits = load_funsd(fixture("funsd_mini"), 0.0, 1);
  const auto& doc = splits.train.front();
  auto g = build_document_graph(doc, 4);
  REQUIRE(g.num_nodes() == static_cast<int>(doc.entities.size()));
  REQUIRE_NOTHROW(validate_graph(g));
  for (int i = 0; i < g.num_nodes(); ++i) {
    REQUIRE(g.nodes[static_cast<std::size_t>(i)].id == i);
    REQUIRE(g.nodes[static_cast<std::size_t>(i)].entity_label ==
            doc.entities[static_cast<std::size_t>(i)].label);  // fixture ids arrive sorted
  }
}

TEST_CASE("key-value labels match a direct pair-set recompute and are idempotent") {
  const auto splits = load_funsd(fixture("funsd_mini"), 0.0, 1);
  for (const auto& doc : splits.train) {
    auto g = build_document_graph(doc, 4);
    const auto result = attach_labels(doc, g, LinkTask::kKeyValue);

    std::set<std::pair<int, int>> gt;
    for (const auto& e : doc.entities)
      for (auto [from, to] : e.links)
        gt.emplace(std::min(from, to), std::max(from, to));  // ids equal node indices here

    long positive = 0;
    std::set<std::pair<int, int>> covered;
    for (const auto& e : g.edges) {
      const auto key = std::make_pair(std::min(e.src, e.dst), std::max(e.src, e.dst));
      REQUIRE(e.link_label.has_value());
      if (gt.count(key)) {
        REQUIRE(*e.link_label == "key-value");
        ++positive;
        covered.insert(key);
      } else {
        REQUIRE(*e.link_label == "none");
      }
    }
    REQUIRE(result.gt_pairs == static_cast<long>(gt.size()));
    REQUIRE(result.positive_edges == positive);
    REQUIRE(result.covered_pairs == static_cast<long>(covered.size()));
    if (result.gt_pairs > 0)
      REQUIRE(result.coverage ==
              static_cast<double>(covered.size()) / static_cast<double>(gt.size()));

    auto again = attach_labels(doc, g, LinkTask::kKeyValue);
    REQUIRE(again.positive_edges == result.positive_edges);
    REQUIRE(again.coverage == result.coverage);
  }
}

TEST_CASE("attach_labels is independent of entity record order") {
  const auto splits = load_funsd(fixture("funsd_mini"), 0.0, 1);
  auto doc = splits.train.front();
  auto g1 = build_document_graph(doc, 4);
  attach_labels(doc, g1, LinkTask::kKeyValue);

  std::reverse(doc.entities.begin(), doc.entities.end());
  auto g2 = build_document_graph(doc, 4);
  attach_labels(doc, g2, LinkTask::kKeyValue);

  REQUIRE(g1.num_edges() == g2.num_edges());
  for (int i = 0; i < g1.num_edges(); ++i) {
    REQUIRE(g1.edges[static_cast<std::size_t>(i)].src == g2.edges[static_cast<std::size_t>(i)].src);
    REQUIRE(g1.edges[static_cast<std::size_t>(i)].link_label ==
            g2.edges[static_cast<std::size_t>(i)].link_label);
  }
  for (int i = 0; i < g1.num_nodes(); ++i)
    REQUIRE(g1.nodes[static_cast<std::size_t>(i)].entity_label ==
            g2.nodes[static_cast<std::size_t>(i)].entity_label);
}

TEST_CASE("attach_labels rejects mismatched graphs") {
  const auto splits = load_funsd(fixture("funsd_mini"), 0.0, 1);
  const auto& doc = splits.train.front();
  auto g = build_document_graph(doc, 4);
  g.nodes.pop_back();
  REQUIRE_THROWS_AS(attach_labels(doc, g, LinkTask::kKeyValue), DataError);
}

TEST_CASE("invoice corpus honors splits.json and clamps stray boxes") {
  const auto splits = load_rvlcdip_invoices(fixture("rvl_mini"));
  REQUIRE(ids(splits.train) == std::vector<std::string>{"invoice_000"});
  REQUIRE(ids(splits.val) == std::vector<std::string>{"invoice_001"});
  REQUIRE(ids(splits.test) == std::vector<std::string>{"invoice_002"});

  const auto& doc = splits.val.front();
  REQUIRE(doc.image_size.width == 600);
  REQUIRE(doc.image_size.height == 440);
  const auto& stray = doc.entities.back();
  REQUIRE(stray.label == "other");
  REQUIRE(stray.box.xmax == 600.0);
  REQUIRE(stray.box.ymax == 440.0);

  REQUIRE(doc.gt_tables.size() == 1);
  REQUIRE(doc.gt_tables[0].xmin == 40.0);
  REQUIRE(doc.gt_tables[0].ymin == 170.0);
  REQUIRE(doc.gt_tables[0].xmax == 560.0);
  REQUIRE(doc.gt_tables[0].ymax == 318.0);
}

TEST_CASE("invoice corpus without splits.json carves deterministically") {
  const auto a = load_rvlcdip_invoices(fixture("rvl_nosplit"), 0.1, 0.2, 5);
  REQUIRE(a.train.size() + a.val.size() + a.test.size() == 3);
  REQUIRE(a.test.size() == 1);  // round(0.2 * 3)
  const auto b = load_rvlcdip_invoices(fixture("rvl_nosplit"), 0.1, 0.2, 5);
  REQUIRE(ids(a.train) == ids(b.train));
  REQUIRE(ids(a.test) == ids(b.test));
}

TEST_CASE("table labels connect exactly the same-table regions") {
  const auto splits = load_rvlcdip_invoices(fixture("rvl_mini"));
  const auto& doc = splits.val.front();
  auto g = build_document_graph(doc, 3);
  const auto result = attach_labels(doc, g, LinkTask::kTable);

  std::set<int> table_nodes;
  for (std::size_t i = 0; i < doc.entities.size(); ++i)
    if (doc.entities[i].table_id) table_nodes.insert(static_cast<int>(i));
  REQUIRE(table_nodes.size() == 4);
  REQUIRE(result.gt_pairs == 6);  // C(4,2)

  for (const auto& e : g.edges) {
    const bool both = table_nodes.count(e.src) && table_nodes.count(e.dst);
    REQUIRE(e.link_label == (both ? "table" : "none"));
  }
  REQUIRE(result.positive_edges > 0);
  REQUIRE(result.coverage > 0.0);
}

TEST_CASE("sanitize_box clamps, swaps, and repairs degenerate boxes") {
  const ImageSize img{100, 80};
  auto b = sanitize_box({-5, -3, 60, 90}, img, "t");
  REQUIRE(b.xmin == 0.0);
  REQUIRE(b.ymin == 0.0);
  REQUIRE(b.xmax == 60.0);
  REQUIRE(b.ymax == 80.0);

  b = sanitize_box({40, 10, 20, 30}, img, "t");  // inverted x
  REQUIRE(b.xmin == 20.0);
  REQUIRE(b.xmax == 40.0);

  b = sanitize_box({50, 20, 50, 20}, img, "t");  // empty
  REQUIRE(b.xmax == b.xmin + 1.0);
  REQUIRE(b.ymax == b.ymin + 1.0);

  b = sanitize_box({150, 90, 160, 95}, img, "t");  // fully outside
  REQUIRE(b.xmin == 99.0);
  REQUIRE(b.xmax == 100.0);
  REQUIRE(b.ymin == 79.0);
  REQUIRE(b.ymax == 80.0);
  REQUIRE_NOTHROW(validate_box(b, img));
}
