#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "layoutgraph/error.hpp"
#include "layoutgraph/graph.hpp"
#include "layoutgraph/image.hpp"
#include "layoutgraph/labels.hpp"
#include "layoutgraph/log.hpp"
#include "layoutgraph/rng.hpp"

// Dataset loading: FUNSD forms and RVL-CDIP invoice annotations become
// DocumentRecords, which in turn become labeled DocumentGraphs.
namespace layoutgraph {

struct EntityRecord {
  int id = 0;
  BBox box;
  std::string label;
  std::vector<std::pair<int, int>> links;  // (from, to) entity ids
  std::optional<std::string> text;         // metadata only, never a model input
  std::optional<int> table_id;
};

struct DocumentRecord {
  std::string doc_id;
  std::string image_path;
  ImageSize image_size;
  std::vector<EntityRecord> entities;
  std::vector<BBox> gt_tables;  // union box per annotated table
};

struct SkippedDoc {
  std::string doc_id;
  std::string reason;
};

struct DatasetSplits {
  std::vector<DocumentRecord> train;
  std::vector<DocumentRecord> val;
  std::vector<DocumentRecord> test;
  std::vector<SkippedDoc> skipped;
};

// Clamp a box into the image, repairing inverted or empty extents in place so
// entity ids stay aligned with the annotation. Every repair is logged.
inline BBox sanitize_box(BBox box, const ImageSize& image, const std::string& context) {
  const BBox original = box;
  if (box.xmin > box.xmax) std::swap(box.xmin, box.xmax);
  if (box.ymin > box.ymax) std::swap(box.ymin, box.ymax);
  box.xmin = std::clamp(box.xmin, 0.0, image.width);
  box.xmax = std::clamp(box.xmax, 0.0, image.width);
  box.ymin = std::clamp(box.ymin, 0.0, image.height);
  box.ymax = std::clamp(box.ymax, 0.0, image.height);
  if (box.xmax <= box.xmin) {
    if (image.width < 1.0) throw DataError(context + ": image too narrow for any box");
    box.xmin = std::min(box.xmin, image.width - 1.0);
    box.xmax = box.xmin + 1.0;
  }
  if (box.ymax <= box.ymin) {
    if (image.height < 1.0) throw DataError(context + ": image too short for any box");
    box.ymin = std::min(box.ymin, image.height - 1.0);
    box.ymax = box.ymin + 1.0;
  }
  if (box.xmin != original.xmin || box.ymin != original.ymin || box.xmax != original.xmax ||
      box.ymax != original.ymax)
    log::warn(context + ": box [" + std::to_string(original.xmin) + ", " +
              std::to_string(original.ymin) + ", " + std::to_string(original.xmax) + ", " +
              std::to_string(original.ymax) + "] clamped to the image");
  return box;
}

namespace detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.filename().string() + ": invalid JSON: " + e.what());
  }
}

inline BBox parse_box(const nlohmann::json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 4)
    throw DataError(context + ": box must be an array of four numbers");
  for (const auto& v : j)
    if (!v.is_number()) throw DataError(context + ": box must be an array of four numbers");
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline std::optional<std::filesystem::path> find_image(const std::filesystem::path& dir,
                                                       const std::string& stem) {
  for (const char* ext : {".png", ".pgm", ".ppm"}) {
    auto candidate = dir / (stem + ext);
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return std::nullopt;
}

inline void validate_entity_ids(const std::vector<EntityRecord>& entities,
                                const std::string& context) {
  std::set<int> ids;
  for (const auto& e : entities)
    if (!ids.insert(e.id).second)
      throw DataError(context + ": duplicate entity id " + std::to_string(e.id));
  for (const auto& e : entities)
    for (const auto& [from, to] : e.links)
      if (!ids.count(from) || !ids.count(to))
        throw DataError(context + ": link (" + std::to_string(from) + ", " + std::to_string(to) +
                        ") references a missing entity id");
}

inline std::vector<EntityRecord> parse_funsd_form(const nlohmann::json& doc,
                                                  const std::string& context,
                                                  const LabelVocab& vocab) {
  if (!doc.contains("form") || !doc["form"].is_array())
    throw DataError(context + ": missing \"form\" array");
  std::vector<EntityRecord> entities;
  for (const auto& item : doc["form"]) {
    EntityRecord e;
    if (!item.contains("id") || !item["id"].is_number_integer())
      throw DataError(context + ": entity without integer id");
    e.id = item["id"].get<int>();
    if (!item.contains("box")) throw DataError(context + ": entity " + std::to_string(e.id) +
                                               " has no box");
    e.box = parse_box(item["box"], context + ": entity " + std::to_string(e.id));
    if (!item.contains("label") || !item["label"].is_string())
      throw DataError(context + ": entity " + std::to_string(e.id) + " has no label");
    e.label = item["label"].get<std::string>();
    if (!vocab.contains(e.label))
      throw DataError(context + ": entity " + std::to_string(e.id) + " has unknown label '" +
                      e.label + "'");
    if (item.contains("text") && item["text"].is_string())
      e.text = item["text"].get<std::string>();
    if (item.contains("linking")) {
      if (!item["linking"].is_array())
        throw DataError(context + ": entity " + std::to_string(e.id) + " linking must be a list");
      for (const auto& pair : item["linking"]) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
            !pair[1].is_number_integer())
          throw DataError(context + ": entity " + std::to_string(e.id) +
                          " linking entries must be [from, to] id pairs");
        e.links.emplace_back(pair[0].get<int>(), pair[1].get<int>());
      }
    }
    entities.push_back(std::move(e));
  }
  validate_entity_ids(entities, context);
  return entities;
}

// Loads one split directory (annotations/ + images/); missing images skip the
// document, anything malformed throws.
inline void load_funsd_split(const std::filesystem::path& split_dir,
                             std::vector<DocumentRecord>* out,
                             std::vector<SkippedDoc>* skipped, const LabelVocab& vocab) {
  const auto ann_dir = split_dir / "annotations";
  const auto img_dir = split_dir / "images";
  if (!std::filesystem::is_directory(ann_dir))
    throw IoError("funsd: missing annotation directory " + ann_dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(ann_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("funsd: no annotation files in " + ann_dir.string());

  for (const auto& file : files) {
    const std::string doc_id = file.stem().string();
    const std::string context = "funsd: " + file.filename().string();
    const auto image = find_image(img_dir, doc_id);
    if (!image) {
      log::warn(context + ": no image found, skipping document");
      skipped->push_back({doc_id, "missing image"});
      continue;
    }
    DocumentRecord rec;
    rec.doc_id = doc_id;
    rec.image_path = image->string();
    rec.image_size = read_image_size(image->string());
    rec.entities = parse_funsd_form(read_json_file(file), context, vocab);
    for (auto& e : rec.entities)
      e.box = sanitize_box(e.box, rec.image_size, context + ": entity " + std::to_string(e.id));
    out->push_back(std::move(rec));
  }
}

// Seeded carve: shuffle indices, take the first round(fraction*n).
inline std::vector<std::size_t> carve_indices(std::size_t n, double fraction,
                                              std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto take = static_cast<std::size_t>(
      std::lround(fraction * static_cast<double>(n)));
  order.resize(std::min(take, n));
  std::sort(order.begin(), order.end());
  return order;
}

inline void split_off(std::vector<DocumentRecord>* source, const std::vector<std::size_t>& idx,
                      std::vector<DocumentRecord>* taken) {
  std::vector<DocumentRecord> keep;
  std::size_t next = 0;
  for (std::size_t i = 0; i < source->size(); ++i) {
    if (next < idx.size() && idx[next] == i) {
      taken->push_back(std::move((*source)[i]));
      ++next;
    } else {
      keep.push_back(std::move((*source)[i]));
    }
  }
  *source = std::move(keep);
}

}  // namespace detail

// Standard FUNSD layout under root (or root/dataset): training_data/ and
// testing_data/, each holding annotations/*.json plus sibling images/. The
// validation split is carved from training documents with the given seed.
inline DatasetSplits load_funsd(const std::string& root, double val_fraction = 0.1,
                                std::uint64_t seed = 42) {
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("funsd: val_fraction must be in [0, 1)");
  namespace fs = std::filesystem;
  fs::path base(root);
  if (!fs::is_directory(base / "training_data") && fs::is_directory(base / "dataset"))
    base /= "dataset";
  if (!fs::is_directory(base / "training_data") || !fs::is_directory(base / "testing_data"))
    throw IoError("funsd: " + root + " does not contain training_data/ and testing_data/");

  const auto vocab = funsd_entity_vocab();
  DatasetSplits splits;
  detail::load_funsd_split(base / "training_data", &splits.train, &splits.skipped, vocab);
  detail::load_funsd_split(base / "testing_data", &splits.test, &splits.skipped, vocab);

  const auto val_idx = detail::carve_indices(splits.train.size(), val_fraction, seed);
  detail::split_off(&splits.train, val_idx, &splits.val);
  log::info("funsd: " + std::to_string(splits.train.size()) + " train / " +
            std::to_string(splits.val.size()) + " val / " + std::to_string(splits.test.size()) +
            " test documents (" + std::to_string(splits.skipped.size()) + " skipped)");
  return splits;
}

// RVL-CDIP Invoices annotations, one JSON per document:
//   { "image": "<relative path>",
//     "regions": [ { "id": 0, "box": [x0, y0, x1, y1], "label": "supplier",
//                    "table": 1, "links": [[0, 3]] } ] }
// "table" groups regions into annotated tables (ground-truth table boxes are
// the union of member boxes); "links" is optional and follows FUNSD linking.
// An optional splits.json ({"train": [...], "validation": [...], "test":
// [...]}, document stems) pins the split; otherwise test_fraction and
// val_fraction are carved with the seed.
inline DatasetSplits load_rvlcdip_invoices(const std::string& root, double val_fraction = 0.1,
                                           double test_fraction = 0.2, std::uint64_t seed = 42) {
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("rvl: val_fraction must be in [0, 1)");
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw ConfigError("rvl: test_fraction must be in [0, 1)");
  namespace fs = std::filesystem;
  const fs::path base(root);
  const auto ann_dir = base / "annotations";
  if (!fs::is_directory(ann_dir))
    throw IoError("rvl: missing annotation directory " + ann_dir.string());

  const auto vocab = invoice_entity_vocab();
  std::vector<std::filesystem::path> files;
  for (const auto& entry : fs::directory_iterator(ann_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("rvl: no annotation files in " + ann_dir.string());

  DatasetSplits splits;
  std::vector<DocumentRecord> all;
  for (const auto& file : files) {
    const std::string doc_id = file.stem().string();
    const std::string context = "rvl: " + file.filename().string();
    const auto doc = detail::read_json_file(file);
    if (!doc.contains("image") || !doc["image"].is_string())
      throw DataError(context + ": missing \"image\" path");
    const fs::path image_path = base / doc["image"].get<std::string>();
    if (!fs::exists(image_path)) {
      log::warn(context + ": no image found, skipping document");
      splits.skipped.push_back({doc_id, "missing image"});
      continue;
    }
    if (!doc.contains("regions") || !doc["regions"].is_array())
      throw DataError(context + ": missing \"regions\" array");

    DocumentRecord rec;
    rec.doc_id = doc_id;
    rec.image_path = image_path.string();
    rec.image_size = read_image_size(image_path.string());
    for (const auto& item : doc["regions"]) {
      EntityRecord e;
      if (!item.contains("id") || !item["id"].is_number_integer())
        throw DataError(context + ": region without integer id");
      e.id = item["id"].get<int>();
      if (!item.contains("box"))
        throw DataError(context + ": region " + std::to_string(e.id) + " has no box");
      e.box = detail::parse_box(item["box"], context + ": region " + std::to_string(e.id));
      if (!item.contains("label") || !item["label"].is_string())
        throw DataError(context + ": region " + std::to_string(e.id) + " has no label");
      e.label = item["label"].get<std::string>();
      if (!vocab.contains(e.label))
        throw DataError(context + ": region " + std::to_string(e.id) + " has unknown label '" +
                        e.label + "'");
      if (item.contains("table")) {
        if (!item["table"].is_number_integer())
          throw DataError(context + ": region " + std::to_string(e.id) +
                          " table id must be an integer");
        e.table_id = item["table"].get<int>();
      }
      if (item.contains("text") && item["text"].is_string())
        e.text = item["text"].get<std::string>();
      if (item.contains("links")) {
        for (const auto& pair : item["links"]) {
          if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
              !pair[1].is_number_integer())
            throw DataError(context + ": region " + std::to_string(e.id) +
                            " links entries must be [from, to] id pairs");
          e.links.emplace_back(pair[0].get<int>(), pair[1].get<int>());
        }
      }
      rec.entities.push_back(std::move(e));
    }
    detail::validate_entity_ids(rec.entities, context);
    for (auto& e : rec.entities)
      e.box = sanitize_box(e.box, rec.image_size, context + ": region " + std::to_string(e.id));

    std::map<int, BBox> tables;
    for (const auto& e : rec.entities) {
      if (!e.table_id) continue;
      auto [it, fresh] = tables.try_emplace(*e.table_id, e.box);
      if (!fresh) {
        it->second.xmin = std::min(it->second.xmin, e.box.xmin);
        it->second.ymin = std::min(it->second.ymin, e.box.ymin);
        it->second.xmax = std::max(it->second.xmax, e.box.xmax);
        it->second.ymax = std::max(it->second.ymax, e.box.ymax);
      }
    }
    for (const auto& [id, box] : tables) rec.gt_tables.push_back(box);
    all.push_back(std::move(rec));
  }

  const auto splits_file = base / "splits.json";
  if (std::filesystem::exists(splits_file)) {
    const auto j = detail::read_json_file(splits_file);
    std::map<std::string, int> assignment;  // 0 train, 1 val, 2 test
    const char* names[] = {"train", "validation", "test"};
    for (int s = 0; s < 3; ++s) {
      if (!j.contains(names[s])) continue;
      for (const auto& id : j[names[s]]) {
        if (!id.is_string()) throw DataError("rvl: splits.json entries must be document ids");
        if (!assignment.emplace(id.get<std::string>(), s).second)
          throw DataError("rvl: splits.json assigns '" + id.get<std::string>() +
                          "' to more than one split");
      }
    }
    for (auto& rec : all) {
      const auto it = assignment.find(rec.doc_id);
      if (it == assignment.end())
        throw DataError("rvl: splits.json does not mention document '" + rec.doc_id + "'");
      (it->second == 0 ? splits.train : it->second == 1 ? splits.val : splits.test)
          .push_back(std::move(rec));
    }
  } else {
    splits.train = std::move(all);
    const auto test_idx = detail::carve_indices(splits.train.size(), test_fraction, seed);
    detail::split_off(&splits.train, test_idx, &splits.test);
    const auto val_idx =
        detail::carve_indices(splits.train.size(), val_fraction, seed ^ 0x72766cULL);
    detail::split_off(&splits.train, val_idx, &splits.val);
  }
  log::info("rvl: " + std::to_string(splits.train.size()) + " train / " +
            std::to_string(splits.val.size()) + " val / " + std::to_string(splits.test.size()) +
            " test documents (" + std::to_string(splits.skipped.size()) + " skipped)");
  return splits;
}

// Node order inside a document graph: entities sorted by id.
inline std::vector<std::size_t> entity_order(const DocumentRecord& record) {
  std::vector<std::size_t> order(record.entities.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return record.entities[a].id < record.entities[b].id;
  });
  return order;
}

inline DocumentGraph build_document_graph(const DocumentRecord& record, int k) {
  if (record.entities.empty())
    throw DataError("graph: document '" + record.doc_id + "' has no entities");
  std::vector<BBox> boxes;
  boxes.reserve(record.entities.size());
  for (std::size_t i : entity_order(record)) boxes.push_back(record.entities[i].box);
  auto g = build_graph(boxes, record.image_size, k);
  const auto order = entity_order(record);
  for (std::size_t i = 0; i < order.size(); ++i) {
    g.nodes[i].entity_label = record.entities[order[i]].label;
    g.nodes[i].text = record.entities[order[i]].text;
  }
  return g;
}

enum class LinkTask { kKeyValue, kTable };

struct AttachResult {
  long gt_pairs = 0;        // unordered ground-truth linked pairs
  long covered_pairs = 0;   // those present as at least one graph edge
  long positive_edges = 0;  // directed edges labeled positive
  double coverage = -1.0;   // covered / gt, negative when gt_pairs == 0
};

// Write entity labels onto nodes and link labels onto edges. Key-value: an
// edge is positive iff its unordered endpoint pair appears in any linking
// entry. Table: positive iff both endpoints belong to the same table. Also
// reports link coverage, the recall ceiling the kNN construction imposes.
inline AttachResult attach_labels(const DocumentRecord& record, DocumentGraph& g, LinkTask task) {
  const auto order = entity_order(record);
  if (static_cast<std::size_t>(g.num_nodes()) != record.entities.size())
    throw DataError("labels: graph for '" + record.doc_id + "' has " +
                    std::to_string(g.num_nodes()) + " nodes but the record has " +
                    std::to_string(record.entities.size()) + " entities");

  std::map<int, int> id_to_node;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& e = record.entities[order[i]];
    g.nodes[i].entity_label = e.label;
    g.nodes[i].text = e.text;
    id_to_node[e.id] = static_cast<int>(i);
  }

  std::set<std::pair<int, int>> positive;  // node-index pairs, lower first
  if (task == LinkTask::kKeyValue) {
    for (const auto& e : record.entities) {
      for (const auto& [from, to] : e.links) {
        const auto a = id_to_node.find(from);
        const auto b = id_to_node.find(to);
        if (a == id_to_node.end() || b == id_to_node.end())
          throw DataError("labels: '" + record.doc_id + "' links reference missing entity ids");
        if (a->second == b->second) continue;  // self-links carry no edge
        positive.emplace(std::min(a->second, b->second), std::max(a->second, b->second));
      }
    }
  } else {
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (std::size_t j = i + 1; j < order.size(); ++j) {
        const auto& a = record.entities[order[i]];
        const auto& b = record.entities[order[j]];
        if (a.table_id && b.table_id && *a.table_id == *b.table_id)
          positive.emplace(static_cast<int>(i), static_cast<int>(j));
      }
    }
  }

  const std::string positive_name = task == LinkTask::kKeyValue ? "key-value" : "table";
  AttachResult result;
  result.gt_pairs = static_cast<long>(positive.size());
  std::set<std::pair<int, int>> covered;
  for (auto& e : g.edges) {
    const auto key = std::make_pair(std::min(e.src, e.dst), std::max(e.src, e.dst));
    if (positive.count(key)) {
      e.link_label = positive_name;
      ++result.positive_edges;
      covered.insert(key);
    } else {
      e.link_label = "none";
    }
  }
  result.covered_pairs = static_cast<long>(covered.size());
  if (result.gt_pairs > 0)
    result.coverage =
        static_cast<double>(result.covered_pairs) / static_cast<double>(result.gt_pairs);
  return result;
}

}  // namespace layoutgraph
