#pragma once

#include <map>
#include <string>
#include <vector>

#include "layoutgraph/error.hpp"
#include "layoutgraph/graph.hpp"

namespace layoutgraph {

// Fixed, ordered class vocabulary mapping label strings to dense ids.
class LabelVocab {
public:
  LabelVocab() = default;
  explicit LabelVocab(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!index_.emplace(names_[i], static_cast<int>(i)).second)
        throw ConfigError("duplicate label in vocabulary: " + names_[i]);
    }
  }

  int id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown label: " + name);
    return it->second;
  }

  const std::string& name(int id) const {
    if (id < 0 || id >= size()) throw Error("internal", "label id out of range");
    return names_[static_cast<std::size_t>(id)];
  }

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

private:
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
};

inline LabelVocab funsd_entity_vocab() {
  return LabelVocab({"question", "answer", "header", "other"});
}

inline LabelVocab invoice_entity_vocab() {
  return LabelVocab(
      {"invoice_info", "other", "positions", "receiver", "supplier", "total"});
}

inline LabelVocab link_vocab() { return LabelVocab({"none", "key-value"}); }

inline LabelVocab table_link_vocab() { return LabelVocab({"none", "table"}); }

// Entity class ids for every node; throws DataError on a missing label.
inline std::vector<int> node_label_ids(const DocumentGraph& g, const LabelVocab& vocab) {
  std::vector<int> ids;
  ids.reserve(g.nodes.size());
  for (const auto& n : g.nodes) {
    if (!n.entity_label)
      throw DataError("node " + std::to_string(n.id) + " is missing an entity label");
    ids.push_back(vocab.id(*n.entity_label));
  }
  return ids;
}

// Link class ids for every edge; throws DataError on a missing label.
inline std::vector<int> edge_label_ids(const DocumentGraph& g, const LabelVocab& vocab) {
  std::vector<int> ids;
  ids.reserve(g.edges.size());
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    if (!e.link_label)
      throw DataError("edge " + std::to_string(i) + " is missing a link label");
    ids.push_back(vocab.id(*e.link_label));
  }
  return ids;
}

}  // namespace layoutgraph
