#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "layoutgraph/error.hpp"
#include "layoutgraph/graph.hpp"

namespace layoutgraph {

inline constexpr int kGraphFormatVersion = 1;

// One document per file. Doubles survive the round trip bit-exactly
// (nlohmann emits shortest round-trip representations).
inline nlohmann::json graph_to_json(const DocumentGraph& g) {
  nlohmann::json j;
  j["format_version"] = kGraphFormatVersion;
  j["image_size"] = {g.image_size.width, g.image_size.height};
  j["k"] = g.k;
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    nlohmann::json jn;
    jn["id"] = n.id;
    jn["box"] = {n.box.xmin, n.box.ymin, n.box.xmax, n.box.ymax};
    jn["geom"] = n.geom.as_array();
    if (n.entity_label) jn["label"] = *n.entity_label;
    if (n.text) jn["text"] = *n.text;
    nodes.push_back(std::move(jn));
  }
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& e : g.edges) {
    nlohmann::json je;
    je["src"] = e.src;
    je["dst"] = e.dst;
    je["geom"] = e.geom.as_array();
    if (e.link_label) je["link"] = *e.link_label;
    edges.push_back(std::move(je));
  }
  return j;
}

inline DocumentGraph graph_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != kGraphFormatVersion)
    throw IoError("graph file: unsupported or missing format_version");
  DocumentGraph g;
  g.image_size.width = j.at("image_size").at(0).get<double>();
  g.image_size.height = j.at("image_size").at(1).get<double>();
  g.k = j.at("k").get<int>();
  for (const auto& jn : j.at("nodes")) {
    GraphNode n;
    n.id = jn.at("id").get<int>();
    const auto& b = jn.at("box");
    n.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
             b.at(3).get<double>()};
    std::array<double, kNodeGeomDim> geom{};
    for (int i = 0; i < kNodeGeomDim; ++i)
      geom[static_cast<std::size_t>(i)] = jn.at("geom").at(static_cast<std::size_t>(i)).get<double>();
    n.geom = NodeGeomVector::from_array(geom);
    if (jn.contains("label")) n.entity_label = jn.at("label").get<std::string>();
    if (jn.contains("text")) n.text = jn.at("text").get<std::string>();
    g.nodes.push_back(std::move(n));
  }
  for (const auto& je : j.at("edges")) {
    GraphEdge e;
    e.src = je.at("src").get<int>();
    e.dst = je.at("dst").get<int>();
    std::array<double, kEdgeGeomDim> geom{};
    for (int i = 0; i < kEdgeGeomDim; ++i)
      geom[static_cast<std::size_t>(i)] = je.at("geom").at(static_cast<std::size_t>(i)).get<double>();
    e.geom = EdgeGeomVector::from_array(geom);
    if (je.contains("link")) e.link_label = je.at("link").get<std::string>();
    g.edges.push_back(std::move(e));
  }
  return g;
}

inline std::string graph_to_string(const DocumentGraph& g) { return graph_to_json(g).dump(2); }

inline void save_graph(const DocumentGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << graph_to_string(g) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

inline DocumentGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed graph file " + path.string() + ": " + e.what());
  }
  return graph_from_json(j);
}

}  // namespace layoutgraph
