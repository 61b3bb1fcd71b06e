#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "layoutgraph/error.hpp"
#include "layoutgraph/labels.hpp"
#include "layoutgraph/stage1.hpp"
#include "layoutgraph/stage2.hpp"
#include "layoutgraph/visual.hpp"

// Experiment configuration: one flat, versioned JSON document with every
// default written out explicitly, so choices the reference experiments leave
// unstated are visible and auditable in each run directory.
namespace layoutgraph {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kDataRootEnv = "LAYOUTGRAPH_DATA_ROOT";

struct ExperimentConfig {
  std::string dataset = "funsd";  // funsd | rvlcdip
  std::string dataset_root;
  std::string output_dir = "runs";
  int k = 10;
  double val_fraction = 0.1;
  double test_fraction = 0.2;  // rvlcdip only, when the dataset ships no split file
  std::uint64_t seed = 42;
  int limit_docs = 0;  // 0 keeps every document
  int workers = 1;
  std::string modality = "combined";  // combined | geometry-only | visual-only

  StageOneConfig stage1;
  FeatureMask features;
  VisualEncoderConfig visual;

  int gat_hidden = 1500;
  int gat_heads1 = 1;
  int gat_heads2 = 2;
  double feat_dropout = 0.2;
  double attn_dropout = 0.2;
  double negative_slope = 0.2;
  std::vector<int> head_widths = {1024, 256, 64, 16};
  double link_threshold = 0.5;
  int stage2_epochs = 100;
  double stage2_learning_rate = 1e-3;
  bool weighted_link_loss = true;

  void validate() const {
    if (dataset != "funsd" && dataset != "rvlcdip")
      throw ConfigError("dataset must be 'funsd' or 'rvlcdip', got '" + dataset + "'");
    if (k < 1) throw ConfigError("k must be at least 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
      throw ConfigError("val_fraction must be in [0, 1)");
    if (test_fraction < 0.0 || test_fraction >= 1.0)
      throw ConfigError("test_fraction must be in [0, 1)");
    if (limit_docs < 0) throw ConfigError("limit_docs must be >= 0");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    modality_from_name(modality);  // throws on unknown names
    stage1.validate();
    visual.validate();
    if (stage2_epochs < 1) throw ConfigError("stage2_epochs must be >= 1");
    if (stage2_learning_rate <= 0.0) throw ConfigError("stage2_learning_rate must be positive");
    stage2_config().validate();
  }

  LabelVocab entity_vocab() const {
    return dataset == "rvlcdip" ? invoice_entity_vocab() : funsd_entity_vocab();
  }

  // The env var wins over the config so one config file can travel between
  // machines whose datasets live in different places.
  std::string effective_dataset_root() const {
    if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
    return dataset_root;
  }

  StageTwoConfig stage2_config() const {
    StageTwoConfig c;
    c.input_dim = visual.embed_dim + kStage1EmbedDim;
    c.gat_hidden = gat_hidden;
    c.heads1 = gat_heads1;
    c.heads2 = gat_heads2;
    c.feat_dropout = feat_dropout;
    c.attn_dropout = attn_dropout;
    c.negative_slope = negative_slope;
    c.num_entity_classes = entity_vocab().size();
    c.head_widths = head_widths;
    c.link_threshold = link_threshold;
    return c;
  }

  StageTwoTrainConfig stage2_train_config() const {
    StageTwoTrainConfig c;
    c.epochs = stage2_epochs;
    c.learning_rate = stage2_learning_rate;
    c.seed = seed;
    c.weighted_link_loss = weighted_link_loss;
    c.modality = modality_from_name(modality);
    return c;
  }
};

// Ordered so the emitted document keeps a stable, readable field order.
using ConfigJson = nlohmann::ordered_json;

inline ConfigJson config_to_json(const ExperimentConfig& c) {
  ConfigJson j;
  j["config_version"] = kConfigVersion;
  j["dataset"] = c.dataset;
  j["dataset_root"] = c.dataset_root;
  j["output_dir"] = c.output_dir;
  j["k"] = c.k;
  j["val_fraction"] = c.val_fraction;
  j["test_fraction"] = c.test_fraction;
  j["seed"] = c.seed;
  j["limit_docs"] = c.limit_docs;
  j["workers"] = c.workers;
  j["modality"] = c.modality;
  j["stage1_dist_threshold"] = c.stage1.dist_threshold;
  j["stage1_scale_c"] = c.stage1.scale_c;
  j["stage1_margin"] = c.stage1.margin;
  j["stage1_p_norm"] = c.stage1.p_norm;
  j["stage1_triplets_per_anchor"] = c.stage1.triplets_per_anchor;
  j["stage1_epochs"] = c.stage1.epochs;
  j["stage1_learning_rate"] = c.stage1.learning_rate;
  j["stage1_seed"] = c.stage1.seed;
  j["feature_bbox"] = c.features.bbox;
  j["feature_area"] = c.features.area;
  j["feature_regional"] = c.features.regional;
  j["feature_angle"] = c.features.angle;
  j["feature_distance"] = c.features.distance;
  j["feature_polar"] = c.features.polar;
  j["feature_relpos"] = c.features.relpos;
  j["visual_crop_size"] = c.visual.crop_size;
  j["visual_embed_dim"] = c.visual.embed_dim;
  j["visual_pretrained_weights"] = c.visual.pretrained_weights;
  j["visual_trainable"] = c.visual.trainable;
  j["visual_base_width"] = c.visual.base_width;
  j["gat_hidden"] = c.gat_hidden;
  j["gat_heads1"] = c.gat_heads1;
  j["gat_heads2"] = c.gat_heads2;
  j["feat_dropout"] = c.feat_dropout;
  j["attn_dropout"] = c.attn_dropout;
  j["negative_slope"] = c.negative_slope;
  j["head_widths"] = c.head_widths;
  j["link_threshold"] = c.link_threshold;
  j["stage2_epochs"] = c.stage2_epochs;
  j["stage2_learning_rate"] = c.stage2_learning_rate;
  j["weighted_link_loss"] = c.weighted_link_loss;
  return j;
}

namespace detail {

template <typename T>
void read_field(const ConfigJson& j, std::set<std::string>& seen, const char* key, T* out) {
  auto it = j.find(key);
  if (it == j.end()) return;  // absent keys keep their defaults
  seen.insert(key);
  try {
    *out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const ConfigJson& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  std::set<std::string> seen;

  int version = kConfigVersion;
  detail::read_field(j, seen, "config_version", &version);
  if (version != kConfigVersion)
    throw ConfigError("unsupported config_version " + std::to_string(version));

  detail::read_field(j, seen, "dataset", &c.dataset);
  detail::read_field(j, seen, "dataset_root", &c.dataset_root);
  detail::read_field(j, seen, "output_dir", &c.output_dir);
  detail::read_field(j, seen, "k", &c.k);
  detail::read_field(j, seen, "val_fraction", &c.val_fraction);
  detail::read_field(j, seen, "test_fraction", &c.test_fraction);
  detail::read_field(j, seen, "seed", &c.seed);
  detail::read_field(j, seen, "limit_docs", &c.limit_docs);
  detail::read_field(j, seen, "workers", &c.workers);
  detail::read_field(j, seen, "modality", &c.modality);
  detail::read_field(j, seen, "stage1_dist_threshold", &c.stage1.dist_threshold);
  detail::read_field(j, seen, "stage1_scale_c", &c.stage1.scale_c);
  detail::read_field(j, seen, "stage1_margin", &c.stage1.margin);
  detail::read_field(j, seen, "stage1_p_norm", &c.stage1.p_norm);
  detail::read_field(j, seen, "stage1_triplets_per_anchor", &c.stage1.triplets_per_anchor);
  detail::read_field(j, seen, "stage1_epochs", &c.stage1.epochs);
  detail::read_field(j, seen, "stage1_learning_rate", &c.stage1.learning_rate);
  detail::read_field(j, seen, "stage1_seed", &c.stage1.seed);
  detail::read_field(j, seen, "feature_bbox", &c.features.bbox);
  detail::read_field(j, seen, "feature_area", &c.features.area);
  detail::read_field(j, seen, "feature_regional", &c.features.regional);
  detail::read_field(j, seen, "feature_angle", &c.features.angle);
  detail::read_field(j, seen, "feature_distance", &c.features.distance);
  detail::read_field(j, seen, "feature_polar", &c.features.polar);
  detail::read_field(j, seen, "feature_relpos", &c.features.relpos);
  detail::read_field(j, seen, "visual_crop_size", &c.visual.crop_size);
  detail::read_field(j, seen, "visual_embed_dim", &c.visual.embed_dim);
  detail::read_field(j, seen, "visual_pretrained_weights", &c.visual.pretrained_weights);
  detail::read_field(j, seen, "visual_trainable", &c.visual.trainable);
  detail::read_field(j, seen, "visual_base_width", &c.visual.base_width);
  detail::read_field(j, seen, "gat_hidden", &c.gat_hidden);
  detail::read_field(j, seen, "gat_heads1", &c.gat_heads1);
  detail::read_field(j, seen, "gat_heads2", &c.gat_heads2);
  detail::read_field(j, seen, "feat_dropout", &c.feat_dropout);
  detail::read_field(j, seen, "attn_dropout", &c.attn_dropout);
  detail::read_field(j, seen, "negative_slope", &c.negative_slope);
  detail::read_field(j, seen, "head_widths", &c.head_widths);
  detail::read_field(j, seen, "link_threshold", &c.link_threshold);
  detail::read_field(j, seen, "stage2_epochs", &c.stage2_epochs);
  detail::read_field(j, seen, "stage2_learning_rate", &c.stage2_learning_rate);
  detail::read_field(j, seen, "weighted_link_loss", &c.weighted_link_loss);

  // Unknown keys are rejected so a typo in a hand-edited file fails loudly
  // instead of silently running with the default.
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "config_version" && !seen.count(it.key()))
      throw ConfigError("unknown config field '" + it.key() + "'");
  }
  c.validate();
  return c;
}

inline void save_config(const std::string& path, const ExperimentConfig& c) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config: " + path);
  out << config_to_json(c).dump(2) << "\n";
  if (!out) throw IoError("cannot write config: " + path);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  ConfigJson j = ConfigJson::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + ": invalid JSON");
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace layoutgraph
