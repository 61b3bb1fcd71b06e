#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "layoutgraph/autograd.hpp"
#include "layoutgraph/error.hpp"
#include "layoutgraph/graph.hpp"
#include "layoutgraph/image.hpp"
#include "layoutgraph/log.hpp"
#include "layoutgraph/nn.hpp"
#include "layoutgraph/rng.hpp"
#include "layoutgraph/stage1.hpp"
#include "layoutgraph/visual.hpp"

// Stage II: two graph-attention layers over combined geometric+visual node
// features feed an entity-labeling head and, through the triplet edge
// representation h_src || h_dst || cls_src || cls_dst || e_polar, a link head.
// Both heads train jointly on summed cross-entropies.
namespace layoutgraph {

inline constexpr int kStageTwoInputDim = kStage1EmbedDim + kVisualEmbedDim;  // 1465
inline constexpr int kPolarDim = 6;

struct StageTwoConfig {
  int input_dim = kStageTwoInputDim;
  int gat_hidden = 1500;  // per-head output width of both layers
  int heads1 = 1;
  int heads2 = 2;
  double feat_dropout = 0.2;
  double attn_dropout = 0.2;
  double negative_slope = 0.2;
  int num_entity_classes = 4;
  int num_link_classes = 2;
  std::vector<int> head_widths = {1024, 256, 64, 16};
  double link_threshold = 0.5;

  int hidden_dim() const { return gat_hidden * heads2; }
  int edge_input_dim() const { return 2 * hidden_dim() + 2 * num_entity_classes + kPolarDim; }

  void validate() const {
    if (input_dim < 1) throw ConfigError("stage2: input_dim must be positive");
    if (gat_hidden < 1) throw ConfigError("stage2: gat_hidden must be positive");
    if (heads1 < 1 || heads2 < 1) throw ConfigError("stage2: head counts must be positive");
    if (feat_dropout < 0.0 || feat_dropout >= 1.0)
      throw ConfigError("stage2: feat_dropout must be in [0, 1)");
    if (attn_dropout < 0.0 || attn_dropout >= 1.0)
      throw ConfigError("stage2: attn_dropout must be in [0, 1)");
    if (negative_slope <= 0.0) throw ConfigError("stage2: negative_slope must be positive");
    if (num_entity_classes < 2) throw ConfigError("stage2: need at least 2 entity classes");
    if (num_link_classes != 2) throw ConfigError("stage2: link head is binary");
    if (head_widths.empty()) throw ConfigError("stage2: head_widths must be nonempty");
    for (int w : head_widths)
      if (w < 1) throw ConfigError("stage2: head widths must be positive");
    if (link_threshold <= 0.0 || link_threshold >= 1.0)
      throw ConfigError("stage2: link_threshold must be in (0, 1)");
  }
};

// Directed message edges for attention: every graph edge src->dst plus one
// self-loop per node, so isolated nodes keep a well-defined neighborhood.
inline std::vector<std::pair<int, int>> attention_edges(const DocumentGraph& g) {
  std::vector<std::pair<int, int>> out;
  out.reserve(g.edges.size() + g.nodes.size());
  for (const auto& e : g.edges) out.emplace_back(e.src, e.dst);
  for (int v = 0; v < g.num_nodes(); ++v) out.emplace_back(v, v);
  return out;
}

// Pre-dropout attention coefficients, per layer and head, aligned with the
// attention_edges order. Kept for tests and diagnostics.
struct GatTrace {
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<ad::Matrix>> alphas;  // [layer][head], each E_loops x 1
};

class GatLayer {
public:
  GatLayer() = default;
  GatLayer(nn::ParamStore& store, const std::string& name, int in_dim, int out_dim, int heads,
           double negative_slope, double feat_dropout, double attn_dropout, Rng& rng)
      : in_dim_(in_dim),
        out_dim_(out_dim),
        heads_(heads),
        negative_slope_(negative_slope),
        feat_dropout_(feat_dropout),
        attn_dropout_(attn_dropout) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    const double abound = 1.0 / std::sqrt(static_cast<double>(out_dim));
    for (int k = 0; k < heads; ++k) {
      const std::string h = name + ".h" + std::to_string(k);
      auto w = store.create(h + ".weight", in_dim, out_dim);
      auto asrc = store.create(h + ".a_src", out_dim, 1);
      auto adst = store.create(h + ".a_dst", out_dim, 1);
      nn::init_uniform(w, -bound, bound, rng);
      nn::init_uniform(asrc, -abound, abound, rng);
      nn::init_uniform(adst, -abound, abound, rng);
      weights_.push_back(w);
      a_src_.push_back(asrc);
      a_dst_.push_back(adst);
    }
    if (in_dim != out_dim * heads) {
      res_weight_ = store.create(name + ".res.weight", in_dim, out_dim * heads);
      nn::init_uniform(res_weight_, -bound, bound, rng);
    }
    bias_ = store.create(name + ".bias", 1, out_dim * heads);  // zero-initialized
  }

  // x: N x in_dim; edges carry messages src->dst and must include self-loops.
  ad::Var forward(const ad::Var& x, const std::vector<std::pair<int, int>>& edges, int num_nodes,
                  bool training, Rng* rng, std::vector<ad::Matrix>* alphas_out = nullptr) const {
    if (x->value.cols() != in_dim_)
      throw ConfigError("stage2: attention layer expected width " + std::to_string(in_dim_) +
                        ", got " + std::to_string(x->value.cols()));
    if (training && !rng) throw Error("internal", "stage2: training forward needs an rng");
    std::vector<int> srcs, dsts;
    srcs.reserve(edges.size());
    dsts.reserve(edges.size());
    for (const auto& [s, d] : edges) {
      srcs.push_back(s);
      dsts.push_back(d);
    }
    auto h = training ? ad::dropout(x, feat_dropout_, *rng, true) : x;
    std::vector<ad::Var> head_outputs;
    for (int k = 0; k < heads_; ++k) {
      auto z = ad::matmul(h, weights_[static_cast<std::size_t>(k)]);
      auto s_src = ad::matmul(z, a_src_[static_cast<std::size_t>(k)]);
      auto s_dst = ad::matmul(z, a_dst_[static_cast<std::size_t>(k)]);
      auto scores =
          ad::leaky_relu(ad::add(ad::gather_rows(s_src, srcs), ad::gather_rows(s_dst, dsts)),
                         negative_slope_);
      auto alpha = ad::segment_softmax(scores, dsts, num_nodes);
      if (alphas_out) alphas_out->push_back(alpha->value);
      if (training) alpha = ad::dropout(alpha, attn_dropout_, *rng, true);
      auto messages = ad::scale_rows(ad::gather_rows(z, srcs), alpha);
      head_outputs.push_back(ad::segment_sum(messages, dsts, num_nodes));
    }
    auto out = heads_ == 1 ? head_outputs[0] : ad::concat_cols(head_outputs);
    auto res = res_weight_ ? ad::matmul(h, res_weight_) : h;
    return ad::add_rowvec(ad::add(out, res), bias_);
  }

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  int heads() const { return heads_; }

private:
  int in_dim_ = 0, out_dim_ = 0, heads_ = 0;
  double negative_slope_ = 0.2, feat_dropout_ = 0.0, attn_dropout_ = 0.0;
  std::vector<ad::Var> weights_, a_src_, a_dst_;
  ad::Var res_weight_;  // null when in_dim == out_dim * heads (identity shortcut)
  ad::Var bias_;
};

// Affine stack with ReLU between layers and raw logits at the end.
class Mlp {
public:
  Mlp() = default;
  Mlp(nn::ParamStore& store, const std::string& name, int in_dim, const std::vector<int>& hidden,
      int out_dim, Rng& rng) {
    int cur = in_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      layers_.emplace_back(store, name + ".fc" + std::to_string(i), cur, hidden[i], rng);
      cur = hidden[i];
    }
    layers_.emplace_back(store, name + ".fc" + std::to_string(hidden.size()), cur, out_dim, rng);
  }

  ad::Var forward(ad::Var x) const {
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) x = ad::relu(layers_[i].forward(x));
    return layers_.back().forward(x);
  }

  std::size_t depth() const { return layers_.size(); }

private:
  std::vector<nn::Linear> layers_;
};

inline ad::Matrix polar_features(const DocumentGraph& g) {
  ad::Matrix polar = ad::Matrix::Zero(static_cast<Eigen::Index>(g.edges.size()), kPolarDim);
  for (std::size_t i = 0; i < g.edges.size(); ++i)
    polar(static_cast<Eigen::Index>(i), g.edges[i].geom.polar_index()) = 1.0;
  return polar;
}

// h_e = h_src || h_dst || cls_src || cls_dst || e_polar, in exactly that order.
// cls rows are the node head's softmax probabilities.
inline ad::Var edge_representation(const ad::Var& h, const ad::Var& cls,
                                   const std::vector<GraphEdge>& edges, const ad::Matrix& polar) {
  if (static_cast<Eigen::Index>(edges.size()) != polar.rows())
    throw Error("internal", "stage2: polar rows must match edge count");
  std::vector<int> srcs, dsts;
  srcs.reserve(edges.size());
  dsts.reserve(edges.size());
  const int n = static_cast<int>(h->value.rows());
  for (const auto& e : edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
      throw DataError("stage2: edge endpoint out of range");
    if (e.src == e.dst) throw DataError("stage2: edge endpoints must differ");
    srcs.push_back(e.src);
    dsts.push_back(e.dst);
  }
  return ad::concat_cols({ad::gather_rows(h, srcs), ad::gather_rows(h, dsts),
                          ad::gather_rows(cls, srcs), ad::gather_rows(cls, dsts),
                          ad::constant(polar)});
}

class StageTwoModel {
public:
  explicit StageTwoModel(StageTwoConfig config, std::uint64_t seed = 13) : config_(config) {
    config_.validate();
    Rng rng(seed);
    gat1_ = GatLayer(store_, "gat1", config_.input_dim, config_.gat_hidden, config_.heads1,
                     config_.negative_slope, config_.feat_dropout, config_.attn_dropout, rng);
    gat2_ = GatLayer(store_, "gat2", config_.gat_hidden * config_.heads1, config_.gat_hidden,
                     config_.heads2, config_.negative_slope, config_.feat_dropout,
                     config_.attn_dropout, rng);
    node_head_ = Mlp(store_, "node_head", config_.hidden_dim(), config_.head_widths,
                     config_.num_entity_classes, rng);
    edge_head_ = Mlp(store_, "edge_head", config_.edge_input_dim(), config_.head_widths,
                     config_.num_link_classes, rng);
    if (node_head_.depth() != config_.head_widths.size() + 1 ||
        edge_head_.depth() != config_.head_widths.size() + 1)
      throw ConfigError("stage2: head depth mismatch");
  }

  struct Output {
    ad::Var hidden;       // N x hidden_dim
    ad::Var node_logits;  // N x num_entity_classes
    ad::Var node_probs;   // N x num_entity_classes (softmax of node_logits)
    ad::Var edge_logits;  // E x num_link_classes, in graph edge order
  };

  // x: combined per-node features, N x input_dim. rng required when training.
  Output forward(const DocumentGraph& g, const ad::Var& x, bool training = false,
                 Rng* rng = nullptr, GatTrace* trace = nullptr) const {
    if (g.num_nodes() == 0) throw DataError("stage2: graph has no nodes");
    if (x->value.rows() != g.num_nodes())
      throw ConfigError("stage2: feature rows must match node count");
    if (x->value.cols() != config_.input_dim)
      throw ConfigError("stage2: combined feature width " + std::to_string(x->value.cols()) +
                        " does not match configured input width " +
                        std::to_string(config_.input_dim));
    const auto edges = attention_edges(g);
    if (trace) {
      trace->edges = edges;
      trace->alphas.assign(2, {});
    }
    auto h1 = gat1_.forward(x, edges, g.num_nodes(), training, rng,
                            trace ? &trace->alphas[0] : nullptr);
    h1 = ad::elu(h1);
    auto h2 = gat2_.forward(h1, edges, g.num_nodes(), training, rng,
                            trace ? &trace->alphas[1] : nullptr);
    Output out;
    out.hidden = h2;
    out.node_logits = node_head_.forward(h2);
    out.node_probs = ad::softmax_rows(out.node_logits);
    out.edge_logits = edge_head_.forward(
        edge_representation(h2, out.node_probs, g.edges, polar_features(g)));
    return out;
  }

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const StageTwoConfig& config() const { return config_; }

private:
  StageTwoConfig config_;
  nn::ParamStore store_;
  GatLayer gat1_, gat2_;
  Mlp node_head_, edge_head_;
};

// sklearn-style balanced weights: total / (num_classes * count); absent
// classes get weight 0 (no sample can select them).
inline std::vector<double> inverse_frequency_weights(const std::vector<int>& labels,
                                                     int num_classes) {
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw DataError("stage2: label out of range for weighting");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  std::vector<double> w(static_cast<std::size_t>(num_classes), 0.0);
  const double total = static_cast<double>(labels.size());
  for (int c = 0; c < num_classes; ++c)
    if (counts[static_cast<std::size_t>(c)] > 0.0)
      w[static_cast<std::size_t>(c)] = total / (num_classes * counts[static_cast<std::size_t>(c)]);
  return w;
}

struct JointLoss {
  ad::Var total;
  ad::Var entity;
  ad::Var link;
};

// L_total = L_entity + L_link, both sum-convention cross-entropies; the link
// term takes optional class weights (empty = unweighted).
inline JointLoss joint_loss(const ad::Var& node_logits, const std::vector<int>& node_labels,
                            const ad::Var& edge_logits, const std::vector<int>& edge_labels,
                            const std::vector<double>& link_class_weights = {}) {
  JointLoss out;
  out.entity = ad::cross_entropy_sum(node_logits, node_labels);
  out.link = ad::cross_entropy_sum(edge_logits, edge_labels, link_class_weights);
  out.total = ad::add(out.entity, out.link);
  if (!std::isfinite(out.total->value(0, 0)))
    throw Error("internal", "stage2: non-finite joint loss (entity=" +
                                std::to_string(out.entity->value(0, 0)) + ", link=" +
                                std::to_string(out.link->value(0, 0)) + ")");
  return out;
}

enum class Modality { kCombined, kGeometryOnly, kVisualOnly };

inline std::string modality_name(Modality m) {
  switch (m) {
    case Modality::kCombined: return "combined";
    case Modality::kGeometryOnly: return "geometry-only";
    case Modality::kVisualOnly: return "visual-only";
  }
  return "unknown";
}

inline Modality modality_from_name(const std::string& name) {
  if (name == "combined") return Modality::kCombined;
  if (name == "geometry-only") return Modality::kGeometryOnly;
  if (name == "visual-only") return Modality::kVisualOnly;
  throw ConfigError("stage2: unknown modality '" + name + "'");
}

// One trainable document: pinned graph, frozen Stage-I embeddings, the page
// image for the visual pathway, and integer node/edge labels.
struct StageTwoDoc {
  const DocumentGraph* graph = nullptr;
  ad::Matrix stage1_embedding;  // N x 17, frozen
  const Image* image = nullptr; // may be null when the visual block is zeroed
  std::vector<int> node_labels;
  std::vector<int> edge_labels;
};

// Combined per-node features for one document. The zeroed block keeps its
// width so ablations are shape-preserving.
inline ad::Var assemble_features(const StageTwoDoc& doc, const VisualEncoder* visual,
                                 Modality modality, int visual_dim) {
  const int n = doc.graph->num_nodes();
  if (doc.stage1_embedding.rows() != n)
    throw ConfigError("stage2: stage1 embedding rows must match node count");
  ad::Var geometric = modality == Modality::kVisualOnly
                          ? ad::constant(ad::Matrix::Zero(n, doc.stage1_embedding.cols()))
                          : ad::constant(doc.stage1_embedding);
  ad::Var vis;
  if (modality == Modality::kGeometryOnly) {
    vis = ad::constant(ad::Matrix::Zero(n, visual_dim));
  } else if (!visual) {
    throw ConfigError("stage2: modality '" + modality_name(modality) +
                      "' needs a visual encoder");
  } else {
    if (!doc.image) throw IoError("stage2: document image required for the visual pathway");
    std::vector<BBox> boxes;
    boxes.reserve(doc.graph->nodes.size());
    for (const auto& node : doc.graph->nodes) boxes.push_back(node.box);
    vis = visual->encode_boxes(*doc.image, boxes);
    if (vis->value.cols() != visual_dim)
      throw ConfigError("stage2: visual width " + std::to_string(vis->value.cols()) +
                        " does not match expected " + std::to_string(visual_dim));
  }
  return ad::concat_cols({geometric, vis});
}

struct StageTwoTrainConfig {
  int epochs = 100;
  double learning_rate = 1e-3;
  std::uint64_t seed = 42;
  bool weighted_link_loss = true;
  Modality modality = Modality::kCombined;

  void validate() const {
    if (epochs < 1) throw ConfigError("stage2: epochs must be positive");
    if (learning_rate <= 0.0) throw ConfigError("stage2: learning_rate must be positive");
  }
};

struct StageTwoHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> link_class_weights;
  int best_epoch = -1;  // 0-based epoch restored into the model
};

namespace detail {

inline double stage_two_split_loss(const StageTwoModel& model, const VisualEncoder* visual,
                                   const std::vector<StageTwoDoc>& docs, Modality modality,
                                   int visual_dim, const std::vector<double>& link_weights) {
  double total = 0.0;
  for (const auto& doc : docs) {
    auto x = assemble_features(doc, visual, modality, visual_dim);
    auto out = model.forward(*doc.graph, x, false, nullptr);
    auto loss = joint_loss(out.node_logits, doc.node_labels, out.edge_logits, doc.edge_labels,
                           link_weights);
    total += loss.total->value(0, 0);
  }
  return total;
}

inline std::vector<ad::Matrix> snapshot_params(const nn::ParamStore& store) {
  std::vector<ad::Matrix> values;
  values.reserve(store.size());
  for (const auto& p : store.params()) values.push_back(p->value);
  return values;
}

inline void restore_params(nn::ParamStore& store, const std::vector<ad::Matrix>& values) {
  for (std::size_t i = 0; i < store.size(); ++i) store.params()[i]->value = values[i];
}

}  // namespace detail

// Joint training over Eq-style summed losses. Stage-I embeddings arrive
// frozen inside each StageTwoDoc; the visual encoder fine-tunes alongside the
// GAT when present, trainable, and not ablated away. The model (and visual
// encoder) end up holding the best-validation weights.
// Continuation state for an interrupted run. Best-so-far parameter snapshots
// ride along so the final best-validation restore spans the whole schedule,
// not just the resumed tail.
struct StageTwoResume {
  int start_epoch = 0;
  StageTwoHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<ad::Matrix> best_model;
  std::vector<ad::Matrix> best_visual;
  std::function<void(nn::Adam&, nn::Adam*)> restore_optimizers;
};

// Called after each completed epoch, e.g. to write a resumable checkpoint.
struct StageTwoEpochState {
  int epoch = 0;  // just-completed, 0-based
  const StageTwoHistory* history = nullptr;
  nn::Adam* optimizer = nullptr;
  nn::Adam* visual_optimizer = nullptr;  // null unless the visual path is tuned
  double best_val = 0.0;
  const std::vector<ad::Matrix>* best_model = nullptr;
  const std::vector<ad::Matrix>* best_visual = nullptr;
};
using StageTwoEpochHook = std::function<void(const StageTwoEpochState&)>;

inline StageTwoHistory train_stage2(StageTwoModel& model, VisualEncoder* visual,
                                    const std::vector<StageTwoDoc>& train,
                                    const std::vector<StageTwoDoc>& val,
                                    const StageTwoTrainConfig& cfg,
                                    const StageTwoResume* resume = nullptr,
                                    const StageTwoEpochHook& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw DataError("stage2: training split is empty");
  const int visual_dim = model.config().input_dim - kStage1EmbedDim;
  if (visual_dim < 1) throw ConfigError("stage2: input_dim leaves no room for the visual block");
  for (const auto& doc : train)
    if (!doc.graph) throw Error("internal", "stage2: null graph in training split");

  const bool tune_visual = visual && visual->config().trainable &&
                           cfg.modality != Modality::kGeometryOnly;
  const VisualEncoder* vis_ptr = cfg.modality == Modality::kGeometryOnly ? nullptr : visual;

  StageTwoHistory history;
  if (cfg.weighted_link_loss) {
    std::vector<int> pooled;
    for (const auto& doc : train) pooled.insert(pooled.end(), doc.edge_labels.begin(), doc.edge_labels.end());
    if (pooled.empty()) throw DataError("stage2: no edges in training split");
    history.link_class_weights =
        inverse_frequency_weights(pooled, model.config().num_link_classes);
  }

  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.learning_rate;
  nn::Adam opt(model.params(), adam_cfg);
  std::optional<nn::Adam> vis_opt;
  if (tune_visual) vis_opt.emplace(visual->params(), adam_cfg);

  Rng root(cfg.seed);
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<ad::Matrix> best_model = detail::snapshot_params(model.params());
  std::vector<ad::Matrix> best_visual;
  if (tune_visual) best_visual = detail::snapshot_params(visual->params());

  const int start_epoch = resume ? resume->start_epoch : 0;
  if (resume) {
    if (start_epoch < 0 || start_epoch > cfg.epochs)
      throw CheckpointError("stage2 resume: epoch " + std::to_string(start_epoch) +
                            " outside schedule of " + std::to_string(cfg.epochs));
    history = resume->history;
    best_val = resume->best_val;
    if (!resume->best_model.empty()) best_model = resume->best_model;
    if (tune_visual && !resume->best_visual.empty()) best_visual = resume->best_visual;
    if (resume->restore_optimizers)
      resume->restore_optimizers(opt, vis_opt ? &*vis_opt : nullptr);
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto erng = root.fork(static_cast<std::uint64_t>(epoch) + 1);
    if (epoch < start_epoch) continue;  // fork anyway so the stream stays aligned
    erng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const auto& doc = train[order[step]];
      auto drng = erng.fork(order[step] + 1);
      auto x = assemble_features(doc, vis_ptr, cfg.modality, visual_dim);
      auto out = model.forward(*doc.graph, x, true, &drng);
      auto loss = joint_loss(out.node_logits, doc.node_labels, out.edge_logits, doc.edge_labels,
                             history.link_class_weights);
      const double value = loss.total->value(0, 0);
      if (!std::isfinite(value))
        throw Error("internal", "stage2: non-finite loss at epoch " + std::to_string(epoch) +
                                    " step " + std::to_string(step) +
                                    " (param norm=" + std::to_string(model.params().param_norm()) +
                                    ")");
      model.params().zero_grad();
      if (tune_visual) visual->params().zero_grad();
      ad::backward(loss.total);
      opt.step();
      if (vis_opt) vis_opt->step();
      epoch_loss += value;
    }
    history.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));

    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty()) {
      val_loss = detail::stage_two_split_loss(model, vis_ptr, val, cfg.modality, visual_dim,
                                              history.link_class_weights) /
                 static_cast<double>(val.size());
      if (val_loss < best_val) {
        best_val = val_loss;
        history.best_epoch = epoch;
        best_model = detail::snapshot_params(model.params());
        if (tune_visual) best_visual = detail::snapshot_params(visual->params());
      }
    }
    history.val_loss.push_back(val_loss);
    log::info("stage2 epoch " + std::to_string(epoch) + " train_loss=" +
              std::to_string(history.train_loss.back()) +
              (val.empty() ? "" : " val_loss=" + std::to_string(val_loss)));
    if (on_epoch)
      on_epoch({epoch, &history, &opt, vis_opt ? &*vis_opt : nullptr, best_val, &best_model,
                tune_visual ? &best_visual : nullptr});
  }

  if (!val.empty()) {
    detail::restore_params(model.params(), best_model);
    if (tune_visual) detail::restore_params(visual->params(), best_visual);
  } else {
    history.best_epoch = cfg.epochs - 1;
  }
  return history;
}

struct StageTwoPrediction {
  std::vector<int> node_labels;     // argmax per node
  ad::Matrix node_probs;            // N x num_entity_classes
  std::vector<double> link_scores;  // positive-class probability per edge
  std::vector<int> link_labels;     // 1 iff score strictly exceeds the threshold
};

inline StageTwoPrediction predict(const StageTwoModel& model, const DocumentGraph& g,
                                  const ad::Var& features) {
  auto out = model.forward(g, features, false, nullptr);
  StageTwoPrediction pred;
  pred.node_probs = out.node_probs->value;
  pred.node_labels.resize(static_cast<std::size_t>(g.num_nodes()));
  for (Eigen::Index i = 0; i < pred.node_probs.rows(); ++i) {
    Eigen::Index arg = 0;
    pred.node_probs.row(i).maxCoeff(&arg);
    pred.node_labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  const ad::Matrix link_probs = ad::softmax_rows(out.edge_logits)->value;
  pred.link_scores.resize(static_cast<std::size_t>(link_probs.rows()));
  pred.link_labels.resize(static_cast<std::size_t>(link_probs.rows()));
  for (Eigen::Index i = 0; i < link_probs.rows(); ++i) {
    const double p = link_probs(i, 1);
    pred.link_scores[static_cast<std::size_t>(i)] = p;
    pred.link_labels[static_cast<std::size_t>(i)] =
        p > model.config().link_threshold ? 1 : 0;
  }
  return pred;
}

inline StageTwoPrediction predict(const StageTwoModel& model, const StageTwoDoc& doc,
                                  const VisualEncoder* visual, Modality modality) {
  const int visual_dim = model.config().input_dim - kStage1EmbedDim;
  return predict(model, *doc.graph, assemble_features(doc, visual, modality, visual_dim));
}

}  // namespace layoutgraph
