#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "layoutgraph/autograd.hpp"
#include "layoutgraph/geometry.hpp"
#include "layoutgraph/graph.hpp"
#include "layoutgraph/log.hpp"
#include "layoutgraph/nn.hpp"
#include "layoutgraph/rng.hpp"

// Stage I: the contrastive geometric encoder. Two rounds of edge-feature
// message passing produce a 17-d embedding per node; training pulls
// same-entity-class nodes together with a triplet margin loss.
namespace layoutgraph {

inline constexpr int kStage1NodeDim = kNodeGeomDim;        // 9
inline constexpr int kStage1MsgDim = kEdgeGeomDim;         // 15
inline constexpr int kStage1HiddenDim = 15;
inline constexpr int kStage1EmbedDim = 17;

struct StageOneConfig {
  double dist_threshold = 0.3;  // gate on normalized center distance
  double scale_c = 1.0;         // aggregation constant
  double margin = 1.0;
  double p_norm = 2.0;
  int triplets_per_anchor = 4;
  int epochs = 100;
  double learning_rate = 1e-3;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(dist_threshold > 0.0 && dist_threshold <= 1.0))
      throw ConfigError("stage1: dist_threshold must be in (0, 1]");
    if (!(margin > 0.0)) throw ConfigError("stage1: margin must be positive");
    if (!(p_norm >= 1.0)) throw ConfigError("stage1: p_norm must be >= 1");
    if (triplets_per_anchor < 1) throw ConfigError("stage1: triplets_per_anchor must be >= 1");
    if (epochs < 1) throw ConfigError("stage1: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("stage1: learning_rate must be positive");
  }
};

// Feature-group switches. A disabled group is zeroed in place so every
// downstream shape is unchanged.
struct FeatureMask {
  bool bbox = true;      // node dims 0..3
  bool area = true;      // node dim 4
  bool regional = true;  // node dims 5..8
  bool angle = true;     // edge dim 0
  bool distance = true;  // edge dim 1
  bool polar = true;     // edge dims 2..7
  bool relpos = true;    // edge dims 8..14

  bool all_on() const {
    return bbox && area && regional && angle && distance && polar && relpos;
  }
};

inline ad::Matrix node_features(const DocumentGraph& g, const FeatureMask& mask = {}) {
  ad::Matrix x(g.num_nodes(), kStage1NodeDim);
  for (int i = 0; i < g.num_nodes(); ++i) {
    const auto a = g.nodes[static_cast<std::size_t>(i)].geom.as_array();
    for (int j = 0; j < kStage1NodeDim; ++j) x(i, j) = a[static_cast<std::size_t>(j)];
  }
  if (!mask.bbox) x.middleCols(0, 4).setZero();
  if (!mask.area) x.col(4).setZero();
  if (!mask.regional) x.middleCols(5, 4).setZero();
  return x;
}

inline ad::Matrix edge_features(const DocumentGraph& g, const FeatureMask& mask = {}) {
  ad::Matrix e(g.num_edges(), kStage1MsgDim);
  for (int i = 0; i < g.num_edges(); ++i) {
    const auto a = g.edges[static_cast<std::size_t>(i)].geom.as_array();
    for (int j = 0; j < kStage1MsgDim; ++j) e(i, j) = a[static_cast<std::size_t>(j)];
  }
  if (!mask.angle) e.col(0).setZero();
  if (!mask.distance) e.col(1).setZero();
  if (!mask.polar) e.middleCols(2, kPolarBins).setZero();
  if (!mask.relpos) e.middleCols(2 + kPolarBins, kRelPosTokens).setZero();
  return e;
}

// Message aggregation for one node: h'_v = (c / |Y(i)|) * sum of the edge
// features of out-edges whose normalized center distance is strictly below
// the gate. An empty neighborhood yields the zero vector.
inline Eigen::VectorXd aggregate_messages(const DocumentGraph& g, int node, double dist_threshold,
                                          double c) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(kStage1MsgDim);
  int count = 0;
  for (const auto& e : g.edges) {
    if (e.src != node || !(e.geom.dist < dist_threshold)) continue;
    const auto a = e.geom.as_array();
    for (int j = 0; j < kStage1MsgDim; ++j) acc(j) += a[static_cast<std::size_t>(j)];
    ++count;
  }
  if (count == 0) return acc;
  return acc * (c / static_cast<double>(count));
}

// Batched aggregation over a precomputed (possibly masked) edge-feature
// matrix. The gate always reads the raw geometric distance, masked or not:
// it is structural, not a feature.
inline ad::Matrix aggregate_all(const DocumentGraph& g, const ad::Matrix& edge_feat,
                                double dist_threshold, double c) {
  if (edge_feat.rows() != g.num_edges())
    throw Error("internal", "aggregate_all: edge feature row count mismatch");
  ad::Matrix acc = ad::Matrix::Zero(g.num_nodes(), edge_feat.cols());
  std::vector<int> count(static_cast<std::size_t>(g.num_nodes()), 0);
  for (int i = 0; i < g.num_edges(); ++i) {
    const auto& e = g.edges[static_cast<std::size_t>(i)];
    if (!(e.geom.dist < dist_threshold)) continue;
    acc.row(e.src) += edge_feat.row(i);
    ++count[static_cast<std::size_t>(e.src)];
  }
  for (int v = 0; v < g.num_nodes(); ++v) {
    if (count[static_cast<std::size_t>(v)] > 0)
      acc.row(v) *= c / static_cast<double>(count[static_cast<std::size_t>(v)]);
  }
  return acc;
}

// Two message-passing rounds, each ReLU(LayerNorm(W [state || h'])). Messages
// stay raw edge features in both rounds; only node state evolves.
class StageOneEncoder {
public:
  explicit StageOneEncoder(StageOneConfig config, std::uint64_t init_seed = 0)
      : config_(config) {
    config_.validate();
    Rng rng(init_seed == 0 ? config_.seed : init_seed);
    l1_ = nn::Linear(store_, "stage1.l1", kStage1NodeDim + kStage1MsgDim, kStage1HiddenDim, rng);
    ln1_ = nn::LayerNorm(store_, "stage1.ln1", kStage1HiddenDim);
    l2_ = nn::Linear(store_, "stage1.l2", kStage1HiddenDim + kStage1MsgDim, kStage1EmbedDim, rng);
    ln2_ = nn::LayerNorm(store_, "stage1.ln2", kStage1EmbedDim);
    if (l1_.in_features() != 24 || l1_.out_features() != 15 || l2_.in_features() != 30 ||
        l2_.out_features() != 17)
      throw ConfigError("stage1: layer dimensions must be 24->15 and 30->17");
  }

  // Per-node embeddings as an autograd value (N x 17).
  ad::Var encode(const DocumentGraph& g, const FeatureMask& mask = {}) const {
    const ad::Matrix x = node_features(g, mask);
    const ad::Matrix ef = edge_features(g, mask);
    const ad::Matrix agg = aggregate_all(g, ef, config_.dist_threshold, config_.scale_c);
    auto h_prime = ad::constant(agg);
    auto in1 = ad::concat_cols({ad::constant(x), h_prime});
    auto h1 = ad::relu(ln1_.forward(l1_.forward(in1)));
    auto in2 = ad::concat_cols({h1, h_prime});
    return ad::relu(ln2_.forward(l2_.forward(in2)));
  }

  // Detached embeddings for downstream consumers.
  ad::Matrix embed(const DocumentGraph& g, const FeatureMask& mask = {}) const {
    return encode(g, mask)->value;
  }

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const StageOneConfig& config() const { return config_; }

private:
  StageOneConfig config_;
  nn::ParamStore store_;
  nn::Linear l1_, l2_;
  nn::LayerNorm ln1_, ln2_;
};

// Single-triplet margin loss: max(|a-p|_p - |a-n|_p + margin, 0).
inline double triplet_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& p,
                           const Eigen::VectorXd& n, double margin, double p_norm) {
  if (a.size() != p.size() || a.size() != n.size())
    throw Error("internal", "triplet_loss: dimension mismatch");
  if (!(margin > 0.0)) throw ConfigError("triplet_loss: margin must be positive");
  const double dp = std::pow((a - p).array().abs().pow(p_norm).sum(), 1.0 / p_norm);
  const double dn = std::pow((a - n).array().abs().pow(p_norm).sum(), 1.0 / p_norm);
  return std::max(dp - dn + margin, 0.0);
}

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
};

// Uniform same-class positives and different-class negatives per anchor.
// Anchors without a same-class partner are skipped; a single-class batch
// yields an empty list with a warning. The embedding matrix only anchors the
// node count; sampling is label-driven.
inline std::vector<Triplet> mine_triplets(const ad::Matrix& embeddings,
                                          const std::vector<int>& labels,
                                          int triplets_per_anchor, Rng& rng) {
  if (static_cast<Eigen::Index>(labels.size()) != embeddings.rows())
    throw Error("internal", "mine_triplets: label count must match embeddings");
  const int n = static_cast<int>(labels.size());
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  std::vector<std::vector<int>> members(static_cast<std::size_t>(max_label + 1));
  for (int i = 0; i < n; ++i) members[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
  int distinct = 0;
  for (const auto& m : members)
    if (!m.empty()) ++distinct;
  std::vector<Triplet> out;
  if (distinct < 2) {
    log::warn("mine_triplets: batch has a single class, no triplets emitted");
    return out;
  }
  std::vector<std::vector<int>> others(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    for (int i = 0; i < n; ++i)
      if (labels[static_cast<std::size_t>(i)] != static_cast<int>(c)) others[c].push_back(i);
  }
  for (int a = 0; a < n; ++a) {
    const auto label = static_cast<std::size_t>(labels[static_cast<std::size_t>(a)]);
    const auto& same = members[label];
    const auto& diff = others[label];
    if (same.size() < 2 || diff.empty()) continue;
    // Anchor's position within its class, for skip-over-self sampling.
    std::size_t pos = 0;
    while (same[pos] != a) ++pos;
    for (int t = 0; t < triplets_per_anchor; ++t) {
      auto c = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(same.size()) - 2));
      const int p = same[c < pos ? c : c + 1];
      const int neg = diff[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(diff.size()) - 1))];
      out.push_back({a, p, neg});
    }
  }
  return out;
}

inline std::vector<Triplet> mine_triplets(const ad::Matrix& embeddings,
                                          const std::vector<int>& labels,
                                          int triplets_per_anchor, std::uint64_t seed) {
  Rng rng(seed);
  return mine_triplets(embeddings, labels, triplets_per_anchor, rng);
}

// Mean triplet loss over mined triplets as an autograd value.
inline ad::Var triplet_loss_batch(const ad::Var& embeddings, const std::vector<Triplet>& triplets,
                                  double margin, double p_norm) {
  if (triplets.empty()) throw Error("internal", "triplet_loss_batch: no triplets");
  std::vector<int> ai, pi, ni;
  ai.reserve(triplets.size());
  pi.reserve(triplets.size());
  ni.reserve(triplets.size());
  for (const auto& t : triplets) {
    ai.push_back(t.anchor);
    pi.push_back(t.positive);
    ni.push_back(t.negative);
  }
  auto a = ad::gather_rows(embeddings, ai);
  auto p = ad::gather_rows(embeddings, pi);
  auto n = ad::gather_rows(embeddings, ni);
  auto dp = ad::row_pnorm(ad::sub(a, p), p_norm);
  auto dn = ad::row_pnorm(ad::sub(a, n), p_norm);
  auto hinge = ad::relu(ad::add_scalar(ad::sub(dp, dn), margin));
  return ad::mean(hinge);
}

struct StageOneSample {
  const DocumentGraph* graph = nullptr;
  std::vector<int> labels;
};

struct StageOneHistory {
  std::vector<double> train_loss;  // one entry per epoch
  std::vector<double> val_loss;    // NaN when no val triplets exist
};

// Full contrastive training loop: one document per step, Adam updates, mean
// triplet loss. Mining is reseeded per (epoch, document) so runs are exactly
// reproducible; validation mining is pinned per document so the curve is
// comparable across epochs.
// Continuation state for an interrupted run: epochs already completed, their
// loss history, and a hook that reinstalls the optimizer's saved moments.
struct StageOneResume {
  int start_epoch = 0;
  StageOneHistory history;
  std::function<void(nn::Adam&)> restore_optimizer;
};

// Called after each completed epoch, e.g. to write a resumable checkpoint.
struct StageOneEpochState {
  int epoch = 0;  // just-completed, 0-based
  const StageOneHistory* history = nullptr;
  nn::Adam* optimizer = nullptr;
};
using StageOneEpochHook = std::function<void(const StageOneEpochState&)>;

inline StageOneHistory train_stage1(StageOneEncoder& encoder,
                                    const std::vector<StageOneSample>& train,
                                    const std::vector<StageOneSample>& val,
                                    const FeatureMask& mask = {},
                                    const StageOneResume* resume = nullptr,
                                    const StageOneEpochHook& on_epoch = {}) {
  const auto& cfg = encoder.config();
  cfg.validate();
  if (train.empty()) throw DataError("stage1 training: no documents");
  nn::Adam opt(encoder.params(), {.lr = cfg.learning_rate});
  Rng root(cfg.seed);
  StageOneHistory history;
  const int start_epoch = resume ? resume->start_epoch : 0;
  if (resume) {
    if (start_epoch < 0 || start_epoch > cfg.epochs)
      throw CheckpointError("stage1 resume: epoch " + std::to_string(start_epoch) +
                            " outside schedule of " + std::to_string(cfg.epochs));
    history = resume->history;
    if (resume->restore_optimizer) resume->restore_optimizer(opt);
  }
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = root.fork(static_cast<std::uint64_t>(epoch) + 1);
    if (epoch < start_epoch) continue;  // fork anyway so the stream stays aligned
    // Order is derived from this epoch's stream alone so a resumed run sees
    // the same permutation as an uninterrupted one.
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    epoch_rng.shuffle(order);
    double loss_sum = 0.0;
    int loss_count = 0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const auto& sample = train[order[step]];
      auto emb = encoder.encode(*sample.graph, mask);
      Rng mine_rng = epoch_rng.fork(order[step] + 1);
      const auto triplets =
          mine_triplets(emb->value, sample.labels, cfg.triplets_per_anchor, mine_rng);
      if (triplets.empty()) continue;
      encoder.params().zero_grad();
      auto loss = triplet_loss_batch(emb, triplets, cfg.margin, cfg.p_norm);
      const double lv = loss->value(0, 0);
      if (!std::isfinite(lv)) {
        throw Error("internal",
                    "stage1 training diverged: non-finite loss at epoch " +
                        std::to_string(epoch) + ", step " + std::to_string(step) +
                        ", param norm " + std::to_string(encoder.params().param_norm()));
      }
      ad::backward(loss);
      opt.step();
      loss_sum += lv;
      ++loss_count;
    }
    history.train_loss.push_back(loss_count > 0 ? loss_sum / loss_count
                                                : std::numeric_limits<double>::quiet_NaN());

    double val_sum = 0.0;
    int val_count = 0;
    for (std::size_t d = 0; d < val.size(); ++d) {
      auto emb = encoder.encode(*val[d].graph, mask);
      Rng val_rng = Rng(cfg.seed ^ 0x76616cULL).fork(d + 1);
      const auto triplets =
          mine_triplets(emb->value, val[d].labels, cfg.triplets_per_anchor, val_rng);
      if (triplets.empty()) continue;
      auto loss = triplet_loss_batch(emb, triplets, cfg.margin, cfg.p_norm);
      val_sum += loss->value(0, 0);
      ++val_count;
    }
    const double vl = val_count > 0 ? val_sum / val_count : std::numeric_limits<double>::quiet_NaN();
    history.val_loss.push_back(vl);
    log::info("stage1 epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) +
              " train_loss=" + std::to_string(history.train_loss.back()) +
              (val_count > 0 ? " val_loss=" + std::to_string(vl) : ""));
    if (on_epoch) on_epoch({epoch, &history, &opt});
  }
  return history;
}

}  // namespace layoutgraph
