#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "layoutgraph/checkpoint.hpp"
#include "layoutgraph/config.hpp"
#include "layoutgraph/dataset.hpp"
#include "layoutgraph/graph_io.hpp"
#include "layoutgraph/image.hpp"
#include "layoutgraph/labels.hpp"
#include "layoutgraph/log.hpp"
#include "layoutgraph/metrics.hpp"
#include "layoutgraph/stage1.hpp"
#include "layoutgraph/stage2.hpp"
#include "layoutgraph/visual.hpp"

// Orchestration: dataset -> graphs -> Stage I -> Stage II -> evaluation and
// rendering, with resumable per-epoch checkpoints and the exact config
// persisted beside every output.
namespace layoutgraph {

// ---------------------------------------------------------------------------
// Run directory layout
// ---------------------------------------------------------------------------

struct RunPaths {
  std::filesystem::path root;

  explicit RunPaths(const std::string& output_dir) : root(output_dir) {}

  std::filesystem::path graphs_dir() const { return root / "graphs"; }
  std::filesystem::path graph_split_dir(const std::string& split) const {
    return graphs_dir() / split;
  }
  std::filesystem::path graph_file(const std::string& split, const std::string& doc_id) const {
    return graph_split_dir(split) / (doc_id + ".graph.json");
  }
  std::filesystem::path coverage_file() const { return graphs_dir() / "coverage.json"; }
  std::filesystem::path stage_dir(int stage) const {
    return root / ("stage" + std::to_string(stage));
  }
  std::filesystem::path checkpoint_file(int stage) const {
    return stage_dir(stage) / "checkpoint.bin";
  }
  std::filesystem::path last_checkpoint_file(int stage) const {
    return stage_dir(stage) / "checkpoint_last.bin";
  }
  std::filesystem::path metrics_file(int stage) const {
    return stage_dir(stage) / "metrics.jsonl";
  }
  std::filesystem::path eval_dir(const std::string& split) const { return root / "eval" / split; }
  std::filesystem::path ablate_dir(const std::string& mode) const { return root / "ablate" / mode; }
  std::filesystem::path render_dir() const { return root / "render"; }
};

inline void ensure_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

// Work-stealing loop over [0, n). Results must be written by index; callers
// reduce sequentially afterwards, so worker count never changes the output.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const int threads = std::min<int>(workers, static_cast<int>(n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto drain = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(drain);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Dataset plumbing
// ---------------------------------------------------------------------------

inline LinkTask link_task(const ExperimentConfig& cfg) {
  return cfg.dataset == "rvlcdip" ? LinkTask::kTable : LinkTask::kKeyValue;
}

inline LabelVocab link_vocab_for(const ExperimentConfig& cfg) {
  return link_task(cfg) == LinkTask::kTable ? table_link_vocab() : link_vocab();
}

inline DatasetSplits load_dataset(const ExperimentConfig& cfg) {
  const std::string root = cfg.effective_dataset_root();
  if (root.empty())
    throw ConfigError(std::string("dataset_root is not set; put it in the config or export ") +
                      kDataRootEnv);
  DatasetSplits splits =
      cfg.dataset == "rvlcdip"
          ? load_rvlcdip_invoices(root, cfg.val_fraction, cfg.test_fraction, cfg.seed)
          : load_funsd(root, cfg.val_fraction, cfg.seed);
  if (cfg.limit_docs > 0) {
    const auto limit = static_cast<std::size_t>(cfg.limit_docs);
    for (auto* v : {&splits.train, &splits.val, &splits.test})
      if (v->size() > limit) v->resize(limit);
    log::info("limit_docs=" + std::to_string(cfg.limit_docs) + " applied per split");
  }
  return splits;
}

inline const std::vector<DocumentRecord>& split_records(const DatasetSplits& splits,
                                                        const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "val") return splits.val;
  if (name == "test") return splits.test;
  throw UsageError("unknown split '" + name + "' (expected train, val or test)");
}

// A document ready for training or evaluation: graph, labels, optional page.
struct PreparedDoc {
  DocumentRecord record;
  DocumentGraph graph;
  AttachResult attach;
  std::vector<int> node_labels;
  std::vector<int> edge_labels;
  Image image;  // empty unless the caller asked for pages
};

inline PreparedDoc prepare_doc(const ExperimentConfig& cfg, const DocumentRecord& record,
                               const std::string& split, const RunPaths* graphs_from,
                               bool load_page) {
  PreparedDoc doc;
  doc.record = record;
  if (graphs_from) {
    const auto path = graphs_from->graph_file(split, record.doc_id);
    if (!std::filesystem::exists(path))
      throw IoError("missing prerequisite: graph file " + path.string() +
                    " (run build-graphs first)");
    doc.graph = load_graph(path);
    if (doc.graph.k != cfg.k)
      throw ConfigError("graph file " + path.string() + " was built with k=" +
                        std::to_string(doc.graph.k) + " but the config wants k=" +
                        std::to_string(cfg.k));
  } else {
    doc.graph = build_document_graph(record, cfg.k);
  }
  doc.attach = attach_labels(doc.record, doc.graph, link_task(cfg));
  doc.node_labels = node_label_ids(doc.graph, cfg.entity_vocab());
  doc.edge_labels = edge_label_ids(doc.graph, link_vocab_for(cfg));
  if (load_page) doc.image = read_image(record.image_path);
  return doc;
}

inline std::vector<PreparedDoc> prepare_split(const ExperimentConfig& cfg,
                                              const std::vector<DocumentRecord>& records,
                                              const std::string& split,
                                              const RunPaths* graphs_from, bool load_pages) {
  std::vector<PreparedDoc> docs(records.size());
  parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
    docs[i] = prepare_doc(cfg, records[i], split, graphs_from, load_pages);
  });
  return docs;
}

// ---------------------------------------------------------------------------
// Stage-level checkpoint assembly
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json loss_json(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double d : v) {
    if (std::isfinite(d))
      a.push_back(d);
    else
      a.push_back(nullptr);
  }
  return a;
}

inline std::vector<double> loss_from_json(const nlohmann::json& a) {
  std::vector<double> v;
  v.reserve(a.size());
  for (const auto& x : a)
    v.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
  return v;
}

// Fields allowed to differ between the run that wrote a checkpoint and the
// run resuming or consuming it: machine-local paths and parallelism.
inline nlohmann::json training_fingerprint(const ExperimentConfig& cfg) {
  nlohmann::json j = config_to_json(cfg);
  j.erase("dataset_root");
  j.erase("output_dir");
  j.erase("workers");
  return j;
}

inline void check_fingerprint(const ExperimentConfig& current, const nlohmann::json& metadata,
                              const std::string& what) {
  const ExperimentConfig saved = config_from_json(metadata.at("config"));
  if (training_fingerprint(saved) != training_fingerprint(current))
    throw CheckpointError(what + " was produced by a different configuration; "
                          "point output_dir at a fresh directory or restore the config");
}

inline std::string format_of(const ckpt::Checkpoint& c) {
  if (!c.metadata.contains("format") || !c.metadata["format"].is_string()) return "";
  return c.metadata["format"].get<std::string>();
}

inline void pack_snapshot(const std::vector<ad::Matrix>& values, const nn::ParamStore& store,
                          ckpt::Checkpoint* c, const std::string& prefix) {
  for (std::size_t i = 0; i < store.size(); ++i) c->add(prefix + store.names()[i], values[i]);
}

inline std::vector<ad::Matrix> unpack_snapshot(const ckpt::Checkpoint& c,
                                               const nn::ParamStore& store,
                                               const std::string& prefix) {
  std::vector<ad::Matrix> values;
  values.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) values.push_back(c.at(prefix + store.names()[i]));
  return values;
}

}  // namespace detail

inline constexpr const char* kVisualParamPrefix = "visual_param.";
inline constexpr const char* kVisualAdamPrefix = "visual_adam.";
inline constexpr const char* kStage1ParamPrefix = "stage1_param.";
inline constexpr const char* kBestParamPrefix = "best.";
inline constexpr const char* kBestVisualPrefix = "best_visual.";

inline ckpt::Checkpoint make_stage1_checkpoint(const ExperimentConfig& cfg,
                                               const StageOneEncoder& encoder,
                                               const StageOneHistory& history, int epoch,
                                               const nn::Adam* optimizer) {
  ckpt::Checkpoint c;
  c.metadata["format"] = "stage1";
  c.metadata["config"] = config_to_json(cfg);
  c.metadata["seed"] = cfg.stage1.seed;
  c.metadata["epoch"] = epoch;  // completed epochs
  c.metadata["train_loss"] = detail::loss_json(history.train_loss);
  c.metadata["val_loss"] = detail::loss_json(history.val_loss);
  ckpt::pack_params(encoder.params(), &c);
  if (optimizer) ckpt::pack_adam(*optimizer, encoder.params(), &c);
  return c;
}

struct Stage1Bundle {
  ExperimentConfig config;
  StageOneEncoder encoder;
  StageOneHistory history;
  int epoch = 0;
  nlohmann::json metadata;
};

inline Stage1Bundle load_stage1_bundle(const std::string& path) {
  const auto c = ckpt::load_checkpoint(path);
  if (detail::format_of(c) != "stage1")
    throw CheckpointError(path + " is not a stage-1 checkpoint (format '" +
                          detail::format_of(c) + "')");
  ExperimentConfig cfg = config_from_json(c.metadata.at("config"));
  Stage1Bundle bundle{cfg, StageOneEncoder(cfg.stage1), {}, 0, c.metadata};
  ckpt::unpack_params(c, &bundle.encoder.params());
  bundle.history.train_loss = detail::loss_from_json(c.metadata.at("train_loss"));
  bundle.history.val_loss = detail::loss_from_json(c.metadata.at("val_loss"));
  bundle.epoch = c.metadata.at("epoch").get<int>();
  return bundle;
}

inline ckpt::Checkpoint make_stage2_checkpoint(
    const ExperimentConfig& cfg, const StageTwoModel& model, const VisualEncoder* visual,
    const StageOneEncoder& stage1, std::uint64_t stage1_hash, const StageTwoHistory& history,
    int epoch, const nn::Adam* optimizer, const nn::Adam* visual_optimizer,
    double best_val = std::numeric_limits<double>::infinity(),
    const std::vector<ad::Matrix>* best_model = nullptr,
    const std::vector<ad::Matrix>* best_visual = nullptr) {
  ckpt::Checkpoint c;
  c.metadata["format"] = "stage2";
  c.metadata["config"] = config_to_json(cfg);
  c.metadata["seed"] = cfg.seed;
  c.metadata["epoch"] = epoch;
  c.metadata["best_epoch"] = history.best_epoch;
  c.metadata["best_val"] =
      std::isfinite(best_val) ? nlohmann::json(best_val) : nlohmann::json(nullptr);
  c.metadata["train_loss"] = detail::loss_json(history.train_loss);
  c.metadata["val_loss"] = detail::loss_json(history.val_loss);
  c.metadata["link_class_weights"] = history.link_class_weights;
  c.metadata["stage1_checkpoint_hash"] = ckpt::hash_hex(stage1_hash);
  c.metadata["visual_pretrained_weights"] = cfg.visual.pretrained_weights;
  ckpt::pack_params(model.params(), &c);
  ckpt::pack_params(stage1.params(), &c, kStage1ParamPrefix);
  if (visual) ckpt::pack_params(visual->params(), &c, kVisualParamPrefix);
  if (optimizer) ckpt::pack_adam(*optimizer, model.params(), &c);
  if (visual && visual_optimizer)
    ckpt::pack_adam(*visual_optimizer, visual->params(), &c, kVisualAdamPrefix);
  if (best_model) detail::pack_snapshot(*best_model, model.params(), &c, kBestParamPrefix);
  if (visual && best_visual)
    detail::pack_snapshot(*best_visual, visual->params(), &c, kBestVisualPrefix);
  return c;
}

struct Stage2Bundle {
  ExperimentConfig config;
  StageTwoModel model;
  StageOneEncoder stage1;
  std::optional<VisualEncoder> visual;
  nlohmann::json metadata;

  Modality modality() const { return modality_from_name(config.modality); }
};

inline Stage2Bundle load_stage2_bundle(const std::string& path) {
  const auto c = ckpt::load_checkpoint(path);
  if (detail::format_of(c) != "stage2")
    throw CheckpointError(path + " is not a stage-2 checkpoint (format '" +
                          detail::format_of(c) + "')");
  ExperimentConfig cfg = config_from_json(c.metadata.at("config"));
  Stage2Bundle bundle{cfg, StageTwoModel(cfg.stage2_config()), StageOneEncoder(cfg.stage1),
                      std::nullopt, c.metadata};
  ckpt::unpack_params(c, &bundle.model.params());
  ckpt::unpack_params(c, &bundle.stage1.params(), kStage1ParamPrefix);
  const bool has_visual = std::any_of(c.arrays.begin(), c.arrays.end(), [](const auto& a) {
    return a.first.rfind(kVisualParamPrefix, 0) == 0;
  });
  if (has_visual) {
    bundle.visual.emplace(cfg.visual);
    ckpt::unpack_params(c, &bundle.visual->params(), kVisualParamPrefix);
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EdgeDumpRow {
  std::string doc_id;
  int src = 0;
  int dst = 0;
  double score = 0.0;  // positive-class probability
  int predicted = 0;
  int gold = 0;
};

struct EvalResult {
  EvalReport aggregate;
  std::vector<std::pair<std::string, EvalReport>> per_document;
  std::vector<EdgeDumpRow> edges;
};

inline StageTwoDoc make_stage2_doc(const PreparedDoc& p, const StageOneEncoder& stage1,
                                   const FeatureMask& mask) {
  StageTwoDoc d;
  d.graph = &p.graph;
  d.stage1_embedding = stage1.embed(p.graph, mask);
  d.image = p.image.empty() ? nullptr : &p.image;
  d.node_labels = p.node_labels;
  d.edge_labels = p.edge_labels;
  return d;
}

namespace detail {

// Two-class report with zero totals, for documents whose graph has no edges.
inline F1Report empty_link_report() {
  F1Report r;
  for (int cls = 0; cls < 2; ++cls) {
    ClassScore s;
    s.class_id = cls;
    s.zero_support = true;
    r.per_class.push_back(s);
  }
  return r;
}

}  // namespace detail

inline EvalResult evaluate_model(const StageTwoModel& model, const VisualEncoder* visual,
                                 Modality modality, const std::vector<PreparedDoc>& docs,
                                 const StageOneEncoder& stage1, const FeatureMask& mask,
                                 bool with_tables, int workers) {
  if (docs.empty()) throw DataError("evaluate: no documents in the split");
  const int num_classes = model.config().num_entity_classes;

  std::vector<StageTwoPrediction> preds(docs.size());
  parallel_for(docs.size(), workers, [&](std::size_t i) {
    const auto doc = make_stage2_doc(docs[i], stage1, mask);
    preds[i] = predict(model, doc, visual, modality);
  });

  EvalResult result;
  std::vector<int> all_node_pred, all_node_gold, all_link_pred, all_link_gold;
  std::vector<double> all_scores;
  TableDetectionCounts table_counts;
  long gt_pairs = 0, covered_pairs = 0;

  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& doc = docs[i];
    const auto& pred = preds[i];
    EvalReport report;
    report.node = classification_f1(pred.node_labels, doc.node_labels, num_classes);
    report.link = doc.edge_labels.empty()
                      ? detail::empty_link_report()
                      : classification_f1(pred.link_labels, doc.edge_labels, 2);
    report.auc_pr = doc.edge_labels.empty()
                        ? std::nullopt
                        : auc_pr(pred.link_scores, doc.edge_labels);
    if (with_tables)
      report.tables = table_detection(doc.graph, pred.link_labels, doc.record.gt_tables);
    report.link_coverage = doc.attach.coverage;
    result.per_document.emplace_back(doc.record.doc_id, report);

    all_node_pred.insert(all_node_pred.end(), pred.node_labels.begin(), pred.node_labels.end());
    all_node_gold.insert(all_node_gold.end(), doc.node_labels.begin(), doc.node_labels.end());
    all_link_pred.insert(all_link_pred.end(), pred.link_labels.begin(), pred.link_labels.end());
    all_link_gold.insert(all_link_gold.end(), doc.edge_labels.begin(), doc.edge_labels.end());
    all_scores.insert(all_scores.end(), pred.link_scores.begin(), pred.link_scores.end());
    if (report.tables) table_counts.add(*report.tables);
    gt_pairs += doc.attach.gt_pairs;
    covered_pairs += doc.attach.covered_pairs;

    for (std::size_t e = 0; e < doc.graph.edges.size(); ++e) {
      result.edges.push_back({doc.record.doc_id, doc.graph.edges[e].src,
                              doc.graph.edges[e].dst, pred.link_scores[e], pred.link_labels[e],
                              doc.edge_labels[e]});
    }
  }

  result.aggregate.node = classification_f1(all_node_pred, all_node_gold, num_classes);
  result.aggregate.link = all_link_gold.empty() ? detail::empty_link_report()
                                                : classification_f1(all_link_pred, all_link_gold, 2);
  result.aggregate.auc_pr = all_link_gold.empty() ? std::nullopt : auc_pr(all_scores, all_link_gold);
  if (with_tables) result.aggregate.tables = table_counts;
  result.aggregate.link_coverage =
      gt_pairs > 0 ? static_cast<double>(covered_pairs) / static_cast<double>(gt_pairs) : -1.0;
  return result;
}

inline nlohmann::json f1_report_json(const F1Report& r, const LabelVocab& vocab) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& cs : r.per_class) {
    classes.push_back({{"label", vocab.name(cs.class_id)},
                       {"precision", cs.precision},
                       {"recall", cs.recall},
                       {"f1", cs.f1},
                       {"support", cs.support},
                       {"zero_support", cs.zero_support}});
  }
  return {{"micro_f1", r.micro_f1}, {"total", r.total}, {"per_class", classes}};
}

inline nlohmann::json eval_report_json(const EvalReport& r, const LabelVocab& entities,
                                       const LabelVocab& links) {
  nlohmann::json j;
  j["entities"] = f1_report_json(r.node, entities);
  j["links"] = f1_report_json(r.link, links);
  j["auc_pr"] = r.auc_pr ? nlohmann::json(*r.auc_pr) : nlohmann::json(nullptr);
  if (r.tables) {
    const auto& t = *r.tables;
    j["tables"] = {{"true_positives", t.true_positives},
                   {"predicted", t.predicted},
                   {"ground_truth", t.ground_truth},
                   // No predictions makes precision undefined, not zero.
                   {"precision", t.predicted > 0 ? nlohmann::json(t.precision())
                                                 : nlohmann::json(nullptr)},
                   {"recall", t.recall()},
                   {"f1", t.f1()}};
  }
  j["link_coverage"] =
      r.link_coverage >= 0.0 ? nlohmann::json(r.link_coverage) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct BuildGraphsResult {
  std::filesystem::path graphs_dir;
  int documents = 0;
  int skipped = 0;
  long gt_pairs = 0;
  long covered_pairs = 0;

  double coverage() const {
    return gt_pairs > 0 ? static_cast<double>(covered_pairs) / static_cast<double>(gt_pairs)
                        : -1.0;
  }
};

inline BuildGraphsResult cmd_build_graphs(const ExperimentConfig& cfg) {
  cfg.validate();
  const RunPaths paths(cfg.output_dir);
  const auto splits = load_dataset(cfg);

  BuildGraphsResult result;
  result.graphs_dir = paths.graphs_dir();
  nlohmann::json doc_rows = nlohmann::json::array();

  for (const auto& [split, records] :
       {std::pair<std::string, const std::vector<DocumentRecord>*>{"train", &splits.train},
        {"val", &splits.val},
        {"test", &splits.test}}) {
    if (records->empty()) continue;
    ensure_dir(paths.graph_split_dir(split));
    const auto docs = prepare_split(cfg, *records, split, nullptr, false);
    for (const auto& doc : docs) {
      save_graph(doc.graph, paths.graph_file(split, doc.record.doc_id));
      doc_rows.push_back({{"doc_id", doc.record.doc_id},
                          {"split", split},
                          {"nodes", doc.graph.num_nodes()},
                          {"edges", doc.graph.num_edges()},
                          {"gt_pairs", doc.attach.gt_pairs},
                          {"covered_pairs", doc.attach.covered_pairs},
                          {"coverage", doc.attach.coverage >= 0.0
                                           ? nlohmann::json(doc.attach.coverage)
                                           : nlohmann::json(nullptr)}});
      result.gt_pairs += doc.attach.gt_pairs;
      result.covered_pairs += doc.attach.covered_pairs;
      ++result.documents;
    }
  }
  result.skipped = static_cast<int>(splits.skipped.size());

  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& s : splits.skipped)
    skipped.push_back({{"doc_id", s.doc_id}, {"reason", s.reason}});
  nlohmann::json coverage = {
      {"documents", doc_rows},
      {"skipped", skipped},
      {"aggregate",
       {{"documents", result.documents},
        {"gt_pairs", result.gt_pairs},
        {"covered_pairs", result.covered_pairs},
        {"coverage",
         result.coverage() >= 0.0 ? nlohmann::json(result.coverage()) : nlohmann::json(nullptr)}}}};
  {
    std::ofstream out(paths.coverage_file());
    if (!out) throw IoError("cannot write coverage report: " + paths.coverage_file().string());
    out << coverage.dump(2) << "\n";
  }
  save_config((paths.graphs_dir() / "config.json").string(), cfg);
  log::info("built " + std::to_string(result.documents) + " graphs (skipped " +
            std::to_string(result.skipped) + "), link coverage " +
            std::to_string(result.coverage()));
  return result;
}

namespace detail {

inline void require_graphs(const RunPaths& paths) {
  if (!std::filesystem::is_directory(paths.graphs_dir()))
    throw IoError("missing prerequisite: graph directory " + paths.graphs_dir().string() +
                  " (run build-graphs first)");
}

inline std::string metrics_line(int stage, int epoch, double train_loss, double val_loss) {
  nlohmann::json j;
  j["stage"] = stage;
  j["epoch"] = epoch;
  j["train_loss"] = std::isfinite(train_loss) ? nlohmann::json(train_loss) : nlohmann::json(nullptr);
  j["val_loss"] = std::isfinite(val_loss) ? nlohmann::json(val_loss) : nlohmann::json(nullptr);
  return j.dump();
}

// Rewrite the metric log from restored history, then stream new epochs; the
// final file is identical whether or not the run was ever interrupted.
class MetricsLog {
 public:
  MetricsLog(const std::filesystem::path& path, int stage, const std::vector<double>& train,
             const std::vector<double>& val)
      : out_(path, std::ios::trunc), stage_(stage) {
    if (!out_) throw IoError("cannot write metric log: " + path.string());
    for (std::size_t e = 0; e < train.size(); ++e)
      append(static_cast<int>(e), train[e], e < val.size() ? val[e] : std::numeric_limits<double>::quiet_NaN());
  }

  void append(int epoch, double train_loss, double val_loss) {
    out_ << metrics_line(stage_, epoch, train_loss, val_loss) << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
  int stage_;
};

}  // namespace detail

inline std::string cmd_train_stage1(const ExperimentConfig& cfg) {
  const RunPaths paths(cfg.output_dir);
  detail::require_graphs(paths);
  const auto splits = load_dataset(cfg);
  if (splits.train.empty()) throw DataError("train split is empty");
  const auto train_docs = prepare_split(cfg, splits.train, "train", &paths, false);
  const auto val_docs = prepare_split(cfg, splits.val, "val", &paths, false);

  auto samples = [](const std::vector<PreparedDoc>& docs) {
    std::vector<StageOneSample> s;
    s.reserve(docs.size());
    for (const auto& d : docs) s.push_back({&d.graph, d.node_labels});
    return s;
  };

  ensure_dir(paths.stage_dir(1));
  save_config((paths.stage_dir(1) / "config.json").string(), cfg);

  StageOneEncoder encoder(cfg.stage1);
  StageOneResume resume;
  bool resuming = false;
  const auto last_path = paths.last_checkpoint_file(1);
  if (std::filesystem::exists(last_path)) {
    auto last = std::make_shared<ckpt::Checkpoint>(ckpt::load_checkpoint(last_path.string()));
    if (detail::format_of(*last) != "stage1")
      throw CheckpointError(last_path.string() + " is not a stage-1 checkpoint");
    detail::check_fingerprint(cfg, last->metadata, last_path.string());
    resume.start_epoch = last->metadata.at("epoch").get<int>();
    resume.history.train_loss = detail::loss_from_json(last->metadata.at("train_loss"));
    resume.history.val_loss = detail::loss_from_json(last->metadata.at("val_loss"));
    ckpt::unpack_params(*last, &encoder.params());
    resume.restore_optimizer = [last, &encoder](nn::Adam& opt) {
      ckpt::unpack_adam(*last, &opt, encoder.params());
    };
    resuming = true;
    log::info("resuming stage 1 from epoch " + std::to_string(resume.start_epoch));
  }

  detail::MetricsLog metrics(paths.metrics_file(1), 1, resume.history.train_loss,
                             resume.history.val_loss);
  const auto on_epoch = [&](const StageOneEpochState& st) {
    ckpt::save_checkpoint(last_path.string(),
                          make_stage1_checkpoint(cfg, encoder, *st.history, st.epoch + 1,
                                                 st.optimizer));
    metrics.append(st.epoch, st.history->train_loss.back(), st.history->val_loss.back());
  };

  const auto history = train_stage1(encoder, samples(train_docs), samples(val_docs),
                                    cfg.features, resuming ? &resume : nullptr, on_epoch);

  const auto final_path = paths.checkpoint_file(1);
  ckpt::save_checkpoint(final_path.string(),
                        make_stage1_checkpoint(cfg, encoder, history, cfg.stage1.epochs, nullptr));
  return final_path.string();
}

inline std::string cmd_train_stage2(const ExperimentConfig& cfg,
                                    const std::string& stage1_override = "") {
  const RunPaths paths(cfg.output_dir);
  detail::require_graphs(paths);
  const std::string stage1_path =
      stage1_override.empty() ? paths.checkpoint_file(1).string() : stage1_override;
  if (!std::filesystem::exists(stage1_path))
    throw IoError("missing prerequisite: stage-1 checkpoint " + stage1_path +
                  " (run train --stage 1 first)");
  auto stage1 = load_stage1_bundle(stage1_path);
  detail::check_fingerprint(cfg, stage1.metadata, stage1_path);
  const std::uint64_t stage1_hash = ckpt::file_hash(stage1_path);

  const Modality modality = cfg.stage2_train_config().modality;
  const bool needs_pages = modality != Modality::kGeometryOnly;
  const auto splits = load_dataset(cfg);
  if (splits.train.empty()) throw DataError("train split is empty");
  const auto train_docs = prepare_split(cfg, splits.train, "train", &paths, needs_pages);
  const auto val_docs = prepare_split(cfg, splits.val, "val", &paths, needs_pages);

  auto to_stage2 = [&](const std::vector<PreparedDoc>& docs) {
    std::vector<StageTwoDoc> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(make_stage2_doc(d, stage1.encoder, cfg.features));
    return out;
  };
  const auto train2 = to_stage2(train_docs);
  const auto val2 = to_stage2(val_docs);

  ensure_dir(paths.stage_dir(2));
  save_config((paths.stage_dir(2) / "config.json").string(), cfg);

  StageTwoModel model(cfg.stage2_config(), cfg.seed);
  std::optional<VisualEncoder> visual;
  if (needs_pages) visual.emplace(cfg.visual, cfg.seed ^ 0x766973ULL);
  VisualEncoder* vis = visual ? &*visual : nullptr;

  StageTwoResume resume;
  bool resuming = false;
  const auto last_path = paths.last_checkpoint_file(2);
  if (std::filesystem::exists(last_path)) {
    auto last = std::make_shared<ckpt::Checkpoint>(ckpt::load_checkpoint(last_path.string()));
    if (detail::format_of(*last) != "stage2")
      throw CheckpointError(last_path.string() + " is not a stage-2 checkpoint");
    detail::check_fingerprint(cfg, last->metadata, last_path.string());
    if (last->metadata.at("stage1_checkpoint_hash").get<std::string>() !=
        ckpt::hash_hex(stage1_hash))
      throw CheckpointError("stage-1 checkpoint changed since " + last_path.string() +
                            " was written; retrain from scratch");
    resume.start_epoch = last->metadata.at("epoch").get<int>();
    resume.history.train_loss = detail::loss_from_json(last->metadata.at("train_loss"));
    resume.history.val_loss = detail::loss_from_json(last->metadata.at("val_loss"));
    resume.history.best_epoch = last->metadata.at("best_epoch").get<int>();
    resume.history.link_class_weights =
        last->metadata.at("link_class_weights").get<std::vector<double>>();
    resume.best_val = last->metadata.at("best_val").is_null()
                          ? std::numeric_limits<double>::infinity()
                          : last->metadata.at("best_val").get<double>();
    const auto has_prefix = [&last](const char* prefix) {
      return std::any_of(last->arrays.begin(), last->arrays.end(), [&](const auto& a) {
        return a.first.rfind(prefix, 0) == 0;
      });
    };
    ckpt::unpack_params(*last, &model.params());
    resume.best_model = detail::unpack_snapshot(*last, model.params(), kBestParamPrefix);
    if (vis) {
      ckpt::unpack_params(*last, &vis->params(), kVisualParamPrefix);
      if (has_prefix(kBestVisualPrefix))
        resume.best_visual = detail::unpack_snapshot(*last, vis->params(), kBestVisualPrefix);
    }
    resume.restore_optimizers = [last, &model, vis](nn::Adam& opt, nn::Adam* vis_opt) {
      ckpt::unpack_adam(*last, &opt, model.params());
      if (vis_opt && vis) ckpt::unpack_adam(*last, vis_opt, vis->params(), kVisualAdamPrefix);
    };
    resuming = true;
    log::info("resuming stage 2 from epoch " + std::to_string(resume.start_epoch));
  }

  detail::MetricsLog metrics(paths.metrics_file(2), 2, resume.history.train_loss,
                             resume.history.val_loss);
  const auto on_epoch = [&](const StageTwoEpochState& st) {
    ckpt::save_checkpoint(
        last_path.string(),
        make_stage2_checkpoint(cfg, model, vis, stage1.encoder, stage1_hash, *st.history,
                               st.epoch + 1, st.optimizer, st.visual_optimizer, st.best_val,
                               st.best_model, st.best_visual));
    metrics.append(st.epoch, st.history->train_loss.back(), st.history->val_loss.back());
  };

  const auto history = train_stage2(model, vis, train2, val2, cfg.stage2_train_config(),
                                    resuming ? &resume : nullptr, on_epoch);

  const auto final_path = paths.checkpoint_file(2);
  double final_best = std::numeric_limits<double>::infinity();
  if (history.best_epoch >= 0 &&
      history.best_epoch < static_cast<int>(history.val_loss.size())) {
    const double v = history.val_loss[static_cast<std::size_t>(history.best_epoch)];
    if (std::isfinite(v)) final_best = v;
  }
  ckpt::save_checkpoint(final_path.string(),
                        make_stage2_checkpoint(cfg, model, vis, stage1.encoder, stage1_hash,
                                               history, cfg.stage2_epochs, nullptr, nullptr,
                                               final_best));
  return final_path.string();
}

inline std::string cmd_train(int stage, const ExperimentConfig& cfg,
                             const std::string& stage1_override = "") {
  cfg.validate();
  if (stage == 1) return cmd_train_stage1(cfg);
  if (stage == 2) return cmd_train_stage2(cfg, stage1_override);
  throw UsageError("--stage must be 1 or 2");
}

// Model-defining settings come from the checkpoint; machine-local settings
// (paths, parallelism, document cap) from the invoking config.
inline ExperimentConfig eval_config(const Stage2Bundle& bundle, const ExperimentConfig& runtime) {
  ExperimentConfig cfg = bundle.config;
  cfg.dataset_root = runtime.dataset_root;
  cfg.output_dir = runtime.output_dir;
  cfg.workers = runtime.workers;
  cfg.limit_docs = runtime.limit_docs;
  return cfg;
}

struct EvaluateOutput {
  EvalResult result;
  std::filesystem::path report_file;
  std::filesystem::path edges_file;
};

inline EvaluateOutput cmd_evaluate(const ExperimentConfig& runtime_cfg,
                                   const std::string& checkpoint_path, const std::string& split) {
  runtime_cfg.validate();
  auto bundle = load_stage2_bundle(checkpoint_path);
  const ExperimentConfig cfg = eval_config(bundle, runtime_cfg);
  const RunPaths paths(cfg.output_dir);

  const auto splits = load_dataset(cfg);
  const auto& records = split_records(splits, split);
  if (records.empty()) throw DataError("split '" + split + "' has no documents");

  const Modality modality = bundle.modality();
  const bool needs_pages = modality != Modality::kGeometryOnly;
  const bool graphs_available = std::filesystem::is_directory(paths.graphs_dir());
  const auto docs = prepare_split(cfg, records, split,
                                  graphs_available ? &paths : nullptr, needs_pages);

  EvaluateOutput out;
  out.result = evaluate_model(bundle.model, bundle.visual ? &*bundle.visual : nullptr, modality,
                              docs, bundle.stage1, cfg.features, cfg.dataset == "rvlcdip",
                              cfg.workers);

  const auto dir = paths.eval_dir(split);
  ensure_dir(dir);
  save_config((dir / "config.json").string(), cfg);

  const auto entities = cfg.entity_vocab();
  const auto links = link_vocab_for(cfg);
  nlohmann::json report;
  report["split"] = split;
  report["checkpoint"] = checkpoint_path;
  report["aggregate"] = eval_report_json(out.result.aggregate, entities, links);
  nlohmann::json per_doc = nlohmann::json::array();
  for (const auto& [doc_id, doc_report] : out.result.per_document) {
    nlohmann::json row = eval_report_json(doc_report, entities, links);
    row["doc_id"] = doc_id;
    per_doc.push_back(row);
  }
  report["documents"] = per_doc;

  out.report_file = dir / "report.json";
  {
    std::ofstream f(out.report_file);
    if (!f) throw IoError("cannot write report: " + out.report_file.string());
    f << report.dump(2) << "\n";
  }
  out.edges_file = dir / "edges.jsonl";
  {
    std::ofstream f(out.edges_file);
    if (!f) throw IoError("cannot write edge dump: " + out.edges_file.string());
    for (const auto& e : out.result.edges) {
      nlohmann::json row;
      row["doc_id"] = e.doc_id;
      row["src"] = e.src;
      row["dst"] = e.dst;
      row["score"] = e.score;
      row["predicted"] = e.predicted;
      row["gold"] = e.gold;
      f << row.dump() << "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline Color entity_color(int class_id) {
  static const std::vector<Color> palette = {
      Color{66, 133, 244},  // blue
      Color{52, 168, 83},   // green
      Color{234, 67, 53},   // red
      Color{120, 124, 129}, // gray
      Color{255, 152, 0},   // orange
      Color{156, 39, 176},  // purple
  };
  return palette[static_cast<std::size_t>(class_id) % palette.size()];
}

inline constexpr Color kPredictedLinkColor{233, 30, 99};
inline constexpr Color kGoldLinkColor{0, 150, 136};

struct RenderResult {
  std::filesystem::path image_file;
  int predicted_links = 0;  // directed positive edges drawn
  int gold_links = 0;       // unordered annotated pairs present in the graph
  bool gold_panel = false;
};

namespace detail {

inline std::pair<double, double> box_center(const BBox& b) {
  return {(b.xmin + b.xmax) / 2.0, (b.ymin + b.ymax) / 2.0};
}

inline void draw_links(Image& im, const DocumentGraph& g,
                       const std::vector<std::pair<int, int>>& pairs, const Color& color) {
  for (const auto& [a, b] : pairs) {
    const auto ca = box_center(g.nodes[static_cast<std::size_t>(a)].box);
    const auto cb = box_center(g.nodes[static_cast<std::size_t>(b)].box);
    draw_line(im, ca.first, ca.second, cb.first, cb.second, color);
  }
}

}  // namespace detail

inline RenderResult cmd_render(const ExperimentConfig& runtime_cfg,
                               const std::string& checkpoint_path, const std::string& doc_id,
                               const std::string& out_path = "") {
  runtime_cfg.validate();
  auto bundle = load_stage2_bundle(checkpoint_path);
  const ExperimentConfig cfg = eval_config(bundle, runtime_cfg);
  const RunPaths paths(cfg.output_dir);

  const auto splits = load_dataset(cfg);
  const DocumentRecord* record = nullptr;
  std::string split;
  std::vector<std::string> valid_ids;
  for (const auto& [name, records] :
       {std::pair<std::string, const std::vector<DocumentRecord>*>{"train", &splits.train},
        {"val", &splits.val},
        {"test", &splits.test}}) {
    for (const auto& r : *records) {
      valid_ids.push_back(r.doc_id);
      if (r.doc_id == doc_id) {
        record = &r;
        split = name;
      }
    }
  }
  if (!record) {
    std::sort(valid_ids.begin(), valid_ids.end());
    std::string listing;
    for (const auto& id : valid_ids) listing += (listing.empty() ? "" : ", ") + id;
    throw UsageError("unknown document id '" + doc_id + "'; valid ids: " + listing);
  }

  const bool graphs_available = std::filesystem::is_directory(paths.graphs_dir());
  const auto doc = prepare_doc(cfg, *record, split, graphs_available ? &paths : nullptr, true);
  const auto pred =
      predict(bundle.model, make_stage2_doc(doc, bundle.stage1, cfg.features),
              bundle.visual ? &*bundle.visual : nullptr, bundle.modality());

  Image predicted_panel = to_rgb(doc.image);
  for (int i = 0; i < doc.graph.num_nodes(); ++i)
    draw_rect(predicted_panel, doc.graph.nodes[static_cast<std::size_t>(i)].box,
              entity_color(pred.node_labels[static_cast<std::size_t>(i)]));
  std::vector<std::pair<int, int>> predicted_pairs;
  for (std::size_t e = 0; e < doc.graph.edges.size(); ++e)
    if (pred.link_labels[e] == 1)
      predicted_pairs.emplace_back(doc.graph.edges[e].src, doc.graph.edges[e].dst);
  detail::draw_links(predicted_panel, doc.graph, predicted_pairs, kPredictedLinkColor);

  RenderResult result;
  result.predicted_links = static_cast<int>(predicted_pairs.size());

  Image panel = predicted_panel;
  if (!doc.node_labels.empty()) {
    Image gold_panel = to_rgb(doc.image);
    for (int i = 0; i < doc.graph.num_nodes(); ++i)
      draw_rect(gold_panel, doc.graph.nodes[static_cast<std::size_t>(i)].box,
                entity_color(doc.node_labels[static_cast<std::size_t>(i)]));
    std::set<std::pair<int, int>> gold_pairs;
    for (std::size_t e = 0; e < doc.graph.edges.size(); ++e)
      if (doc.edge_labels[e] == 1) {
        const int a = doc.graph.edges[e].src, b = doc.graph.edges[e].dst;
        gold_pairs.emplace(std::min(a, b), std::max(a, b));
      }
    detail::draw_links(gold_panel, doc.graph,
                       {gold_pairs.begin(), gold_pairs.end()}, kGoldLinkColor);
    result.gold_links = static_cast<int>(gold_pairs.size());
    result.gold_panel = true;
    panel = hstack(predicted_panel, gold_panel);
  }

  std::filesystem::path target(out_path);
  if (target.empty()) {
    ensure_dir(paths.render_dir());
    target = paths.render_dir() / (doc_id + ".png");
  } else if (target.has_parent_path()) {
    ensure_dir(target.parent_path());
  }
  const auto bytes = encode_png(panel);
  std::ofstream f(target, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write rendered image: " + target.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  result.image_file = target;
  return result;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string name;
  EvalReport report;
};

struct AblateOutput {
  std::vector<AblationRow> rows;
  std::filesystem::path table_file;
  std::filesystem::path json_file;
};

namespace detail {

// Train both stages in memory under the given settings and evaluate; used by
// the ablation matrix where persisted checkpoints would only be clutter.
inline EvalReport run_row(const ExperimentConfig& cfg, const std::vector<PreparedDoc>& train_docs,
                          const std::vector<PreparedDoc>& val_docs,
                          const std::vector<PreparedDoc>& eval_docs,
                          const StageOneEncoder* shared_stage1) {
  std::optional<StageOneEncoder> own_stage1;
  const StageOneEncoder* stage1 = shared_stage1;
  if (!stage1) {
    own_stage1.emplace(cfg.stage1);
    std::vector<StageOneSample> train_s, val_s;
    for (const auto& d : train_docs) train_s.push_back({&d.graph, d.node_labels});
    for (const auto& d : val_docs) val_s.push_back({&d.graph, d.node_labels});
    train_stage1(*own_stage1, train_s, val_s, cfg.features);
    stage1 = &*own_stage1;
  }

  const Modality modality = cfg.stage2_train_config().modality;
  auto to_stage2 = [&](const std::vector<PreparedDoc>& docs) {
    std::vector<StageTwoDoc> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(make_stage2_doc(d, *stage1, cfg.features));
    return out;
  };
  StageTwoModel model(cfg.stage2_config(), cfg.seed);
  std::optional<VisualEncoder> visual;
  if (modality != Modality::kGeometryOnly) visual.emplace(cfg.visual, cfg.seed ^ 0x766973ULL);
  train_stage2(model, visual ? &*visual : nullptr, to_stage2(train_docs), to_stage2(val_docs),
               cfg.stage2_train_config());
  return evaluate_model(model, visual ? &*visual : nullptr, modality, eval_docs, *stage1,
                        cfg.features, cfg.dataset == "rvlcdip", cfg.workers)
      .aggregate;
}

inline std::string fmt_score(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt_score(*v) : std::string("n/a");
}

}  // namespace detail

inline AblateOutput cmd_ablate(const ExperimentConfig& base, const std::string& mode,
                               const std::string& split) {
  base.validate();
  if (mode != "modalities" && mode != "features")
    throw UsageError("unknown ablation mode '" + mode + "' (expected modalities or features)");
  const RunPaths paths(base.output_dir);

  const auto splits = load_dataset(base);
  if (splits.train.empty()) throw DataError("train split is empty");
  const auto& eval_records = split_records(splits, split);
  if (eval_records.empty()) throw DataError("split '" + split + "' has no documents");

  // Every row shares graphs and pages; pages are loaded once because at least
  // one row uses the visual pathway.
  const bool pages = mode == "modalities" || base.modality != "geometry-only";
  const auto train_docs = prepare_split(base, splits.train, "train", nullptr, pages);
  const auto val_docs = prepare_split(base, splits.val, "val", nullptr, pages);
  const auto eval_docs = prepare_split(base, eval_records, split, nullptr, pages);

  std::vector<std::pair<std::string, ExperimentConfig>> row_cfgs;
  if (mode == "modalities") {
    for (const char* m : {"combined", "geometry-only", "visual-only"}) {
      ExperimentConfig cfg = base;
      cfg.modality = m;
      row_cfgs.emplace_back(m, cfg);
    }
  } else {
    row_cfgs.emplace_back("all-features", base);
    const std::vector<std::pair<std::string, bool FeatureMask::*>> switches = {
        {"no-bbox", &FeatureMask::bbox},         {"no-area", &FeatureMask::area},
        {"no-regional", &FeatureMask::regional}, {"no-angle", &FeatureMask::angle},
        {"no-distance", &FeatureMask::distance}, {"no-polar", &FeatureMask::polar},
        {"no-relpos", &FeatureMask::relpos}};
    for (const auto& [name, member] : switches) {
      ExperimentConfig cfg = base;
      cfg.features.*member = false;
      row_cfgs.emplace_back(name, cfg);
    }
  }

  // Modality rows share one Stage-I encoder: its features do not vary there.
  std::optional<StageOneEncoder> shared_stage1;
  if (mode == "modalities") {
    shared_stage1.emplace(base.stage1);
    std::vector<StageOneSample> train_s, val_s;
    for (const auto& d : train_docs) train_s.push_back({&d.graph, d.node_labels});
    for (const auto& d : val_docs) val_s.push_back({&d.graph, d.node_labels});
    train_stage1(*shared_stage1, train_s, val_s, base.features);
  }

  AblateOutput out;
  const auto dir = paths.ablate_dir(mode);
  ensure_dir(dir);
  for (const auto& [name, cfg] : row_cfgs) {
    log::info("ablation row '" + name + "'");
    save_config((dir / (name + ".config.json")).string(), cfg);
    out.rows.push_back({name, detail::run_row(cfg, train_docs, val_docs, eval_docs,
                                              shared_stage1 ? &*shared_stage1 : nullptr)});
  }

  const auto entities = base.entity_vocab();
  const auto links = link_vocab_for(base);
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& row : out.rows) {
    nlohmann::json j = eval_report_json(row.report, entities, links);
    j["row"] = row.name;
    rows_json.push_back(j);
  }
  out.json_file = dir / "comparison.json";
  {
    std::ofstream f(out.json_file);
    if (!f) throw IoError("cannot write ablation report: " + out.json_file.string());
    f << nlohmann::json{{"mode", mode}, {"split", split}, {"rows", rows_json}}.dump(2) << "\n";
  }

  std::string table = "row                 node_micro_f1  link_f1_none  link_f1_pos  auc_pr\n";
  for (const auto& row : out.rows) {
    char line[160];
    const auto& r = row.report;
    std::snprintf(line, sizeof(line), "%-19s %13s %13s %12s %7s\n", row.name.c_str(),
                  detail::fmt_score(r.node.micro_f1).c_str(),
                  detail::fmt_score(r.link.per_class[0].f1).c_str(),
                  detail::fmt_score(r.link.per_class[1].f1).c_str(),
                  detail::fmt_opt(r.auc_pr).c_str());
    table += line;
  }
  out.table_file = dir / "comparison.txt";
  {
    std::ofstream f(out.table_file);
    if (!f) throw IoError("cannot write ablation table: " + out.table_file.string());
    f << table;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint inspection
// ---------------------------------------------------------------------------

inline std::string cmd_inspect_checkpoint(const std::string& path) {
  const auto c = ckpt::load_checkpoint(path);
  std::string out = path + "\n";
  out += "format: " + (detail::format_of(c).empty() ? "unknown" : detail::format_of(c)) +
         " (container v" + std::to_string(ckpt::kCheckpointVersion) + ")\n";
  std::size_t scalars = 0;
  for (const auto& [name, m] : c.arrays) scalars += static_cast<std::size_t>(m.size());
  out += "arrays: " + std::to_string(c.arrays.size()) + " (" + std::to_string(scalars) +
         " values)\n";
  for (const auto& [name, m] : c.arrays)
    out += "  " + name + " " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "\n";
  nlohmann::json meta = c.metadata;
  meta.erase("config");  // echoed compactly below the array table
  out += "metadata: " + meta.dump(2) + "\n";
  if (c.metadata.contains("config")) out += "config: " + c.metadata["config"].dump() + "\n";
  return out;
}

}  // namespace layoutgraph
