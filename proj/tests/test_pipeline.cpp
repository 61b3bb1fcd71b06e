#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "layoutgraph/pipeline.hpp"
#include "tempdir.hpp"

using namespace layoutgraph;
using Catch::Matchers::ContainsSubstring;
using testsupport::TempDir;

namespace {

std::string fixture(const std::string& rel) {
  const char* env = std::getenv("LAYOUTGRAPH_FIXTURES");
  REQUIRE(env != nullptr);
  return std::string(env) + "/" + rel;
}

// Small enough to train in milliseconds, large enough to exercise every path.
ExperimentConfig tiny_config(const std::string& output_dir) {
  ExperimentConfig cfg;
  cfg.dataset = "funsd";
  cfg.dataset_root = fixture("datasets/funsd_mini");
  cfg.output_dir = output_dir;
  cfg.k = 4;
  cfg.stage1.epochs = 3;
  cfg.stage1.triplets_per_anchor = 2;
  cfg.stage2_epochs = 3;
  cfg.visual.embed_dim = 24;
  cfg.visual.base_width = 2;
  cfg.gat_hidden = 12;
  cfg.head_widths = {16, 8};
  return cfg;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<nlohmann::json> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

void require_same_params(const nn::ParamStore& a, const nn::ParamStore& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.names()[i] == b.names()[i]);
    const auto& ma = a.params()[i]->value;
    const auto& mb = b.params()[i]->value;
    REQUIRE(ma.rows() == mb.rows());
    REQUIRE(ma.cols() == mb.cols());
    REQUIRE(std::memcmp(ma.data(), mb.data(), sizeof(double) * ma.size()) == 0);
  }
}

}  // namespace

TEST_CASE("parallel_for covers every index at any worker count and propagates errors") {
  std::vector<int> hits(257, 0);
  parallel_for(hits.size(), 5, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) REQUIRE(h == 1);

  parallel_for(0, 4, [&](std::size_t) { FAIL("no work expected"); });

  REQUIRE_THROWS_WITH(parallel_for(100, 3,
                                   [&](std::size_t i) {
                                     if (i == 57) throw DataError("boom at 57");
                                   }),
                      ContainsSubstring("boom at 57"));
}

TEST_CASE("build-graphs writes one graph per document plus coverage and config") {
  TempDir dir("pipe_build");
  const auto cfg = tiny_config(dir.file("run"));
  const auto result = cmd_build_graphs(cfg);
  REQUIRE(result.documents == 7);
  REQUIRE(result.skipped == 1);
  REQUIRE(result.gt_pairs > 0);
  REQUIRE(result.coverage() > 0.0);

  const RunPaths paths(cfg.output_dir);
  std::size_t files = 0;
  for (const char* split : {"train", "val", "test"})
    for (const auto& entry : std::filesystem::directory_iterator(paths.graph_split_dir(split)))
      files += entry.path().extension() == ".json" ? 1 : 0;
  REQUIRE(files == 7);

  const auto coverage = nlohmann::json::parse(slurp(paths.coverage_file()));
  REQUIRE(coverage["documents"].size() == 7);
  REQUIRE(coverage["skipped"].size() == 1);
  REQUIRE(coverage["skipped"][0]["doc_id"] == "9999990");
  long gt = 0, covered = 0;
  for (const auto& row : coverage["documents"]) {
    gt += row["gt_pairs"].get<long>();
    covered += row["covered_pairs"].get<long>();
  }
  REQUIRE(gt == result.gt_pairs);
  REQUIRE(covered == result.covered_pairs);
  REQUIRE(coverage["aggregate"]["gt_pairs"].get<long>() == gt);

  const auto persisted = load_config((paths.graphs_dir() / "config.json").string());
  REQUIRE(config_to_json(persisted) == config_to_json(cfg));

  SECTION("rerun produces byte-identical graph files at any worker count") {
    std::vector<std::pair<std::filesystem::path, std::string>> before;
    for (const char* split : {"train", "val", "test"})
      for (const auto& entry : std::filesystem::directory_iterator(paths.graph_split_dir(split)))
        before.emplace_back(entry.path(), slurp(entry.path()));

    auto parallel = cfg;
    parallel.workers = 4;
    cmd_build_graphs(parallel);
    for (const auto& [path, bytes] : before) REQUIRE(slurp(path) == bytes);
  }
}

TEST_CASE("stage-1 training emits checkpoint, metric log, and reproducible runs") {
  TempDir dir("pipe_s1");
  const auto cfg = tiny_config(dir.file("run"));
  cmd_build_graphs(cfg);
  const auto ckpt_path = cmd_train(1, cfg);
  const RunPaths paths(cfg.output_dir);
  REQUIRE(ckpt_path == paths.checkpoint_file(1).string());

  const auto bundle = load_stage1_bundle(ckpt_path);
  REQUIRE(bundle.epoch == cfg.stage1.epochs);
  REQUIRE(bundle.history.train_loss.size() == 3);
  REQUIRE(bundle.history.val_loss.size() == 3);
  for (double v : bundle.history.train_loss) REQUIRE(std::isfinite(v));

  const auto rows = read_jsonl(paths.metrics_file(1));
  REQUIRE(rows.size() == 3);
  for (std::size_t e = 0; e < rows.size(); ++e) {
    REQUIRE(rows[e]["stage"] == 1);
    REQUIRE(rows[e]["epoch"] == static_cast<int>(e));
    REQUIRE(rows[e]["train_loss"].get<double>() == bundle.history.train_loss[e]);
  }

  SECTION("an identical run in a fresh directory reproduces the metric log") {
    TempDir other("pipe_s1_repro");
    auto cfg2 = tiny_config(other.file("run"));
    cmd_build_graphs(cfg2);
    cmd_train(1, cfg2);
    REQUIRE(slurp(RunPaths(cfg2.output_dir).metrics_file(1)) == slurp(paths.metrics_file(1)));
  }

  SECTION("rerunning a completed schedule is an idempotent resume") {
    const std::string ckpt_before = slurp(ckpt_path);
    const std::string metrics_before = slurp(paths.metrics_file(1));
    cmd_train(1, cfg);
    REQUIRE(slurp(ckpt_path) == ckpt_before);
    REQUIRE(slurp(paths.metrics_file(1)) == metrics_before);
  }
}

TEST_CASE("a stage-1 run killed mid-schedule resumes to the uninterrupted result") {
  TempDir dir_a("pipe_s1_full");
  const auto cfg_a = tiny_config(dir_a.file("run"));
  cmd_build_graphs(cfg_a);
  cmd_train(1, cfg_a);

  TempDir dir_b("pipe_s1_resume");
  const auto cfg_b = tiny_config(dir_b.file("run"));
  cmd_build_graphs(cfg_b);

  // Recreate the on-disk state an interruption after epoch 2 leaves behind:
  // checkpoint_last.bin only, no final checkpoint, no metric log.
  const RunPaths paths_b(cfg_b.output_dir);
  {
    const auto splits = load_dataset(cfg_b);
    const auto train_docs = prepare_split(cfg_b, splits.train, "train", &paths_b, false);
    const auto val_docs = prepare_split(cfg_b, splits.val, "val", &paths_b, false);
    std::vector<StageOneSample> train_s, val_s;
    for (const auto& d : train_docs) train_s.push_back({&d.graph, d.node_labels});
    for (const auto& d : val_docs) val_s.push_back({&d.graph, d.node_labels});
    StageOneEncoder encoder(cfg_b.stage1);
    ensure_dir(paths_b.stage_dir(1));
    const auto hook = [&](const StageOneEpochState& st) {
      if (st.epoch == 1)
        ckpt::save_checkpoint(paths_b.last_checkpoint_file(1).string(),
                              make_stage1_checkpoint(cfg_b, encoder, *st.history, st.epoch + 1,
                                                     st.optimizer));
    };
    train_stage1(encoder, train_s, val_s, cfg_b.features, nullptr, hook);
  }
  REQUIRE(std::filesystem::exists(paths_b.last_checkpoint_file(1)));
  REQUIRE_FALSE(std::filesystem::exists(paths_b.checkpoint_file(1)));

  cmd_train(1, cfg_b);

  const RunPaths paths_a(cfg_a.output_dir);
  REQUIRE(slurp(paths_b.metrics_file(1)) == slurp(paths_a.metrics_file(1)));
  auto full = load_stage1_bundle(paths_a.checkpoint_file(1).string());
  auto resumed = load_stage1_bundle(paths_b.checkpoint_file(1).string());
  REQUIRE(full.history.train_loss == resumed.history.train_loss);
  REQUIRE(full.history.val_loss == resumed.history.val_loss);
  require_same_params(full.encoder.params(), resumed.encoder.params());

  SECTION("resume refuses a checkpoint from a different configuration") {
    auto cfg_changed = cfg_b;
    cfg_changed.stage1.margin = 2.0;
    std::filesystem::remove(paths_b.checkpoint_file(1));
    REQUIRE_THROWS_MATCHES(cmd_train(1, cfg_changed), CheckpointError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("different configuration")));
  }
}

TEST_CASE("a stage-2 run killed mid-schedule resumes to the uninterrupted result") {
  TempDir dir_a("pipe_s2_full");
  const auto cfg_a = tiny_config(dir_a.file("run"));
  cmd_build_graphs(cfg_a);
  cmd_train(1, cfg_a);
  cmd_train(2, cfg_a);

  TempDir dir_b("pipe_s2_resume");
  const auto cfg_b = tiny_config(dir_b.file("run"));
  cmd_build_graphs(cfg_b);
  cmd_train(1, cfg_b);

  const RunPaths paths_b(cfg_b.output_dir);
  {
    auto stage1 = load_stage1_bundle(paths_b.checkpoint_file(1).string());
    const std::uint64_t stage1_hash = ckpt::file_hash(paths_b.checkpoint_file(1).string());
    const auto splits = load_dataset(cfg_b);
    const auto train_docs = prepare_split(cfg_b, splits.train, "train", &paths_b, true);
    const auto val_docs = prepare_split(cfg_b, splits.val, "val", &paths_b, true);
    auto to_stage2 = [&](const std::vector<PreparedDoc>& docs) {
      std::vector<StageTwoDoc> out;
      for (const auto& d : docs) out.push_back(make_stage2_doc(d, stage1.encoder, cfg_b.features));
      return out;
    };
    StageTwoModel model(cfg_b.stage2_config(), cfg_b.seed);
    VisualEncoder visual(cfg_b.visual, cfg_b.seed ^ 0x766973ULL);
    ensure_dir(paths_b.stage_dir(2));
    const auto hook = [&](const StageTwoEpochState& st) {
      if (st.epoch == 1)
        ckpt::save_checkpoint(
            paths_b.last_checkpoint_file(2).string(),
            make_stage2_checkpoint(cfg_b, model, &visual, stage1.encoder, stage1_hash,
                                   *st.history, st.epoch + 1, st.optimizer, st.visual_optimizer,
                                   st.best_val, st.best_model, st.best_visual));
    };
    train_stage2(model, &visual, to_stage2(train_docs), to_stage2(val_docs),
                 cfg_b.stage2_train_config(), nullptr, hook);
  }
  REQUIRE(std::filesystem::exists(paths_b.last_checkpoint_file(2)));
  REQUIRE_FALSE(std::filesystem::exists(paths_b.checkpoint_file(2)));

  cmd_train(2, cfg_b);

  const RunPaths paths_a(cfg_a.output_dir);
  REQUIRE(slurp(paths_b.metrics_file(2)) == slurp(paths_a.metrics_file(2)));
  auto full = load_stage2_bundle(paths_a.checkpoint_file(2).string());
  auto resumed = load_stage2_bundle(paths_b.checkpoint_file(2).string());
  REQUIRE(full.metadata.at("best_epoch") == resumed.metadata.at("best_epoch"));
  REQUIRE(full.metadata.at("train_loss") == resumed.metadata.at("train_loss"));
  REQUIRE(full.metadata.at("val_loss") == resumed.metadata.at("val_loss"));
  require_same_params(full.model.params(), resumed.model.params());
  REQUIRE(full.visual.has_value());
  REQUIRE(resumed.visual.has_value());
  require_same_params(full.visual->params(), resumed.visual->params());

  SECTION("resume refuses to continue when the stage-1 checkpoint changed") {
    auto cfg_reseeded = cfg_b;
    cfg_reseeded.stage1.seed = 777;
    StageOneEncoder other(cfg_reseeded.stage1, 9);
    ckpt::save_checkpoint(paths_b.checkpoint_file(1).string(),
                          make_stage1_checkpoint(cfg_b, other, {}, cfg_b.stage1.epochs, nullptr));
    std::filesystem::remove(paths_b.checkpoint_file(2));
    REQUIRE_THROWS_MATCHES(cmd_train(2, cfg_b), CheckpointError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("stage-1 checkpoint changed")));
  }
}

TEST_CASE("evaluate writes a report whose aggregate matches the edge dump") {
  TempDir dir("pipe_eval");
  const auto cfg = tiny_config(dir.file("run"));
  cmd_build_graphs(cfg);
  cmd_train(1, cfg);
  const auto ckpt2 = cmd_train(2, cfg);

  const auto out = cmd_evaluate(cfg, ckpt2, "test");
  REQUIRE(std::filesystem::exists(out.report_file));
  REQUIRE(std::filesystem::exists(out.edges_file));

  const auto report = nlohmann::json::parse(slurp(out.report_file));
  REQUIRE(report["split"] == "test");
  REQUIRE(report["documents"].size() == 2);

  // The report must be recomputable from the per-edge dump alone.
  const auto rows = read_jsonl(out.edges_file);
  REQUIRE_FALSE(rows.empty());
  std::vector<int> pred, gold;
  std::vector<double> scores;
  for (const auto& row : rows) {
    pred.push_back(row["predicted"].get<int>());
    gold.push_back(row["gold"].get<int>());
    scores.push_back(row["score"].get<double>());
  }
  const auto link = classification_f1(pred, gold, 2);
  REQUIRE(report["aggregate"]["links"]["micro_f1"].get<double>() == link.micro_f1);
  const auto auc = auc_pr(scores, gold);
  if (auc)
    REQUIRE(report["aggregate"]["auc_pr"].get<double>() == *auc);
  else
    REQUIRE(report["aggregate"]["auc_pr"].is_null());

  const auto persisted = load_config((out.report_file.parent_path() / "config.json").string());
  REQUIRE(persisted.modality == cfg.modality);

  SECTION("a rerun at a different worker count reproduces the report byte for byte") {
    const std::string report_bytes = slurp(out.report_file);
    const std::string edges_bytes = slurp(out.edges_file);
    auto parallel = cfg;
    parallel.workers = 3;
    cmd_evaluate(parallel, ckpt2, "test");
    REQUIRE(slurp(out.report_file) == report_bytes);
    REQUIRE(slurp(out.edges_file) == edges_bytes);
  }

  SECTION("model-defining settings come from the checkpoint, not the caller") {
    auto doctored = cfg;
    doctored.gat_hidden = 99;      // would not match the trained arrays
    doctored.modality = "visual-only";
    const auto out2 = cmd_evaluate(doctored, ckpt2, "test");
    REQUIRE(nlohmann::json::parse(slurp(out2.report_file)) ==
            nlohmann::json::parse(slurp(out.report_file)));
  }

  SECTION("a stage-1 checkpoint is rejected with its actual format named") {
    REQUIRE_THROWS_MATCHES(
        cmd_evaluate(cfg, RunPaths(cfg.output_dir).checkpoint_file(1).string(), "test"),
        CheckpointError,
        Catch::Matchers::MessageMatches(ContainsSubstring("not a stage-2 checkpoint")));
  }

  SECTION("training-split scores after training beat or match an untrained direction") {
    const auto train_out = cmd_evaluate(cfg, ckpt2, "train");
    REQUIRE(train_out.result.aggregate.node.total > 0);
  }
}

TEST_CASE("render draws exactly the predicted links and lists valid ids on a miss") {
  TempDir dir("pipe_render");
  const auto cfg = tiny_config(dir.file("run"));
  cmd_build_graphs(cfg);
  cmd_train(1, cfg);
  const auto ckpt2 = cmd_train(2, cfg);
  const auto eval_out = cmd_evaluate(cfg, ckpt2, "test");

  const std::string doc_id = "0000090";
  const auto render = cmd_render(cfg, ckpt2, doc_id);
  REQUIRE(std::filesystem::exists(render.image_file));

  int dump_positives = 0;
  for (const auto& row : read_jsonl(eval_out.edges_file))
    if (row["doc_id"] == doc_id && row["predicted"].get<int>() == 1) ++dump_positives;
  REQUIRE(render.predicted_links == dump_positives);

  // Ground-truth panel: the annotation's linked pairs present in the graph.
  const auto splits = load_dataset(cfg);
  const DocumentRecord* record = nullptr;
  for (const auto& r : splits.test)
    if (r.doc_id == doc_id) record = &r;
  REQUIRE(record != nullptr);
  const RunPaths paths(cfg.output_dir);
  const auto prepared = prepare_doc(cfg, *record, "test", &paths, true);
  std::set<std::pair<int, int>> gold_pairs;
  for (std::size_t e = 0; e < prepared.graph.edges.size(); ++e)
    if (prepared.edge_labels[e] == 1) {
      const int a = prepared.graph.edges[e].src, b = prepared.graph.edges[e].dst;
      gold_pairs.emplace(std::min(a, b), std::max(a, b));
    }
  REQUIRE(render.gold_panel);
  REQUIRE(render.gold_links == static_cast<int>(gold_pairs.size()));

  const Image page = read_image(record->image_path);
  const Image panel = read_image(render.image_file);
  REQUIRE(panel.width == 2 * page.width + 8);
  REQUIRE(panel.height == page.height);
  REQUIRE(panel.channels == 3);

  SECTION("an explicit output path is honored") {
    const auto target = dir.file("custom/overlay.png");
    const auto custom = cmd_render(cfg, ckpt2, doc_id, target);
    REQUIRE(custom.image_file.string() == target);
    REQUIRE(std::filesystem::exists(target));
  }

  SECTION("an unknown id fails with the valid ids listed") {
    try {
      cmd_render(cfg, ckpt2, "zzz");
      FAIL("expected UsageError");
    } catch (const UsageError& e) {
      const std::string what = e.what();
      REQUIRE(what.find("unknown document id 'zzz'") != std::string::npos);
      REQUIRE(what.find("0000090") != std::string::npos);
      REQUIRE(what.find("0000000") != std::string::npos);
    }
  }
}

TEST_CASE("ablate emits one row per setting with per-row configs") {
  TempDir dir("pipe_ablate");
  auto cfg = tiny_config(dir.file("run"));
  cfg.stage1.epochs = 2;
  cfg.stage2_epochs = 2;

  SECTION("modalities") {
    const auto out = cmd_ablate(cfg, "modalities", "test");
    REQUIRE(out.rows.size() == 3);
    REQUIRE(out.rows[0].name == "combined");
    REQUIRE(out.rows[1].name == "geometry-only");
    REQUIRE(out.rows[2].name == "visual-only");
    const auto comparison = nlohmann::json::parse(slurp(out.json_file));
    REQUIRE(comparison["rows"].size() == 3);
    for (const auto& row : out.rows) {
      const auto row_cfg = load_config(
          (RunPaths(cfg.output_dir).ablate_dir("modalities") / (row.name + ".config.json"))
              .string());
      REQUIRE(row_cfg.modality == row.name);
    }
    const std::string table = slurp(out.table_file);
    REQUIRE_THAT(table, ContainsSubstring("node_micro_f1"));
    REQUIRE_THAT(table, ContainsSubstring("geometry-only"));
  }

  SECTION("features") {
    const auto out = cmd_ablate(cfg, "features", "test");
    REQUIRE(out.rows.size() == 8);
    REQUIRE(out.rows[0].name == "all-features");
    const auto no_bbox = load_config(
        (RunPaths(cfg.output_dir).ablate_dir("features") / "no-bbox.config.json").string());
    REQUIRE_FALSE(no_bbox.features.bbox);
    REQUIRE(no_bbox.features.area);
  }

  SECTION("unknown mode") {
    REQUIRE_THROWS_AS(cmd_ablate(cfg, "rows", "test"), UsageError);
  }
}

TEST_CASE("prerequisites are enforced with named errors") {
  TempDir dir("pipe_prereq");
  const auto cfg = tiny_config(dir.file("run"));

  REQUIRE_THROWS_MATCHES(cmd_train(1, cfg), IoError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("build-graphs")));
  REQUIRE_THROWS_MATCHES(cmd_train(2, cfg), IoError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("build-graphs")));
  REQUIRE_THROWS_AS(cmd_train(3, cfg), UsageError);

  cmd_build_graphs(cfg);
  REQUIRE_THROWS_MATCHES(cmd_train(2, cfg), IoError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("train --stage 1")));

  auto mismatched = cfg;
  mismatched.k = 5;
  REQUIRE_THROWS_MATCHES(
      cmd_train(1, mismatched), ConfigError,
      Catch::Matchers::MessageMatches(ContainsSubstring("built with k=4")));

  REQUIRE_THROWS_AS(cmd_evaluate(cfg, dir.file("nope.bin"), "test"), IoError);

  auto rootless = cfg;
  rootless.dataset_root = "";
  if (std::getenv(kDataRootEnv) == nullptr)
    REQUIRE_THROWS_AS(cmd_build_graphs(rootless), ConfigError);
}

TEST_CASE("inspect-checkpoint describes format, arrays, and config") {
  TempDir dir("pipe_inspect");
  const auto cfg = tiny_config(dir.file("run"));
  cmd_build_graphs(cfg);
  const auto ckpt1 = cmd_train(1, cfg);

  const auto text = cmd_inspect_checkpoint(ckpt1);
  REQUIRE_THAT(text, ContainsSubstring("format: stage1"));
  REQUIRE_THAT(text, ContainsSubstring("param.stage1.l1.weight 24x15"));
  REQUIRE_THAT(text, ContainsSubstring("\"epoch\": 3"));
  REQUIRE_THAT(text, ContainsSubstring("\"dataset\":\"funsd\""));

  REQUIRE_THROWS_AS(cmd_inspect_checkpoint(dir.file("missing.bin")), IoError);
}

#ifdef LG_CLI_BINARY
namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const TempDir& dir, const std::string& args) {
  const std::string out_path = dir.file("cli_stdout.txt");
  const std::string err_path = dir.file("cli_stderr.txt");
  const std::string command =
      std::string(LG_CLI_BINARY) + " " + args + " >" + out_path + " 2>" + err_path;
  const int status = std::system(command.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

}  // namespace

TEST_CASE("the CLI binary wires verbs, flags, and error categories") {
  TempDir dir("pipe_cli");
  auto cfg = tiny_config(dir.file("run"));
  cfg.stage1.epochs = 2;
  cfg.stage2_epochs = 2;
  const std::string cfg_path = dir.file("config.json");
  save_config(cfg_path, cfg);

  const auto help = run_cli(dir, "--help");
  REQUIRE(help.exit_code == 0);
  REQUIRE_THAT(help.out, ContainsSubstring("build-graphs"));
  REQUIRE_THAT(help.out, ContainsSubstring("inspect-checkpoint"));

  const auto bogus = run_cli(dir, "frobnicate");
  REQUIRE(bogus.exit_code == 2);
  REQUIRE_THAT(bogus.err, ContainsSubstring("error: category=usage"));

  const auto missing_ckpt =
      run_cli(dir, "evaluate --config " + cfg_path + " --checkpoint " + dir.file("none.bin"));
  REQUIRE(missing_ckpt.exit_code == 4);
  REQUIRE_THAT(missing_ckpt.err, ContainsSubstring("error: category=io"));

  const auto bad_config = run_cli(dir, "build-graphs --config " + dir.file("absent.json"));
  REQUIRE(bad_config.exit_code == 4);

  const auto build = run_cli(dir, "build-graphs --config " + cfg_path);
  REQUIRE(build.exit_code == 0);
  REQUIRE_THAT(build.out, ContainsSubstring("documents: 7"));

  const auto train1 = run_cli(dir, "train --stage 1 --config " + cfg_path);
  REQUIRE(train1.exit_code == 0);
  const auto train2 = run_cli(dir, "train --stage 2 --config " + cfg_path);
  REQUIRE(train2.exit_code == 0);

  const auto evaluate = run_cli(dir, "evaluate --config " + cfg_path + " --checkpoint " +
                                         RunPaths(cfg.output_dir).checkpoint_file(2).string() +
                                         " --split test --workers 2");
  REQUIRE(evaluate.exit_code == 0);
  REQUIRE_THAT(evaluate.out, ContainsSubstring("entity micro F1"));

  const auto render = run_cli(dir, "render --config " + cfg_path + " --checkpoint " +
                                       RunPaths(cfg.output_dir).checkpoint_file(2).string() +
                                       " 0000090 --out " + dir.file("overlay.png"));
  REQUIRE(render.exit_code == 0);
  REQUIRE(std::filesystem::exists(dir.file("overlay.png")));

  const auto inspect = run_cli(
      dir, "inspect-checkpoint " + RunPaths(cfg.output_dir).checkpoint_file(2).string());
  REQUIRE(inspect.exit_code == 0);
  REQUIRE_THAT(inspect.out, ContainsSubstring("format: stage2"));

  const auto unknown_doc = run_cli(dir, "render --config " + cfg_path + " --checkpoint " +
                                            RunPaths(cfg.output_dir).checkpoint_file(2).string() +
                                            " not_a_doc");
  REQUIRE(unknown_doc.exit_code == 2);
  REQUIRE_THAT(unknown_doc.err, ContainsSubstring("category=usage"));
  REQUIRE_THAT(unknown_doc.err, ContainsSubstring("valid ids"));
}
#endif
