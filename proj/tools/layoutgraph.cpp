#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "layoutgraph/pipeline.hpp"

namespace lg = layoutgraph;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string dataset;
  std::string out;
  int limit_docs = -1;
  int workers = 0;
  long long seed = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment config file (JSON)");
    cmd->add_option("--dataset", dataset, "Dataset choice")
        ->check(CLI::IsMember({"funsd", "rvlcdip"}));
    cmd->add_option("--limit-docs", limit_docs, "Keep at most N documents per split")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--workers", workers, "Worker threads for per-document work")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Override every random seed")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", out, "Output directory for this run");
  }

  lg::ExperimentConfig resolve() const {
    lg::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = lg::load_config(config_path);
    if (!dataset.empty()) cfg.dataset = dataset;
    if (limit_docs >= 0) cfg.limit_docs = limit_docs;
    if (workers > 0) cfg.workers = workers;
    if (seed >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed);
      cfg.stage1.seed = static_cast<std::uint64_t>(seed);
    }
    if (!out.empty()) cfg.output_dir = out;
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Document-graph pipeline: geometric graphs, two-stage training, evaluation"};
  app.require_subcommand(1);

  auto* build = app.add_subcommand("build-graphs", "Serialize one attributed graph per document");
  CommonFlags build_flags;
  build_flags.attach(build);

  auto* train = app.add_subcommand("train", "Train stage 1 (contrastive) or stage 2 (joint)");
  CommonFlags train_flags;
  train_flags.attach(train);
  int stage = 0;
  train->add_option("--stage", stage, "Training stage (1 or 2)")->required();
  std::string stage1_override;
  train->add_option("--checkpoint", stage1_override,
                    "Stage-1 checkpoint for --stage 2 (defaults to this run's own)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a stage-2 checkpoint on a split");
  CommonFlags eval_flags;
  eval_flags.attach(evaluate);
  std::string eval_checkpoint;
  evaluate->add_option("--checkpoint", eval_checkpoint, "Stage-2 checkpoint")->required();
  std::string eval_split = "test";
  evaluate->add_option("--split", eval_split, "Split to score")
      ->check(CLI::IsMember({"train", "val", "test"}));

  auto* ablate = app.add_subcommand("ablate", "Train and compare a row matrix of settings");
  CommonFlags ablate_flags;
  ablate_flags.attach(ablate);
  std::string ablate_mode;
  ablate->add_option("mode", ablate_mode, "Row matrix: modalities or features")->required();
  std::string ablate_split = "test";
  ablate->add_option("--split", ablate_split, "Split to score")
      ->check(CLI::IsMember({"train", "val", "test"}));

  auto* render = app.add_subcommand("render", "Draw predicted classes and links on the page");
  CommonFlags render_flags;
  render_flags.attach(render);
  std::string render_checkpoint;
  render->add_option("--checkpoint", render_checkpoint, "Stage-2 checkpoint")->required();
  std::string render_doc;
  render->add_option("doc_id", render_doc, "Document to render")->required();

  auto* inspect = app.add_subcommand("inspect-checkpoint", "Describe a checkpoint file");
  std::string inspect_path;
  inspect->add_option("path", inspect_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::fprintf(stderr, "error: category=usage message=%s\n", e.what());
    return 2;
  }

  if (build->parsed()) {
    const auto result = lg::cmd_build_graphs(build_flags.resolve());
    std::printf("graphs: %s\n", result.graphs_dir.string().c_str());
    std::printf("documents: %d (skipped %d)\n", result.documents, result.skipped);
    if (result.coverage() >= 0.0)
      std::printf("link coverage: %.4f (%ld of %ld pairs reachable)\n", result.coverage(),
                  result.covered_pairs, result.gt_pairs);
    return 0;
  }
  if (train->parsed()) {
    const auto path = lg::cmd_train(stage, train_flags.resolve(), stage1_override);
    std::printf("checkpoint: %s\n", path.c_str());
    return 0;
  }
  if (evaluate->parsed()) {
    const auto out = lg::cmd_evaluate(eval_flags.resolve(), eval_checkpoint, eval_split);
    const auto& agg = out.result.aggregate;
    std::printf("entity micro F1: %.4f\n", agg.node.micro_f1);
    std::printf("link micro F1:   %.4f\n", agg.link.micro_f1);
    if (agg.auc_pr) std::printf("link AUC-PR:     %.4f\n", *agg.auc_pr);
    if (agg.tables)
      std::printf("table F1:        %.4f (%ld predicted, %ld ground truth)\n", agg.tables->f1(),
                  agg.tables->predicted, agg.tables->ground_truth);
    std::printf("report: %s\n", out.report_file.string().c_str());
    std::printf("edges:  %s\n", out.edges_file.string().c_str());
    return 0;
  }
  if (ablate->parsed()) {
    const auto out = lg::cmd_ablate(ablate_flags.resolve(), ablate_mode, ablate_split);
    std::FILE* table = std::fopen(out.table_file.string().c_str(), "r");
    if (table) {
      char buf[256];
      while (std::fgets(buf, sizeof(buf), table)) std::fputs(buf, stdout);
      std::fclose(table);
    }
    std::printf("comparison: %s\n", out.json_file.string().c_str());
    return 0;
  }
  if (render->parsed()) {
    const auto result =
        lg::cmd_render(render_flags.resolve(), render_checkpoint, render_doc, render_flags.out);
    std::printf("image: %s\n", result.image_file.string().c_str());
    std::printf("predicted links: %d\n", result.predicted_links);
    if (result.gold_panel) std::printf("annotated links in panel: %d\n", result.gold_links);
    return 0;
  }
  if (inspect->parsed()) {
    std::fputs(lg::cmd_inspect_checkpoint(inspect_path).c_str(), stdout);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const lg::Error& e) {
    std::fprintf(stderr, "error: category=%s message=%s\n", e.category().c_str(), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: category=internal message=%s\n", e.what());
    return 7;
  }
}
