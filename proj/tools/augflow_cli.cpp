// augflow: evaluation-driven data augmentation for small language models.
//
//   augflow run      --config run.json [--seed N] [--max-iterations N] [--dry-run [--record]]
//   augflow finetune --config run.json      initial fine-tune, or the pending iteration's model update
//   augflow eval | analyze | generate | qc  one stage of the pending iteration
//   augflow report   --config run.json      rewrite report.json from the checkpoint

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "augflow/config.hpp"
#include "augflow/errors.hpp"
#include "augflow/orchestrator.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iterations;
  std::string work_dir;
  bool dry_run = false;
  bool record = false;
  bool verbose = false;
  bool quiet = false;
};

augflow::RunConfig resolve_config(const Options& o) {
  auto cfg = augflow::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.max_iterations) cfg.max_iterations = *o.max_iterations;
  if (!o.work_dir.empty()) cfg.work_dir = o.work_dir;
  if (o.dry_run) cfg.dry_run = true;
  if (o.record) cfg.replay.record = true;
  return cfg;
}

augflow::PipelineState require_state(augflow::Orchestrator& orch) {
  auto state = orch.load_state();
  if (!state) throw augflow::Error("no checkpoint in " + orch.config().work_dir.string() + "; run `augflow finetune` first");
  return *state;
}

void print_summary(const nlohmann::json& report) {
  std::cout << "hook calls: " << report["hook_calls"] << ", iterations: " << report["completed_iterations"]
            << ", final model: " << report["final_model"].get<std::string>() << "\n";
  for (const auto& it : report["iterations"]) {
    std::cout << "  iteration " << it["iteration"] << ": errors train=" << it["error_counts"]["train"]
              << " val=" << it["error_counts"]["val"] << ", K=" << it["K"]
              << ", synthetic accepted=" << it["qc_stats"]["accepted_samples"]
              << ", dropped batches=" << it["qc_stats"]["dropped_batches"] << "\n";
  }
}

enum class Stage { evaluate, analyze, generate, quality };

void run_stage(augflow::Orchestrator& orch, Stage stage) {
  auto state = require_state(orch);
  auto ctx = orch.load_context(state.iteration + 1);
  switch (stage) {
    case Stage::evaluate:
      orch.stage_evaluate(state, ctx);
      std::cout << "iteration " << ctx.iteration << ": " << ctx.train_errors.size() << " training errors, "
                << ctx.val_errors.size() << " validation errors\n";
      break;
    case Stage::analyze:
      orch.stage_analyze(state, ctx);
      std::cout << "iteration " << ctx.iteration << ": K=" << (ctx.clustering ? ctx.clustering->clusters.k : 0)
                << ", " << ctx.strategies.cards.size() << " strategies\n";
      break;
    case Stage::generate:
      orch.stage_generate(state, ctx);
      std::cout << "iteration " << ctx.iteration << ": " << ctx.batches.size() << " batches, quota "
                << ctx.quota.total << "\n";
      break;
    case Stage::quality:
      orch.stage_quality(state, ctx);
      std::cout << "iteration " << ctx.iteration << ": " << ctx.qc.accepted_samples << " samples accepted, "
                << ctx.qc.dropped_batches << " batches dropped\n";
      break;
  }
  orch.checkpoint(state, &ctx);
}

void run_finetune(augflow::Orchestrator& orch) {
  auto state = orch.load_state();
  if (!state) {
    auto fresh = orch.initial_state();
    orch.initial_finetune(fresh);
    orch.checkpoint(fresh, nullptr);
    std::cout << "initial fine-tune: " << fresh.model_endpoint.model_id << "\n";
    return;
  }
  auto ctx = orch.load_context(state->iteration + 1);
  orch.stage_finetune(*state, ctx);
  state->iterations.push_back(ctx);
  orch.checkpoint(*state, &state->iterations.back());
  std::cout << "iteration " << ctx.iteration << " fine-tune: " << ctx.next_model << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluation-driven data augmentation for small language models"};
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("-c,--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Override the base seed");
  app.add_option("--max-iterations", o.max_iterations, "Override max_iterations")->check(CLI::NonNegativeNumber);
  app.add_option("--work-dir", o.work_dir, "Override work_dir");
  app.add_flag("--dry-run", o.dry_run, "Answer every model call from replay fixtures");
  app.add_flag("--record", o.record, "With --dry-run: forward misses to the configured providers and store them");
  app.add_flag("-v,--verbose", o.verbose, "Debug logging");
  app.add_flag("-q,--quiet", o.quiet, "Warnings and errors only");

  auto* run = app.add_subcommand("run", "Initial fine-tune followed by max_iterations iterations");
  auto* finetune = app.add_subcommand("finetune", "Initial fine-tune, or the model update of the pending iteration");
  auto* eval = app.add_subcommand("eval", "Evaluate the student on the training and validation sets");
  auto* analyze = app.add_subcommand("analyze", "Error analysis, clustering, categorisation and strategy drafting");
  auto* generate = app.add_subcommand("generate", "Plan quotas and generate the first attempt of every batch");
  auto* qc = app.add_subcommand("qc", "Quality gate with regeneration, then write the merged training set");
  auto* report = app.add_subcommand("report", "Write report.json from the checkpoint");

  CLI11_PARSE(app, argc, argv);

  spdlog::set_level(o.verbose ? spdlog::level::debug : o.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    augflow::Orchestrator orch(resolve_config(o));
    if (run->parsed()) {
      print_summary(orch.run_pipeline());
    } else if (finetune->parsed()) {
      run_finetune(orch);
    } else if (eval->parsed()) {
      run_stage(orch, Stage::evaluate);
    } else if (analyze->parsed()) {
      run_stage(orch, Stage::analyze);
    } else if (generate->parsed()) {
      run_stage(orch, Stage::generate);
    } else if (qc->parsed()) {
      run_stage(orch, Stage::quality);
    } else if (report->parsed()) {
      print_summary(orch.emit_report(require_state(orch)));
    }
  } catch (const augflow::ConfigError& e) {
    spdlog::error("configuration: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
