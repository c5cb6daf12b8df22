// cocot: benchmark harness for staged-prompting experiments on
// vision-language models. Subcommands: plan, run, report, convert-*,
// init-templates.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cocot/config.hpp"
#include "cocot/converters.hpp"
#include "cocot/http_transport.hpp"
#include "cocot/orchestrator.hpp"
#include "cocot/report.hpp"
#include "cocot/version.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string strategies;  // comma-separated override
  long sample_count = -1;
  unsigned long long seed = 0;
  std::string run_id;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file")->required();
  cmd->add_option("--strategies", opts.strategies,
                  "comma-separated strategy subset (default: config)");
  cmd->add_option("--sample", opts.sample_count, "per-dataset item subsample size");
  cmd->add_option("--seed", opts.seed, "subsample seed (with --sample)");
  cmd->add_option("--run-id", opts.run_id, "explicit run id for report directories");
}

cocot::ExperimentConfig effective_config(const CommonOpts& opts) {
  cocot::ExperimentConfig cfg = cocot::load_config(opts.config_path);
  if (!opts.strategies.empty()) {
    cfg.strategies.clear();
    for (const std::string& name : cocot::split(opts.strategies, ',')) {
      cfg.strategies.push_back(cocot::strategy_from_string(cocot::trim(name)));
    }
  }
  if (opts.sample_count >= 0) {
    cfg.sample = cocot::SampleSpec{static_cast<size_t>(opts.sample_count), opts.seed};
  }
  if (!opts.run_id.empty()) cfg.run_id = opts.run_id;
  cocot::validate_config(cfg);
  return cfg;
}

void print_plan(const cocot::Plan& plan) {
  for (const std::string& warning : plan.warnings) {
    std::fprintf(stderr, "warning: %s\n", warning.c_str());
  }
  for (const std::string& name : plan.dataset_order) {
    size_t cells = 0;
    for (const auto& cell : plan.cells) cells += cell.dataset == name ? 1 : 0;
    std::printf("dataset %-24s items=%-5zu cells=%zu\n", name.c_str(),
                plan.items.at(name).size(), cells);
  }
  std::printf("total cells: %zu\n", plan.cells.size());
}

int cmd_plan(const CommonOpts& opts) {
  cocot::ExperimentConfig cfg = effective_config(opts);
  cocot::Runner runner(cfg, std::make_shared<cocot::HttplibTransport>());
  print_plan(runner.plan());
  return 0;
}

int cmd_run(const CommonOpts& opts, bool resume, bool dry_run, long stop_after) {
  cocot::ExperimentConfig cfg = effective_config(opts);
  cocot::Runner runner(cfg, std::make_shared<cocot::HttplibTransport>());
  cocot::Plan plan = runner.plan();
  print_plan(plan);
  if (dry_run) {
    std::printf("dry run: no provider calls made\n");
    return 0;
  }
  cocot::RunOptions run_opts;
  run_opts.resume = resume;
  if (stop_after > 0) run_opts.stop_after_cells = static_cast<size_t>(stop_after);
  cocot::RunLedger ledger = runner.run(plan, run_opts);

  size_t failed = ledger.failed();
  std::printf("cells done=%zu failed=%zu pending=%zu (cache: %s)\n", ledger.done(), failed,
              ledger.count(cocot::CellStatus::Pending), cfg.cache_dir.string().c_str());
  if (failed > 0) {
    size_t shown = 0;
    for (const auto& [digest, outcome] : ledger.outcomes) {
      if (outcome.status != cocot::CellStatus::Failed) continue;
      std::fprintf(stderr, "failed cell %s: %s\n", digest.substr(0, 12).c_str(),
                   outcome.error.c_str());
      if (++shown >= 10) {
        std::fprintf(stderr, "... and %zu more\n", failed - shown);
        break;
      }
    }
  }
  return failed > 0 ? 1 : 0;
}

int cmd_report(const CommonOpts& opts) {
  cocot::ExperimentConfig cfg = effective_config(opts);
  cocot::Runner runner(cfg, std::make_shared<cocot::HttplibTransport>());
  cocot::Plan plan = runner.plan();
  cocot::CollectedResults collected = cocot::collect_results(plan, runner);
  cocot::ReportBundle bundle = cocot::build_report(plan, runner, collected);
  std::filesystem::path run_dir = cocot::write_reports(bundle, cfg.output_dir);
  std::printf("report written to %s (missing cells: %zu)\n", run_dir.string().c_str(),
              collected.missing_cells);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"staged-prompting benchmark harness for vision-language models"};
  app.set_version_flag("--version", cocot::kHarnessVersion);
  app.require_subcommand(1);

  CommonOpts opts;
  bool resume = false;
  bool dry_run = false;
  long stop_after = 0;

  CLI::App* plan_cmd = app.add_subcommand("plan", "enumerate the experiment grid");
  add_common(plan_cmd, opts);

  CLI::App* run_cmd = app.add_subcommand("run", "execute pending cells");
  add_common(run_cmd, opts);
  run_cmd->add_flag("--resume", resume, "reuse cached transcripts, execute only missing cells");
  run_cmd->add_flag("--dry-run", dry_run, "print the plan without calling providers");
  run_cmd->add_option("--stop-after", stop_after, "stop after N pending cells (testing aid)");

  CLI::App* report_cmd = app.add_subcommand("report", "judge cached transcripts and emit tables");
  add_common(report_cmd, opts);

  std::string in_path, out_path, dir_path;
  CLI::App* cv = app.add_subcommand("convert-vague", "native intent-task JSONL -> canonical");
  cv->add_option("--input", in_path, "native JSONL")->required();
  cv->add_option("--output", out_path, "canonical JSONL destination")->required();
  CLI::App* cm = app.add_subcommand("convert-m3cot", "native multi-choice JSONL -> canonical");
  cm->add_option("--input", in_path, "native JSONL")->required();
  cm->add_option("--output", out_path, "canonical JSONL destination")->required();
  CLI::App* cg = app.add_subcommand("convert-vlguard", "native safety JSONL -> canonical");
  cg->add_option("--input", in_path, "native JSONL")->required();
  cg->add_option("--output", out_path, "canonical JSONL destination")->required();

  CLI::App* tmpl = app.add_subcommand("init-templates", "write the built-in prompt templates");
  tmpl->add_option("--dir", dir_path, "destination directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan_cmd->parsed()) return cmd_plan(opts);
    if (run_cmd->parsed()) return cmd_run(opts, resume, dry_run, stop_after);
    if (report_cmd->parsed()) return cmd_report(opts);
    if (cv->parsed()) {
      std::printf("converted %zu items\n", cocot::convert_vague(in_path, out_path));
      return 0;
    }
    if (cm->parsed()) {
      std::printf("converted %zu items\n", cocot::convert_m3cot(in_path, out_path));
      return 0;
    }
    if (cg->parsed()) {
      std::printf("converted %zu items\n", cocot::convert_vlguard(in_path, out_path));
      return 0;
    }
    if (tmpl->parsed()) {
      cocot::PromptRegistry::builtin().write_dir(dir_path);
      std::printf("templates written to %s\n", dir_path.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
