// ampli: train, sweep and report on gradient-amplified runs.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ampli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Layer-selective gradient amplification experiments"};
  app.require_subcommand(1);

  ampli::TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Run one training configuration");
  train_cmd->add_option("--config", train.config_path, "JSON run config")->required();
  train_cmd->add_option("--seed", train.seed, "Override the run seed");
  train_cmd->add_option("--threshold", train.threshold, "Override the selection threshold");
  train_cmd->add_option("--case", train.selection_case, "Selection case: one or two");
  train_cmd->add_option("--measure", train.measure, "Ratio measure: g or gprime");

  ampli::SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a threshold sweep plus baselines");
  sweep_cmd->add_option("--config", sweep.config_path, "JSON run config with optional sweep section")->required();
  sweep_cmd->add_option("--thresholds", sweep.thresholds, "START:STOP:STEP, endpoints inclusive");
  sweep_cmd->add_option("--cases", sweep.cases, "Comma-separated cases (one,two)");
  sweep_cmd->add_option("--measures", sweep.measures, "Comma-separated measures (g,gprime)");
  sweep_cmd->add_option("--seeds", sweep.seeds, "Comma-separated seeds");
  sweep_cmd->add_option("--baseline-seeds", sweep.baseline_seeds, "Comma-separated baseline seeds (default: --seeds)");
  sweep_cmd->add_option("--jobs", sweep.jobs, "Concurrent runs")->default_val(1);

  ampli::ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Summarize run outputs into curve, ratio and timing tables");
  report_cmd->add_option("--in", report.in_dir, "Directory of run outputs")->required();
  report_cmd->add_option("--out", report.out_dir, "Directory for report tables")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ampli::kExitConfig;
  }

  if (train_cmd->parsed()) return ampli::cmd_train(train, std::cout, std::cerr);
  if (sweep_cmd->parsed()) return ampli::cmd_sweep(sweep, std::cout, std::cerr);
  return ampli::cmd_report(report, std::cout, std::cerr);
}
