/**
 * SPDX-License-Identifier: Apache-2.0
 */

// Command-line front end: simulate / analyze / verify / report / score / run.

#include <CLI11.hpp>

#include <attnet/attnet.hpp>

#include <iostream>
#include <string_view>

namespace {

  void add_param_flags(CLI::App *cmd, attnet::ParamOverrides &o) {
    cmd->add_option("--c1-slack", o.c1_slack, "C1 slack factor (default from config, 0.9)");
    cmd->add_option("--c3-divisor", o.c3_divisor, "C3 divisor (default from config, 10)");
    cmd->add_option("--c4-sigma", o.c4_sigma, "C4 standard deviations (default from config, 2)");
    cmd->add_option("--knowledge-delay", o.knowledge_delay_slots,
                    "slots before the observer learns subscription changes");
  }

  void print_summary(const std::filesystem::path &run_dir, const std::string &section) {
    const auto summary = attnet::detail::read_summary(run_dir);
    if (summary.contains(section)) {
      std::cout << summary.at(section).dump(2) << '\n';
    }
  }

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Attestation-subnet gossip simulator and validator deanonymization toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_root = "runs";
  auto *simulate = app.add_subcommand("simulate", "simulate a scenario and write its logs");
  simulate->add_option("config", config_path, "scenario config (JSON)")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out_root, "parent directory for run directories");

  std::string run_dir;
  attnet::ParamOverrides overrides;
  auto *analyze = app.add_subcommand("analyze", "deanonymize peers from a run directory's logs");
  analyze->add_option("run-dir", run_dir)->required()->check(CLI::ExistingDirectory);
  add_param_flags(analyze, overrides);

  std::string labels_path;
  auto *verify = app.add_subcommand("verify", "consistency, uniqueness and cross-observer checks");
  verify->add_option("run-dir", run_dir)->required()->check(CLI::ExistingDirectory);
  verify->add_option("--labels", labels_path, "labels file")->required()->check(CLI::ExistingFile);

  auto *report = app.add_subcommand("report", "validators-per-peer CDF and category counts");
  report->add_option("run-dir", run_dir)->required()->check(CLI::ExistingDirectory);

  auto *score = app.add_subcommand("score", "score reports against ground truth");
  score->add_option("run-dir", run_dir)->required()->check(CLI::ExistingDirectory);

  auto *run = app.add_subcommand("run", "simulate, analyze, verify, report and score in one go");
  run->add_option("config", config_path, "scenario config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_root, "parent directory for run directories");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      const auto config = attnet::load_config(config_path);
      std::cout << attnet::simulate(config, out_root).string() << '\n';
    } else if (*analyze) {
      attnet::analyze(run_dir, overrides);
      print_summary(run_dir, "analyze");
    } else if (*verify) {
      attnet::verify(run_dir, labels_path);
      print_summary(run_dir, "verify");
    } else if (*report) {
      attnet::report(run_dir);
      print_summary(run_dir, "report");
    } else if (*score) {
      attnet::score(run_dir);
      print_summary(run_dir, "score");
    } else if (*run) {
      const auto config = attnet::load_config(config_path);
      const auto dir = attnet::run_scenario(config, out_root);
      std::cout << dir.string() << '\n';
      print_summary(dir, "score");
    }
  } catch (const attnet::Error &e) {
    std::string_view msg = e.what();
    if (msg.starts_with(e.code() + ": ")) {
      msg.remove_prefix(e.code().size() + 2);
    }
    std::cerr << "error[" << e.code() << "]: " << msg << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
