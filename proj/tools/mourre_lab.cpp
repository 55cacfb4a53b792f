// mourre_lab: runs commutator-method diagnostics from a JSON config.
//
//   mourre_lab run --config exp.json [--out DIR] [--jobs N] [--format csv|json|both]
//   mourre_lab list-checks
//   mourre_lab reproduce DIR/report.json [--config exp.json] [--jobs N]
//
// Exit codes: 0 pass, 1 check failure, 2 config error, 3 reproduction mismatch.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mourre/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mourre-theory experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, format = "both", report_path, override_path;
  int jobs = 1;

  auto* run = app.add_subcommand("run", "execute the suite of a config");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "output directory (overrides output_dir)");
  run->add_option("--jobs", jobs, "worker threads for parallel checks")->check(CLI::Range(1, 256));
  run->add_option("--format", format, "csv, json or both")
      ->check(CLI::IsMember({"csv", "json", "both"}));

  auto* list = app.add_subcommand("list-checks", "print the check registry");

  auto* rep = app.add_subcommand("reproduce", "re-run a report and compare payloads");
  rep->add_option("report", report_path, "report.json written by run")->required();
  rep->add_option("--config", override_path, "run this config instead of the embedded one");
  rep->add_option("--jobs", jobs, "worker threads for parallel checks")->check(CLI::Range(1, 256));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*list) {
    mourre::list_checks(std::cout);
    return 0;
  }
  if (*run) {
    mourre::RunOptions opts;
    if (!out_dir.empty()) opts.out_dir = out_dir;
    opts.jobs = jobs;
    opts.format = mourre::output_format_from_string(format);
    return mourre::run_command(config_path, opts, std::cout, std::cerr);
  }
  std::optional<std::string> override_config;
  if (!override_path.empty()) override_config = override_path;
  return mourre::reproduce_command(report_path, override_config, jobs, std::cout, std::cerr);
}
