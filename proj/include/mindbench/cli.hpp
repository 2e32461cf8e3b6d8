#pragma once

// Command-line entry point. Exit codes: 0 success, 1 validation/usage error,
// 2 runtime failure.

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mindbench/config.hpp"
#include "mindbench/replay.hpp"
#include "mindbench/report.hpp"
#include "mindbench/trainer.hpp"

namespace mindbench {

namespace cli_detail {

inline int cmd_eval_run(const std::string& config_path, std::ostream& out) {
  auto config = load_run_config(config_path);
  auto plan = build_plan(config);
  auto prompts = load_prompts(config);
  auto schemas = load_schemas_dir(config.data_dir / "schemas");

  auto run_id = config.run_id ? *config.run_id : ("run-" + utc_timestamp_compact());
  auto run_dir = config.output_dir / run_id;
  if (std::filesystem::exists(run_dir / "dataset.json"))
    throw ValidationError("run directory already holds a dataset: " + run_dir.string());

  RunStore store(run_dir);
  store.write_plan_bytes(plan_to_canonical_json(plan));
  store.write_schemas(schemas);

  SharedBackendProvider provider(make_backend_set(config));
  auto result =
      run_full_eval(plan, provider, schemas, &store, &prompts, config.parallel_cells);

  out << "run " << run_id << ": " << result.dataset.records.size() << " records";
  if (!result.failures.empty()) {
    out << ", " << result.failures.size() << " failed cells:";
    for (const auto& f : result.failures)
      out << "\n  " << f.patient_id << " x " << f.character_id << ": " << f.error;
  }
  out << "\nartifacts: " << run_dir.string() << "\n";
  return 0;
}

inline int cmd_eval_report(const std::string& run_dir, std::ostream& out) {
  RunStore store(run_dir);
  auto dataset = store.read_dataset();
  auto plan = store.read_plan();
  if (dataset.records.empty()) throw EmptyDataset("dataset has no records: " + run_dir);
  auto report_dir = store.dir() / "report";
  emit_report(dataset, plan, report_dir);
  out << render_rates_table(dataset, ReportIndex::from_plan(plan));
  out << "report files: " << report_dir.string() << "\n";
  return 0;
}

inline int cmd_guard_train(const std::string& config_path, std::ostream& out) {
  auto config = load_run_config(config_path);
  auto plan = build_plan(config);
  auto prompts = load_prompts(config);
  auto schemas = load_schemas_dir(config.data_dir / "schemas");

  auto run_id = config.run_id ? *config.run_id : ("train-" + utc_timestamp_compact());
  auto train_dir = config.output_dir / run_id;
  if (std::filesystem::exists(train_dir / "chain.json"))
    throw ValidationError("training directory already holds a chain: " + train_dir.string());

  SharedBackendProvider provider(make_backend_set(config));
  auto outcome = train(config.trainer, plan, provider, schemas, train_dir, prompts,
                       config.parallel_cells);

  out << "chain:";
  for (const auto& p : outcome.chain) out << " v" << p.version;
  out << (outcome.early_stop ? " (early stop)" : "") << "\n";
  for (const auto& it : outcome.iterations)
    out << "iteration " << it.iteration << ": profile v" << it.profile_version_used << ", "
        << it.flagged << " flagged case(s)\n";
  out << "artifacts: " << train_dir.string() << "\n";
  return 0;
}

inline int cmd_guard_inspect(const std::string& profile_dir, std::ostream& out) {
  std::vector<SafeguardProfile> profiles;
  if (!std::filesystem::is_directory(profile_dir))
    throw ValidationError("not a directory: " + profile_dir);
  for (const auto& entry : std::filesystem::directory_iterator(profile_dir)) {
    auto name = entry.path().filename().string();
    if (entry.path().extension() == ".json" && name.size() > 1 && name[0] == 'v')
      profiles.push_back(load_safeguard_profile(entry.path()));
  }
  if (profiles.empty()) throw ValidationError("no profile files (v*.json) in " + profile_dir);
  std::sort(profiles.begin(), profiles.end(),
            [](const auto& a, const auto& b) { return a.version < b.version; });
  for (const auto& p : profiles) {
    out << "v" << p.version;
    if (p.parent_version)
      out << " (parent v" << *p.parent_version << ")";
    out << ": " << p.factor_history.size() << " factor set(s)";
    std::size_t total = 0;
    for (const auto& set : p.factor_history) total += set.size();
    out << ", " << total << " factor(s) accumulated\n";
  }
  return 0;
}

inline int cmd_schemas_list(const std::string& schemas_dir, std::ostream& out) {
  auto schemas = load_schemas_dir(schemas_dir);
  std::vector<std::string> order = {"phq9", "pdi21", "panss-sr"};
  for (const auto& [id, schema] : schemas)
    if (std::find(order.begin(), order.end(), id) == order.end()) order.push_back(id);
  for (const auto& id : order) {
    auto it = schemas.find(id);
    if (it == schemas.end()) continue;
    const auto& s = it->second;
    out << s.id << ": " << s.items.size() << " items, total " << s.total_min << "-"
        << s.total_max;
    if (!s.subscales.empty()) {
      out << ", subscales:";
      for (const auto& [name, members] : s.subscales)
        out << " " << name << "(" << members.size() << ")";
    }
    out << "\n";
  }
  return 0;
}

inline int cmd_replay(const std::string& run_dir, std::ostream& out) {
  auto outcome = replay_run(run_dir);
  out << outcome.message << "\n";
  out << "replay artifacts: " << outcome.replay_dir.string() << "\n";
  if (!outcome.identical) throw Error("replay mismatch for " + run_dir);
  return 0;
}

inline const char* kSynopsis =
    "usage:\n"
    "  mindbench eval run <config.json>\n"
    "  mindbench eval report <run-dir>\n"
    "  mindbench guard train <config.json>\n"
    "  mindbench guard inspect <profile-dir>\n"
    "  mindbench schemas list [--dir <schemas-dir>]\n"
    "  mindbench replay <run-dir>\n";

}  // namespace cli_detail

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mental-safety evaluation harness for chat characters", "mindbench"};
  app.require_subcommand(1);

  std::string eval_run_config;
  std::string eval_report_dir;
  std::string train_config;
  std::string inspect_dir;
  std::string schemas_dir = "data/schemas";
  std::string replay_dir;

  auto* eval_cmd = app.add_subcommand("eval", "Run or report an evaluation");
  eval_cmd->require_subcommand(1);
  auto* eval_run_cmd = eval_cmd->add_subcommand("run", "Execute an evaluation run");
  eval_run_cmd->add_option("config", eval_run_config, "Run configuration file")->required();
  auto* eval_report_cmd = eval_cmd->add_subcommand("report", "Emit metrics for a finished run");
  eval_report_cmd->add_option("run_dir", eval_report_dir, "Run directory")->required();

  auto* guard_cmd = app.add_subcommand("guard", "Safeguard training and inspection");
  guard_cmd->require_subcommand(1);
  auto* guard_train_cmd = guard_cmd->add_subcommand("train", "Iteratively train the safeguard");
  guard_train_cmd->add_option("config", train_config, "Run configuration file")->required();
  auto* guard_inspect_cmd = guard_cmd->add_subcommand("inspect", "Show a profile version chain");
  guard_inspect_cmd->add_option("profile_dir", inspect_dir, "Directory of v*.json profiles")
      ->required();

  auto* schemas_cmd = app.add_subcommand("schemas", "Questionnaire schema utilities");
  schemas_cmd->require_subcommand(1);
  auto* schemas_list_cmd = schemas_cmd->add_subcommand("list", "List available instruments");
  schemas_list_cmd->add_option("--dir", schemas_dir, "Schema directory");

  auto* replay_cmd = app.add_subcommand("replay", "Re-execute a stored run deterministically");
  replay_cmd->add_option("run_dir", replay_dir, "Run directory")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << cli_detail::kSynopsis;
    return 1;
  }

  try {
    if (eval_run_cmd->parsed()) return cli_detail::cmd_eval_run(eval_run_config, out);
    if (eval_report_cmd->parsed()) return cli_detail::cmd_eval_report(eval_report_dir, out);
    if (guard_train_cmd->parsed()) return cli_detail::cmd_guard_train(train_config, out);
    if (guard_inspect_cmd->parsed()) return cli_detail::cmd_guard_inspect(inspect_dir, out);
    if (schemas_list_cmd->parsed()) return cli_detail::cmd_schemas_list(schemas_dir, out);
    if (replay_cmd->parsed()) return cli_detail::cmd_replay(replay_dir, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const EmptyDataset& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << cli_detail::kSynopsis;
  return 1;
}

}  // namespace mindbench
