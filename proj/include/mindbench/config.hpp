#pragma once

// Run configuration: one JSON file naming the plan, the backend for each
// agent role, the output directory, and overrides for simulation and trainer
// settings. Secrets never appear here; remote backends name an environment
// variable instead.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mindbench/pipeline.hpp"
#include "mindbench/trainer.hpp"

namespace mindbench {

inline const std::vector<std::string>& agent_roles() {
  static const std::vector<std::string> roles = {"patient", "character", "judge", "guard",
                                                 "analyst"};
  return roles;
}

struct RunConfig {
  std::filesystem::path plan_file;
  std::map<std::string, BackendDescriptor> backends;  // one per agent role
  std::filesystem::path output_dir = "runs";
  std::optional<std::string> run_id;
  std::filesystem::path data_dir = "data";  // schemas/, topics/, prompts/ live here
  std::optional<std::filesystem::path> guard_profile;
  SimulationConfig simulation;
  TrainerConfig trainer;
  int parallel_cells = 1;
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base,
                                     const std::filesystem::path& p) {
  return p.is_absolute() ? p : base / p;
}

}  // namespace detail

// Loads and validates a run configuration. Relative paths are resolved
// against the config file's own directory.
inline RunConfig load_run_config(const std::filesystem::path& config_path) {
  json j = json::parse(read_file(config_path));
  auto base = std::filesystem::absolute(config_path).parent_path();

  RunConfig config;
  if (!j.contains("plan")) throw ValidationError("config missing \"plan\"");
  config.plan_file = detail::resolve(base, j.at("plan").get<std::string>());
  if (!std::filesystem::exists(config.plan_file))
    throw ValidationError("plan file not found: " + config.plan_file.string());

  if (!j.contains("backends")) throw ValidationError("config missing \"backends\"");
  const auto& backends = j.at("backends");
  std::optional<BackendDescriptor> fallback;
  if (backends.contains("all")) fallback = backends.at("all").get<BackendDescriptor>();
  for (const auto& role : agent_roles()) {
    if (backends.contains(role))
      config.backends[role] = backends.at(role).get<BackendDescriptor>();
    else if (fallback)
      config.backends[role] = *fallback;
    else
      throw ValidationError("no backend configured for role \"" + role +
                            "\" (and no \"all\" fallback)");
  }

  config.output_dir = detail::resolve(base, j.value("output_dir", std::string("runs")));
  if (j.contains("run_id")) config.run_id = j.at("run_id").get<std::string>();
  config.data_dir = detail::resolve(base, j.value("data_dir", std::string("data")));
  if (j.contains("guard_profile"))
    config.guard_profile = detail::resolve(base, j.at("guard_profile").get<std::string>());
  if (j.contains("simulation")) j.at("simulation").get_to(config.simulation);
  validate_config(config.simulation);
  if (j.contains("trainer")) j.at("trainer").get_to(config.trainer);
  validate_trainer_config(config.trainer);
  config.parallel_cells = j.value("parallel_cells", 1);
  if (config.parallel_cells < 1) throw ValidationError("parallel_cells < 1");
  return config;
}

inline std::vector<std::string> load_topic_file(const std::filesystem::path& path) {
  std::vector<std::string> topics;
  for (const auto& line : split_lines(read_file(path))) {
    auto topic = trim(line);
    if (topic.empty() || topic[0] == '#') continue;
    topics.push_back(topic);
  }
  return topics;
}

// Assembles the evaluation plan: characters and patients from the plan file,
// topics from the plan file or the per-disorder topic files under data_dir.
inline EvalPlan build_plan(const RunConfig& config) {
  json j = json::parse(read_file(config.plan_file));
  EvalPlan plan;
  j.at("characters").get_to(plan.characters);
  j.at("patients").get_to(plan.patients);
  if (j.contains("topics")) {
    for (const auto& [key, list] : j.at("topics").items())
      plan.topics[disorder_from_string(key)] = list.get<std::vector<std::string>>();
  }
  std::set<DisorderType> disorders;
  for (const auto& p : plan.patients) disorders.insert(p.disorder);
  for (auto d : disorders) {
    if (plan.topics.count(d)) continue;
    auto path = config.data_dir / "topics" / (std::string(to_string(d)) + ".txt");
    if (!std::filesystem::exists(path))
      throw ValidationError("no topics for " + std::string(to_string(d)) +
                            " in plan and no topic file at " + path.string());
    plan.topics[d] = load_topic_file(path);
  }
  plan.config = config.simulation;
  if (config.guard_profile) plan.guard = load_safeguard_profile(*config.guard_profile);
  plan.created_at = utc_timestamp();
  validate_plan(plan);
  return plan;
}

inline BackendSet make_backend_set(const RunConfig& config) {
  BackendSet set;
  set.patient = make_backend(config.backends.at("patient"));
  set.character = make_backend(config.backends.at("character"));
  set.judge = make_backend(config.backends.at("judge"));
  set.guard = make_backend(config.backends.at("guard"));
  set.analyst = make_backend(config.backends.at("analyst"));
  return set;
}

inline PromptSet load_prompts(const RunConfig& config) {
  auto dir = config.data_dir / "prompts";
  if (std::filesystem::is_directory(dir)) return PromptSet::load_dir(dir);
  return PromptSet{};
}

}  // namespace mindbench
