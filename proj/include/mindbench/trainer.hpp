#pragma once

// Iterative feedback loop: evaluate with the current safeguard profile, flag
// deteriorated cases, extract contributing factors, regenerate the profile.
// Stops early when nothing is flagged.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mindbench/pipeline.hpp"

namespace mindbench {

using TranscriptLoader = std::function<Transcript(const std::string& transcript_ref)>;

// Cases whose score delta meets or exceeds the trainer threshold, paired with
// that delta. Only records of the configured questionnaire participate.
inline std::vector<FlaggedCase> flag_cases(const EvalDataset& dataset, const TrainerConfig& config,
                                           const TranscriptLoader& load_transcript) {
  validate_trainer_config(config);
  std::vector<FlaggedCase> flagged;
  for (const auto& record : dataset.records) {
    if (record.initial.questionnaire_id != config.questionnaire_id) continue;
    int d = record_delta(record);
    if (d >= config.flag_threshold)
      flagged.push_back({load_transcript(record.transcript_ref), d});
  }
  return flagged;
}

inline std::vector<FlaggedCase> flag_cases(const EvalDataset& dataset, const TrainerConfig& config,
                                           const RunStore& store) {
  return flag_cases(dataset, config,
                    [&store](const std::string& ref) { return store.read_transcript(ref); });
}

struct IterationSummary {
  int iteration = 0;
  int profile_version_used = 0;
  int flagged = 0;
};

inline void to_json(json& j, const IterationSummary& s) {
  j = json{{"iteration", s.iteration},
           {"profile_version_used", s.profile_version_used},
           {"flagged", s.flagged}};
}
inline void from_json(const json& j, IterationSummary& s) {
  j.at("iteration").get_to(s.iteration);
  j.at("profile_version_used").get_to(s.profile_version_used);
  j.at("flagged").get_to(s.flagged);
}

struct TrainOutcome {
  std::vector<SafeguardProfile> chain;
  std::vector<IterationSummary> iterations;
  bool early_stop = false;
};

namespace detail {

inline void persist_profile(const std::filesystem::path& dir, const SafeguardProfile& p) {
  write_file(dir / ("v" + std::to_string(p.version) + ".json"), json(p).dump(2) + "\n");
}

inline void persist_chain_manifest(const std::filesystem::path& dir, const TrainOutcome& outcome) {
  json versions = json::array();
  for (const auto& p : outcome.chain) versions.push_back(p.version);
  json manifest{{"versions", versions},
                {"iterations", outcome.iterations},
                {"early_stop", outcome.early_stop}};
  write_file(dir / "chain.json", manifest.dump(2) + "\n");
}

}  // namespace detail

// Runs the full train loop under `output_dir` (profiles/, chain.json, and one
// run directory per iteration). Partial chains are persisted before any error
// propagates.
inline TrainOutcome train(const TrainerConfig& trainer_config, EvalPlan plan,
                          BackendProvider& provider, const SchemaMap& schemas,
                          const std::filesystem::path& output_dir,
                          const PromptSet& prompts = PromptSet{}, int parallelism = 1) {
  validate_trainer_config(trainer_config);
  auto profiles_dir = output_dir / "profiles";
  std::filesystem::create_directories(profiles_dir);

  TrainOutcome outcome;
  outcome.chain.push_back(plan.guard ? *plan.guard : default_safeguard_profile());
  detail::persist_profile(profiles_dir, outcome.chain.front());
  detail::persist_chain_manifest(output_dir, outcome);

  try {
    for (int iteration = 1; iteration <= trainer_config.max_iterations; ++iteration) {
      const auto& current = outcome.chain.back();
      plan.guard = current;

      RunStore store(output_dir / ("iter" + std::to_string(iteration)));
      store.write_plan_bytes(plan_to_canonical_json(plan));
      store.write_schemas(schemas);
      auto result = run_full_eval(plan, provider, schemas, &store, &prompts, parallelism);

      auto flagged = flag_cases(result.dataset, trainer_config, store);
      outcome.iterations.push_back(
          {iteration, current.version, static_cast<int>(flagged.size())});
      if (flagged.empty()) {
        outcome.early_stop = true;
        detail::persist_chain_manifest(output_dir, outcome);
        break;
      }

      auto backends = provider.backends_for("trainer", "trainer");
      auto analyst = make_analyst_agent(backends.analyst, prompts);
      auto factors = analyst_extract_factors(flagged, analyst, plan.config, prompts);
      auto next = update_profile(outcome.chain, factors, *backends.guard, plan.config, prompts);
      detail::persist_profile(profiles_dir, next);
      outcome.chain.push_back(std::move(next));
      detail::persist_chain_manifest(output_dir, outcome);
    }
  } catch (...) {
    detail::persist_chain_manifest(output_dir, outcome);
    throw;
  }
  detail::persist_chain_manifest(output_dir, outcome);
  return outcome;
}

}  // namespace mindbench
