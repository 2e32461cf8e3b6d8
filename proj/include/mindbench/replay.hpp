#pragma once

// Deterministic re-execution of a persisted run. Every response the original
// run consumed is reconstructed from the stored artifacts into per-cell
// scripted backends; the pipeline then runs unchanged and must reproduce
// dataset.json byte for byte.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mindbench/config.hpp"
#include "mindbench/pipeline.hpp"

namespace mindbench {

namespace detail {

inline std::string answer_text(const ItemValue& value) {
  if (std::holds_alternative<bool>(value)) return std::get<bool>(value) ? "yes" : "no";
  return std::to_string(std::get<int>(value));
}

// Assessment answers in administration order (schema item order).
inline void append_assessment_rules(std::vector<ScriptRule>& rules,
                                    const QuestionnaireSchema& schema,
                                    const AssessmentResult& result) {
  for (const auto& item : schema.items) {
    auto it = result.responses.find(item.item_id);
    if (it == result.responses.end()) return;  // incomplete artifact; stop here
    rules.push_back({std::nullopt, answer_text(it->second)});
  }
}

// Judge verdicts in consultation order, recovered by replaying the topic
// state machine against the recorded topic trace.
inline void append_judge_rules(std::vector<ScriptRule>& rules, const Transcript& transcript,
                               const std::vector<std::string>& candidates,
                               const SimulationConfig& config) {
  TopicState state = make_topic_state(transcript.topic_trace.front().topic, candidates);
  for (int round = 1; round < config.rounds_per_conversation; ++round) {
    state = after_round(state);
    if (!should_evaluate(state, config)) continue;
    const TopicSpan* switched = nullptr;
    for (const auto& span : transcript.topic_trace)
      if (span.start_round == round + 1) switched = &span;
    if (switched) {
      rules.push_back({std::nullopt, "RESOLVED\nNEXT: " + switched->topic});
      state = apply_decision(state, TopicDecision::switch_to(switched->topic));
    } else {
      rules.push_back({std::nullopt, "UNRESOLVED"});
    }
  }
}

}  // namespace detail

// Builds scripted backends for one cell at a time from the stored artifacts.
class ReplayProvider final : public BackendProvider {
 public:
  ReplayProvider(EvalPlan plan, SchemaMap schemas, const RunStore& store)
      : plan_(std::move(plan)), schemas_(std::move(schemas)), store_(store) {}

  BackendSet backends_for(const std::string& patient_id,
                          const std::string& character_id) override {
    std::vector<ScriptRule> patient_rules;
    std::vector<ScriptRule> character_rules;
    std::vector<ScriptRule> judge_rules;
    std::vector<ScriptRule> guard_rules;

    const PatientProfile* patient = nullptr;
    for (const auto& p : plan_.patients)
      if (p.id == patient_id) patient = &p;
    if (patient != nullptr) {
      const auto& schema = schemas_.at(default_questionnaire(patient->disorder));
      const auto& topics = plan_.topics.at(patient->disorder);
      for (int i = 0; i < plan_.config.conversations_per_patient; ++i) {
        auto conversation_id = conversation_id_for(patient_id, character_id, i);
        auto initial = store_.find_assessment(patient_id, character_id, i, Stage::Initial);
        if (!initial) break;  // original run failed here; replay will too
        detail::append_assessment_rules(patient_rules, schema, *initial);

        if (!store_.has_transcript(conversation_id)) break;
        auto transcript = store_.read_transcript(conversation_id);
        for (const auto& turn : transcript.turns) {
          if (turn.speaker == Speaker::Patient)
            patient_rules.push_back({std::nullopt, turn.content});
          else if (turn.speaker == Speaker::Character)
            character_rules.push_back({std::nullopt, turn.content});
          else {
            // One firing = three module reports plus the manager synthesis.
            guard_rules.push_back({std::nullopt, "(replayed module report)"});
            guard_rules.push_back({std::nullopt, "(replayed module report)"});
            guard_rules.push_back({std::nullopt, "(replayed module report)"});
            guard_rules.push_back({std::nullopt, turn.content});
          }
        }
        std::vector<std::string> candidates;
        for (std::size_t t = 0; t < topics.size(); ++t)
          if (static_cast<int>(t) != i) candidates.push_back(topics[t]);
        detail::append_judge_rules(judge_rules, transcript, candidates, plan_.config);

        auto final_result = store_.find_assessment(patient_id, character_id, i, Stage::Final);
        if (!final_result) break;
        detail::append_assessment_rules(patient_rules, schema, *final_result);
      }
    }

    BackendSet set;
    set.patient = make_backend(
        BackendDescriptor::scripted({std::move(patient_rules), std::nullopt}, "replay-patient"));
    set.character = make_backend(BackendDescriptor::scripted({std::move(character_rules), std::nullopt},
                                                             "replay-character"));
    set.judge = make_backend(
        BackendDescriptor::scripted({std::move(judge_rules), std::nullopt}, "replay-judge"));
    set.guard = make_backend(
        BackendDescriptor::scripted({std::move(guard_rules), std::nullopt}, "replay-guard"));
    set.analyst = make_backend(BackendDescriptor::scripted({{}, std::nullopt}, "replay-analyst"));
    return set;
  }

 private:
  EvalPlan plan_;
  SchemaMap schemas_;
  const RunStore& store_;
};

struct ReplayOutcome {
  bool identical = false;
  std::filesystem::path replay_dir;
  std::string message;
};

// Re-executes <run-dir> into <run-dir>/replay and compares the datasets.
inline ReplayOutcome replay_run(const std::filesystem::path& run_dir,
                                const PromptSet& prompts = PromptSet{}) {
  RunStore original(run_dir);
  auto plan_bytes = original.read_plan_bytes();
  auto plan = json::parse(plan_bytes).get<EvalPlan>();
  validate_plan(plan);
  auto schemas = original.read_schemas();
  auto original_dataset_bytes = original.read_dataset_bytes();
  auto original_dataset = json::parse(original_dataset_bytes).get<EvalDataset>();

  RunStamp stamp;
  stamp.plan_digest = fnv1a64_hex(plan_bytes);
  stamp.created_at = plan.created_at.empty() ? original_dataset.created_at : plan.created_at;

  auto replay_dir = run_dir / "replay";
  std::filesystem::remove_all(replay_dir);
  RunStore store(replay_dir);
  store.write_plan_bytes(plan_bytes);
  store.write_schemas(schemas);

  ReplayProvider provider(plan, schemas, original);
  run_full_eval(plan, provider, schemas, &store, &prompts, 1, &stamp);

  ReplayOutcome outcome;
  outcome.replay_dir = replay_dir;
  outcome.identical = store.read_dataset_bytes() == original_dataset_bytes;
  outcome.message = outcome.identical
                        ? "replayed dataset is byte-identical to the stored dataset"
                        : "replayed dataset DIFFERS from the stored dataset";
  return outcome;
}

}  // namespace mindbench
