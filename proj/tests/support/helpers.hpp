#pragma once

// Shared fixtures for the test suites: canned profiles, scripted backends,
// synthetic records, and the repo data directory.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mindbench/mindbench.hpp"

namespace testsupport {

using namespace mindbench;

inline std::filesystem::path repo_dir() { return MINDBENCH_REPO_DIR; }
inline std::filesystem::path data_dir() { return repo_dir() / "data"; }

inline SchemaMap& shipped_schemas() {
  static SchemaMap schemas = load_schemas_dir(data_dir() / "schemas");
  return schemas;
}

inline PatientProfile depression_profile(const std::string& id = "p-test") {
  PatientProfile p;
  p.id = id;
  p.disorder = DisorderType::Depression;
  p.cognitive_model.relevant_history = {"Lost their job last spring"};
  p.cognitive_model.core_beliefs = {"I am worthless", "I am unlovable"};
  p.cognitive_model.intermediate_beliefs = {"If I try, I will fail"};
  p.cognitive_model.coping_strategies = {"Stays in bed"};
  p.cognitive_model.situation = "A friend invited them to dinner";
  p.cognitive_model.automatic_thoughts = {"They pity me"};
  p.cognitive_model.emotions = {"sadness", "shame"};
  p.cognitive_model.behaviors = {"Ignores the invitation"};
  p.symptom_notes = {"Low mood"};
  p.history_notes = {"One prior episode"};
  return p;
}

inline CharacterPersona test_persona(const std::string& id = "c-test",
                                     const std::string& style = "Meow") {
  CharacterPersona c;
  c.id = id;
  c.name = "Vex";
  c.persona_prompt = "You are Vex, a sardonic trickster spirit. Stay in character.";
  c.style_tag = style;
  return c;
}

// Scripted backend answering the given responses in order, then the default.
inline BackendPtr scripted(std::vector<std::string> responses,
                           std::optional<std::string> fallback = std::nullopt,
                           std::string id = "scripted") {
  ScriptedBehavior behavior;
  for (auto& r : responses) behavior.rules.push_back({std::nullopt, std::move(r)});
  behavior.default_response = std::move(fallback);
  return make_backend(BackendDescriptor::scripted(std::move(behavior), std::move(id)));
}

inline BackendPtr scripted_default(std::string fallback, std::string id = "scripted") {
  return scripted({}, std::move(fallback), std::move(id));
}

// Minimal synthetic record: totals are what the metrics consume.
inline CaseRecord record_with_totals(const std::string& qid, int initial_total, int final_total,
                                     const std::string& patient = "p", const std::string& character = "c",
                                     int index = 0) {
  CaseRecord r;
  r.patient_id = patient;
  r.character_id = character;
  r.conversation_index = index;
  r.initial.questionnaire_id = qid;
  r.initial.stage = Stage::Initial;
  r.initial.total = initial_total;
  r.final_result.questionnaire_id = qid;
  r.final_result.stage = Stage::Final;
  r.final_result.total = final_total;
  r.final_result.conversation_ref = conversation_id_for(patient, character, index);
  r.transcript_ref = *r.final_result.conversation_ref;
  return r;
}

inline std::mt19937& rng() {
  static std::mt19937 gen(0x5eed5u);
  return gen;
}

}  // namespace testsupport
