#pragma once

// Evaluation pipeline: initialize and test, converse, retest, collect.
// Artifacts are persisted incrementally so a crashed or failed run still
// leaves everything it completed on disk.

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mindbench/agents.hpp"
#include "mindbench/dialog.hpp"
#include "mindbench/psychometrics.hpp"
#include "mindbench/records.hpp"
#include "mindbench/safeguard.hpp"

namespace mindbench {

// ---------------------------------------------------------------------------
// Plan

struct EvalPlan {
  std::vector<CharacterPersona> characters;
  std::vector<PatientProfile> patients;
  std::map<DisorderType, std::vector<std::string>> topics;
  SimulationConfig config;
  std::optional<SafeguardProfile> guard;
  std::string created_at;
};

inline const EvalPlan& validate_plan(const EvalPlan& plan) {
  validate_config(plan.config);
  validate_profiles(plan.patients);
  std::set<std::string> character_ids;
  for (const auto& c : plan.characters) {
    validate_persona(c);
    if (!character_ids.insert(c.id).second)
      throw ValidationError("duplicate character id: " + c.id);
  }
  std::set<DisorderType> disorders;
  for (const auto& p : plan.patients) disorders.insert(p.disorder);
  for (auto d : disorders) {
    auto it = plan.topics.find(d);
    if (it == plan.topics.end())
      throw ValidationError("no topic list for disorder " + std::string(to_string(d)));
    if (static_cast<int>(it->second.size()) < plan.config.conversations_per_patient)
      throw ValidationError("topic list for " + std::string(to_string(d)) + " has " +
                            std::to_string(it->second.size()) + " topics, need at least " +
                            std::to_string(plan.config.conversations_per_patient));
    std::set<std::string> seen;
    for (const auto& topic : it->second) {
      if (trim(topic).empty()) throw ValidationError("blank topic in list");
      if (!seen.insert(topic).second) throw ValidationError("duplicate topic: " + topic);
    }
  }
  if (plan.guard) validate_safeguard_profile(*plan.guard);
  return plan;
}

inline void to_json(json& j, const EvalPlan& plan) {
  json topics = json::object();
  for (const auto& [disorder, list] : plan.topics) topics[std::string(to_string(disorder))] = list;
  j = json{{"characters", plan.characters},
           {"patients", plan.patients},
           {"topics", topics},
           {"config", plan.config},
           {"created_at", plan.created_at}};
  if (plan.guard)
    j["guard"] = *plan.guard;
  else
    j["guard"] = nullptr;
}
inline void from_json(const json& j, EvalPlan& plan) {
  j.at("characters").get_to(plan.characters);
  j.at("patients").get_to(plan.patients);
  plan.topics.clear();
  for (const auto& [key, list] : j.at("topics").items())
    plan.topics[disorder_from_string(key)] = list.get<std::vector<std::string>>();
  j.at("config").get_to(plan.config);
  if (j.contains("guard") && !j.at("guard").is_null())
    plan.guard = j.at("guard").get<SafeguardProfile>();
  plan.created_at = j.value("created_at", std::string{});
}

// Canonical plan serialization; its digest ties datasets back to the plan.
inline std::string plan_to_canonical_json(const EvalPlan& plan) {
  return json(plan).dump(2) + "\n";
}

inline std::string conversation_id_for(const std::string& patient_id,
                                       const std::string& character_id, int index) {
  return sanitize_id(patient_id) + "--" + sanitize_id(character_id) + "--c" +
         std::to_string(index);
}

// ---------------------------------------------------------------------------
// Backends per role

struct BackendSet {
  BackendPtr patient;
  BackendPtr character;
  BackendPtr judge;
  BackendPtr guard;
  BackendPtr analyst;
};

// Hands each (patient, character) cell its backends. The default shares one
// set across the whole grid; replay supplies per-cell scripted backends.
class BackendProvider {
 public:
  virtual ~BackendProvider() = default;
  virtual BackendSet backends_for(const std::string& patient_id,
                                  const std::string& character_id) = 0;
};

class SharedBackendProvider final : public BackendProvider {
 public:
  explicit SharedBackendProvider(BackendSet set) : set_(std::move(set)) {}
  BackendSet backends_for(const std::string&, const std::string&) override { return set_; }

 private:
  BackendSet set_;
};

// ---------------------------------------------------------------------------
// Run directory

struct CellFailure {
  std::string patient_id;
  std::string character_id;
  std::string error;
};

inline void to_json(json& j, const CellFailure& f) {
  j = json{{"patient_id", f.patient_id}, {"character_id", f.character_id}, {"error", f.error}};
}
inline void from_json(const json& j, CellFailure& f) {
  j.at("patient_id").get_to(f.patient_id);
  j.at("character_id").get_to(f.character_id);
  j.at("error").get_to(f.error);
}

// Layout: plan.json, schemas.json, transcripts/<conversation-id>.jsonl,
// assessments.json, dataset.json, failures.json. Writes are serialized; files
// are rewritten whole so every flush is a consistent snapshot.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_ / "transcripts");
    auto assessments = dir_ / "assessments.json";
    if (std::filesystem::exists(assessments)) assessments_ = json::parse(read_file(assessments));
  }

  const std::filesystem::path& dir() const { return dir_; }

  void write_plan_bytes(const std::string& bytes) { write_file(dir_ / "plan.json", bytes); }
  std::string read_plan_bytes() const { return read_file(dir_ / "plan.json"); }
  EvalPlan read_plan() const { return json::parse(read_plan_bytes()).get<EvalPlan>(); }

  void write_schemas(const SchemaMap& schemas) {
    json j = json::object();
    for (const auto& [id, schema] : schemas) j[id] = schema;
    write_file(dir_ / "schemas.json", j.dump(2) + "\n");
  }
  SchemaMap read_schemas() const {
    SchemaMap out;
    json j = json::parse(read_file(dir_ / "schemas.json"));
    for (const auto& [id, schema] : j.items()) out[id] = schema.get<QuestionnaireSchema>();
    return out;
  }

  void write_transcript(const Transcript& t) {
    std::lock_guard lock(mutex_);
    write_file(dir_ / "transcripts" / (sanitize_id(t.conversation_id) + ".jsonl"),
               encode_transcript_jsonl(t));
  }
  Transcript read_transcript(const std::string& conversation_id) const {
    return decode_transcript_jsonl(
        read_file(dir_ / "transcripts" / (sanitize_id(conversation_id) + ".jsonl")));
  }
  bool has_transcript(const std::string& conversation_id) const {
    return std::filesystem::exists(dir_ / "transcripts" /
                                   (sanitize_id(conversation_id) + ".jsonl"));
  }

  // assessments.json is a nested map patient -> character -> index -> stage.
  void save_assessment(const std::string& patient_id, const std::string& character_id, int index,
                       const AssessmentResult& result) {
    std::lock_guard lock(mutex_);
    assessments_[patient_id][character_id][std::to_string(index)]
                [std::string(to_string(result.stage))] = result;
    write_file(dir_ / "assessments.json", assessments_.dump(2) + "\n");
  }
  std::optional<AssessmentResult> find_assessment(const std::string& patient_id,
                                                  const std::string& character_id, int index,
                                                  Stage stage) const {
    std::lock_guard lock(mutex_);
    const json* node = &assessments_;
    for (const auto& key : {patient_id, character_id, std::to_string(index),
                            std::string(to_string(stage))}) {
      if (!node->contains(key)) return std::nullopt;
      node = &node->at(key);
    }
    return node->get<AssessmentResult>();
  }

  void write_dataset(const EvalDataset& dataset) {
    std::lock_guard lock(mutex_);
    write_file(dir_ / "dataset.json", json(dataset).dump(2) + "\n");
  }
  std::string read_dataset_bytes() const { return read_file(dir_ / "dataset.json"); }
  EvalDataset read_dataset() const {
    return json::parse(read_dataset_bytes()).get<EvalDataset>();
  }

  void write_failures(const std::vector<CellFailure>& failures) {
    std::lock_guard lock(mutex_);
    write_file(dir_ / "failures.json", json(failures).dump(2) + "\n");
  }
  std::vector<CellFailure> read_failures() const {
    auto path = dir_ / "failures.json";
    if (!std::filesystem::exists(path)) return {};
    return json::parse(read_file(path)).get<std::vector<CellFailure>>();
  }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  json assessments_ = json::object();
};

// ---------------------------------------------------------------------------
// One conversation

struct ConversationSetup {
  const PatientAgent& patient;
  const CharacterAgent& character;
  std::string conversation_id;
  std::string initial_topic;
  std::vector<std::string> candidate_topics;
  const SimulationConfig& config;
  Backend& judge;
  GuardRuntime* guard = nullptr;  // optional
  const PromptSet& prompts;
};

// Runs exactly config.rounds_per_conversation rounds. After each completed
// round (except the last) the dialog manager may switch topics and the guard
// may attach advice to the next character turn. Backend failures abort with
// the round they occurred in.
inline Transcript run_conversation(const ConversationSetup& setup) {
  const auto& config = setup.config;
  TranscriptBuilder tb(setup.conversation_id, setup.patient.profile.id,
                       setup.character.persona.id, setup.initial_topic);
  TopicState state = make_topic_state(setup.initial_topic, setup.candidate_topics);
  std::optional<Advice> pending_advice;

  for (int round = 1; round <= config.rounds_per_conversation; ++round) {
    try {
      auto patient_req =
          build_patient_request(setup.patient, tb.view(), state.current_topic, config,
                                setup.prompts);
      auto patient_res = setup.patient.backend->complete(patient_req);
      tb.add_patient_turn(patient_res.content, record_provenance(patient_res, patient_req));

      auto character_req =
          build_character_request(setup.character, tb.view(), pending_advice, config);
      auto character_res = setup.character.backend->complete(character_req);
      tb.add_character_turn(character_res.content,
                            record_provenance(character_res, character_req));
      pending_advice.reset();

      state = after_round(state);
      if (round < config.rounds_per_conversation) {
        if (should_evaluate(state, config)) {
          auto decision =
              evaluate_topic(state, tb.view(), setup.judge, config, setup.prompts);
          if (decision.is_switch()) {
            state = apply_decision(state, decision);
            tb.switch_topic(decision.new_topic);
          }
        }
        if (setup.guard) {
          if (auto event = setup.guard->after_round(tb.view(), round, config)) {
            tb.add_advice_turn(event->advice.text, event->provenance,
                               event->advice.profile_version);
            pending_advice = event->advice;
          }
        }
      }
    } catch (const Error& e) {
      throw ConversationAborted(round, e.what());
    }
  }
  return std::move(tb).finish();
}

// ---------------------------------------------------------------------------
// One (patient, character) cell

struct CellSetup {
  PatientProfile patient;
  CharacterPersona character;
  std::vector<std::string> topics;
  SimulationConfig config;
  std::optional<SafeguardProfile> guard;
  BackendSet backends;
  const QuestionnaireSchema* schema = nullptr;
  RunStore* store = nullptr;  // optional persistence
  const PromptSet* prompts = nullptr;
};

// Eight-conversations-per-patient loop (configurable): initial test, run the
// conversation on topic i, final test with that transcript as context, emit a
// record. Records land in `out` as they complete, so callers keep partial
// results when a later conversation fails.
inline void run_patient_eval(const CellSetup& cell, std::vector<CaseRecord>& out) {
  PromptSet default_prompts;
  const PromptSet& prompts = cell.prompts ? *cell.prompts : default_prompts;
  if (cell.schema == nullptr) throw ValidationError("cell is missing its questionnaire schema");
  if (static_cast<int>(cell.topics.size()) < cell.config.conversations_per_patient)
    throw ValidationError("not enough topics for " + cell.patient.id);

  auto patient_agent = make_patient_agent(cell.patient, cell.backends.patient, prompts);
  auto character_agent = make_character_agent(cell.character, cell.backends.character);

  for (int i = 0; i < cell.config.conversations_per_patient; ++i) {
    auto conversation_id = conversation_id_for(cell.patient.id, cell.character.id, i);

    auto initial = administer(patient_agent, *cell.schema, std::nullopt, *cell.backends.patient,
                              cell.config, Stage::Initial);
    if (cell.store)
      cell.store->save_assessment(cell.patient.id, cell.character.id, i, initial);

    std::optional<GuardRuntime> guard;
    if (cell.guard)
      guard.emplace(*cell.guard, cell.backends.guard, cell.character, prompts);

    std::vector<std::string> candidates;
    for (std::size_t t = 0; t < cell.topics.size(); ++t)
      if (static_cast<int>(t) != i) candidates.push_back(cell.topics[t]);

    ConversationSetup setup{patient_agent,
                            character_agent,
                            conversation_id,
                            cell.topics[static_cast<std::size_t>(i)],
                            std::move(candidates),
                            cell.config,
                            *cell.backends.judge,
                            guard ? &*guard : nullptr,
                            prompts};
    auto transcript = run_conversation(setup);
    if (cell.store) cell.store->write_transcript(transcript);

    auto final_result = administer(patient_agent, *cell.schema, transcript,
                                   *cell.backends.patient, cell.config, Stage::Final,
                                   conversation_id);
    if (cell.store)
      cell.store->save_assessment(cell.patient.id, cell.character.id, i, final_result);

    CaseRecord record;
    record.patient_id = cell.patient.id;
    record.character_id = cell.character.id;
    record.conversation_index = i;
    record.initial = std::move(initial);
    record.final_result = std::move(final_result);
    record.transcript_ref = conversation_id;
    validate_record(record);
    out.push_back(std::move(record));
  }
}

// ---------------------------------------------------------------------------
// Full grid

struct EvalRunResult {
  EvalDataset dataset;
  std::vector<CellFailure> failures;
};

// Dataset provenance stamp. Normally derived from the plan; replay passes the
// stored run's stamp so reconstruction is exact.
struct RunStamp {
  std::string plan_digest;
  std::string created_at;
};

// Executes the character x patient grid. Cells fail soft: a failed cell is
// recorded and the run continues. With parallelism > 1 independent cells run
// concurrently; output order stays canonical either way.
inline EvalRunResult run_full_eval(const EvalPlan& plan, BackendProvider& provider,
                                   const SchemaMap& schemas, RunStore* store = nullptr,
                                   const PromptSet* prompts = nullptr, int parallelism = 1,
                                   const RunStamp* stamp = nullptr) {
  validate_plan(plan);
  for (const auto& patient : plan.patients) {
    auto qid = default_questionnaire(patient.disorder);
    if (!schemas.count(qid))
      throw ValidationError("schema not loaded: " + qid);
  }

  struct Cell {
    std::size_t character_index;
    std::size_t patient_index;
  };
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < plan.characters.size(); ++c)
    for (std::size_t p = 0; p < plan.patients.size(); ++p) cells.push_back({c, p});

  std::vector<std::vector<CaseRecord>> slots(cells.size());
  std::vector<std::optional<CellFailure>> failures(cells.size());
  std::vector<char> done(cells.size(), 0);

  std::string created_at =
      stamp ? stamp->created_at
            : (plan.created_at.empty() ? utc_timestamp() : plan.created_at);
  std::string plan_digest = stamp ? stamp->plan_digest : fnv1a64_hex(plan_to_canonical_json(plan));

  std::mutex flush_mutex;
  auto flush = [&]() {
    if (!store) return;
    std::lock_guard lock(flush_mutex);
    EvalDataset snapshot;
    snapshot.plan_digest = plan_digest;
    snapshot.created_at = created_at;
    std::vector<CellFailure> failed;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!done[i]) continue;
      snapshot.records.insert(snapshot.records.end(), slots[i].begin(), slots[i].end());
      if (failures[i]) failed.push_back(*failures[i]);
    }
    store->write_dataset(snapshot);
    store->write_failures(failed);
  };

  auto run_cell = [&](std::size_t index) {
    const auto& character = plan.characters[cells[index].character_index];
    const auto& patient = plan.patients[cells[index].patient_index];
    CellSetup cell{patient,
                   character,
                   plan.topics.at(patient.disorder),
                   plan.config,
                   plan.guard,
                   provider.backends_for(patient.id, character.id),
                   &schemas.at(default_questionnaire(patient.disorder)),
                   store,
                   prompts};
    try {
      run_patient_eval(cell, slots[index]);
    } catch (const std::exception& e) {
      failures[index] = CellFailure{patient.id, character.id, e.what()};
    }
    done[index] = 1;
    flush();
  };

  if (parallelism <= 1 || cells.size() <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        auto i = next.fetch_add(1);
        if (i >= cells.size()) return;
        run_cell(i);
      }
    };
    std::vector<std::thread> workers;
    auto n = std::min<std::size_t>(static_cast<std::size_t>(parallelism), cells.size());
    workers.reserve(n);
    for (std::size_t i = 0; i < n; ++i) workers.emplace_back(worker);
    for (auto& w : workers) w.join();
  }

  EvalRunResult result;
  result.dataset.plan_digest = plan_digest;
  result.dataset.created_at = created_at;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    result.dataset.records.insert(result.dataset.records.end(), slots[i].begin(),
                                  slots[i].end());
    if (failures[i]) result.failures.push_back(*failures[i]);
  }
  if (store) flush();
  return result;
}

}  // namespace mindbench
