#pragma once

// Shared domain types: patients, personas, transcripts, simulation settings,
// and the advice/factor records exchanged between the safeguard and the
// analyst. Everything here is an immutable value object; instances are safe
// to copy and share across threads.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mindbench/errors.hpp"
#include "mindbench/util.hpp"

namespace mindbench {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Disorders and questionnaires

enum class DisorderType { Depression, Delusion, Psychosis };

inline std::string_view to_string(DisorderType d) {
  switch (d) {
    case DisorderType::Depression: return "depression";
    case DisorderType::Delusion: return "delusion";
    case DisorderType::Psychosis: return "psychosis";
  }
  throw ValidationError("invalid disorder variant");
}

inline DisorderType disorder_from_string(std::string_view s) {
  if (s == "depression") return DisorderType::Depression;
  if (s == "delusion") return DisorderType::Delusion;
  if (s == "psychosis") return DisorderType::Psychosis;
  throw ValidationError("unknown disorder: " + std::string(s));
}

// Each disorder maps to exactly one default instrument.
inline std::string default_questionnaire(DisorderType d) {
  switch (d) {
    case DisorderType::Depression: return "phq9";
    case DisorderType::Delusion: return "pdi21";
    case DisorderType::Psychosis: return "panss-sr";
  }
  throw ValidationError("invalid disorder variant");
}

// ---------------------------------------------------------------------------
// Patient cognitive model and profile

struct CognitiveModel {
  std::vector<std::string> relevant_history;
  std::vector<std::string> core_beliefs;
  std::vector<std::string> intermediate_beliefs;
  std::vector<std::string> coping_strategies;
  std::string situation;
  std::vector<std::string> automatic_thoughts;
  std::vector<std::string> emotions;
  std::vector<std::string> behaviors;

  bool operator==(const CognitiveModel&) const = default;
};

struct PatientProfile {
  std::string id;
  DisorderType disorder = DisorderType::Depression;
  CognitiveModel cognitive_model;
  std::vector<std::string> symptom_notes;
  std::vector<std::string> history_notes;

  bool operator==(const PatientProfile&) const = default;
};

struct CharacterPersona {
  std::string id;
  std::string name;
  std::string persona_prompt;  // system-prompt body, never mutated by advice
  std::string style_tag;       // opaque label, e.g. "Meow" or "Roar"

  bool operator==(const CharacterPersona&) const = default;
};

namespace detail {
inline void require_nonblank(const std::vector<std::string>& xs, const char* field) {
  for (const auto& x : xs)
    if (trim(x).empty()) throw ValidationError(std::string(field) + " contains blank entry");
}
}  // namespace detail

// Returns the profile unchanged when every invariant holds; throws
// ValidationError naming the first violated invariant otherwise.
inline const PatientProfile& validate_profile(const PatientProfile& p) {
  if (trim(p.id).empty()) throw ValidationError("profile id empty");
  const auto& cm = p.cognitive_model;
  if (cm.core_beliefs.empty()) throw ValidationError("core_beliefs empty");
  if (cm.automatic_thoughts.empty()) throw ValidationError("automatic_thoughts empty");
  if (cm.emotions.empty()) throw ValidationError("emotions empty");
  detail::require_nonblank(cm.relevant_history, "relevant_history");
  detail::require_nonblank(cm.core_beliefs, "core_beliefs");
  detail::require_nonblank(cm.intermediate_beliefs, "intermediate_beliefs");
  detail::require_nonblank(cm.coping_strategies, "coping_strategies");
  detail::require_nonblank(cm.automatic_thoughts, "automatic_thoughts");
  detail::require_nonblank(cm.emotions, "emotions");
  detail::require_nonblank(cm.behaviors, "behaviors");
  detail::require_nonblank(p.symptom_notes, "symptom_notes");
  detail::require_nonblank(p.history_notes, "history_notes");
  return p;
}

// Validates each profile and the cross-profile uniqueness of ids.
inline const std::vector<PatientProfile>& validate_profiles(
    const std::vector<PatientProfile>& profiles) {
  std::set<std::string> seen;
  for (const auto& p : profiles) {
    validate_profile(p);
    if (!seen.insert(p.id).second) throw ValidationError("duplicate id: " + p.id);
  }
  return profiles;
}

inline const CharacterPersona& validate_persona(const CharacterPersona& c) {
  if (trim(c.id).empty()) throw ValidationError("persona id empty");
  if (trim(c.persona_prompt).empty()) throw ValidationError("persona_prompt empty");
  return c;
}

// ---------------------------------------------------------------------------
// Turns and transcripts

enum class Speaker { Patient, Character, Advice };

inline std::string_view to_string(Speaker s) {
  switch (s) {
    case Speaker::Patient: return "patient";
    case Speaker::Character: return "character";
    case Speaker::Advice: return "advice";
  }
  throw ValidationError("invalid speaker");
}

inline Speaker speaker_from_string(std::string_view s) {
  if (s == "patient") return Speaker::Patient;
  if (s == "character") return Speaker::Character;
  if (s == "advice") return Speaker::Advice;
  throw ValidationError("unknown speaker: " + std::string(s));
}

struct Provenance {
  std::string backend_id;
  double temperature = 0.0;
  double top_p = 1.0;
  int attempt_count = 1;
  std::optional<long> seed;  // present only when the backend accepted a seed

  bool operator==(const Provenance&) const = default;
};

struct Turn {
  int index = 0;
  Speaker speaker = Speaker::Patient;
  std::string content;
  Provenance provenance;
  std::optional<int> profile_version;  // advice turns only

  bool operator==(const Turn&) const = default;
};

struct TopicSpan {
  std::string topic;
  int start_round = 1;

  bool operator==(const TopicSpan&) const = default;
};

// One round = one patient turn followed by one character turn. Advice turns
// sit between rounds and belong to no round.
struct Transcript {
  std::string conversation_id;
  std::string patient_id;
  std::string character_id;
  std::vector<TopicSpan> topic_trace;
  std::vector<Turn> turns;
  int round_count = 0;

  bool operator==(const Transcript&) const = default;
};

inline const Transcript& validate_transcript(const Transcript& t) {
  if (trim(t.conversation_id).empty()) throw ValidationError("conversation_id empty");
  if (t.topic_trace.empty()) throw ValidationError("topic_trace empty");
  if (t.topic_trace.front().start_round != 1)
    throw ValidationError("topic_trace[0].start_round must be 1");
  std::set<std::string> topics;
  int prev = 0;
  for (const auto& span : t.topic_trace) {
    if (span.start_round <= prev) throw ValidationError("topic_trace start_rounds not increasing");
    if (span.start_round > t.round_count && t.round_count > 0)
      throw ValidationError("topic_trace start_round exceeds round_count");
    if (!topics.insert(span.topic).second)
      throw ValidationError("topic repeated in topic_trace: " + span.topic);
    prev = span.start_round;
  }
  int patient_turns = 0;
  int character_turns = 0;
  int expected_index = 0;
  bool awaiting_character = false;
  for (const auto& turn : t.turns) {
    if (turn.index != expected_index++) throw ValidationError("turn indices not consecutive");
    switch (turn.speaker) {
      case Speaker::Patient:
        if (awaiting_character) throw ValidationError("patient turn before character reply");
        ++patient_turns;
        awaiting_character = true;
        break;
      case Speaker::Character:
        if (!awaiting_character) throw ValidationError("character turn without patient turn");
        ++character_turns;
        awaiting_character = false;
        break;
      case Speaker::Advice:
        if (awaiting_character) throw ValidationError("advice turn splits a round");
        if (!turn.profile_version.has_value())
          throw ValidationError("advice turn missing profile_version");
        break;
    }
    if (turn.speaker != Speaker::Advice && turn.profile_version.has_value())
      throw ValidationError("profile_version on non-advice turn");
  }
  if (awaiting_character) throw ValidationError("transcript ends mid-round");
  if (patient_turns != t.round_count || character_turns != t.round_count)
    throw ValidationError("round_count does not match turn pairs");
  return t;
}

// Incrementally assembles a transcript while enforcing the round structure.
class TranscriptBuilder {
 public:
  TranscriptBuilder(std::string conversation_id, std::string patient_id,
                    std::string character_id, std::string initial_topic) {
    t_.conversation_id = std::move(conversation_id);
    t_.patient_id = std::move(patient_id);
    t_.character_id = std::move(character_id);
    t_.topic_trace.push_back({std::move(initial_topic), 1});
  }

  void add_patient_turn(std::string content, Provenance prov) {
    if (awaiting_character_) throw ValidationError("patient turn before character reply");
    push(Speaker::Patient, std::move(content), std::move(prov), std::nullopt);
    awaiting_character_ = true;
  }

  void add_character_turn(std::string content, Provenance prov) {
    if (!awaiting_character_) throw ValidationError("character turn without patient turn");
    push(Speaker::Character, std::move(content), std::move(prov), std::nullopt);
    awaiting_character_ = false;
    ++t_.round_count;
  }

  void add_advice_turn(std::string content, Provenance prov, int profile_version) {
    if (awaiting_character_) throw ValidationError("advice turn splits a round");
    push(Speaker::Advice, std::move(content), std::move(prov), profile_version);
  }

  // Records a topic switch taking effect on the next round.
  void switch_topic(std::string topic) {
    if (awaiting_character_) throw ValidationError("topic switch splits a round");
    t_.topic_trace.push_back({std::move(topic), t_.round_count + 1});
  }

  int completed_rounds() const { return t_.round_count; }
  const Transcript& view() const { return t_; }

  Transcript finish() && {
    validate_transcript(t_);
    return std::move(t_);
  }

 private:
  void push(Speaker sp, std::string content, Provenance prov, std::optional<int> version) {
    Turn turn;
    turn.index = static_cast<int>(t_.turns.size());
    turn.speaker = sp;
    turn.content = std::move(content);
    turn.provenance = std::move(prov);
    turn.profile_version = version;
    t_.turns.push_back(std::move(turn));
  }

  Transcript t_;
  bool awaiting_character_ = false;
};

// Round number a turn belongs to (1-based); advice turns return 0.
inline int round_of_turn(const Transcript& t, std::size_t turn_index) {
  int patient_seen = 0;
  for (std::size_t i = 0; i <= turn_index && i < t.turns.size(); ++i) {
    if (t.turns[i].speaker == Speaker::Patient) ++patient_seen;
  }
  return t.turns[turn_index].speaker == Speaker::Advice ? 0 : patient_seen;
}

// Plain-text rendering of the patient/character dialogue. Advice turns are
// interventions delivered to the character agent, not part of what the
// patient saw, so they are excluded. This rendering is also what context
// digests are computed over.
inline std::string render_dialogue(const Transcript& t, int from_round = 1,
                                   int to_round = -1) {
  std::string out;
  int round = 0;
  for (const auto& turn : t.turns) {
    if (turn.speaker == Speaker::Advice) continue;
    if (turn.speaker == Speaker::Patient) ++round;
    if (round < from_round) continue;
    if (to_round >= 0 && round > to_round) break;
    out += (turn.speaker == Speaker::Patient) ? "Patient: " : "Character: ";
    out += turn.content;
    out += '\n';
  }
  return out;
}

inline std::string transcript_digest(const Transcript& t) {
  return fnv1a64_hex(render_dialogue(t));
}

// ---------------------------------------------------------------------------
// Advice and analyst factors (shared between safeguard, agents and pipeline)

struct ModuleOutputs {
  std::string emotion;
  std::string thought;
  std::string dialog;

  bool operator==(const ModuleOutputs&) const = default;
};

struct Advice {
  std::string text;
  ModuleOutputs module_outputs;
  int profile_version = 0;
  int fired_after_round = 0;

  bool operator==(const Advice&) const = default;
};

struct Factor {
  std::string description;
  std::vector<std::string> evidence_quotes;
  std::string case_ref;

  bool operator==(const Factor&) const = default;
};

// ---------------------------------------------------------------------------
// Simulation configuration

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 512;

  bool operator==(const SamplingParams&) const = default;
};

struct SimulationConfig {
  int conversations_per_patient = 8;
  int rounds_per_conversation = 10;
  int dm_activation_round = 3;
  int dm_cooldown_rounds = 3;
  int guard_cadence_rounds = 3;
  SamplingParams assessment_sampling{0.0, 1.0, 64};
  SamplingParams chat_sampling{1.2, 1.0, 512};
  int max_parse_retries = 3;

  bool operator==(const SimulationConfig&) const = default;
};

inline const SimulationConfig& validate_config(const SimulationConfig& c) {
  if (c.conversations_per_patient < 1) throw ValidationError("conversations_per_patient < 1");
  if (c.rounds_per_conversation < 1) throw ValidationError("rounds_per_conversation < 1");
  if (c.dm_activation_round < 1) throw ValidationError("dm_activation_round < 1");
  if (c.dm_cooldown_rounds < 1) throw ValidationError("dm_cooldown_rounds < 1");
  if (c.guard_cadence_rounds < 1) throw ValidationError("guard_cadence_rounds < 1");
  if (c.max_parse_retries < 1) throw ValidationError("max_parse_retries < 1");
  for (const auto* s : {&c.assessment_sampling, &c.chat_sampling}) {
    if (s->temperature < 0) throw ValidationError("temperature < 0");
    if (s->top_p <= 0 || s->top_p > 1) throw ValidationError("top_p outside (0,1]");
    if (s->max_tokens < 1) throw ValidationError("max_tokens < 1");
  }
  return c;
}

// ---------------------------------------------------------------------------
// JSON serialization

inline void to_json(json& j, const DisorderType& d) { j = std::string(to_string(d)); }
inline void from_json(const json& j, DisorderType& d) {
  d = disorder_from_string(j.get<std::string>());
}

inline void to_json(json& j, const CognitiveModel& m) {
  j = json{{"relevant_history", m.relevant_history},
           {"core_beliefs", m.core_beliefs},
           {"intermediate_beliefs", m.intermediate_beliefs},
           {"coping_strategies", m.coping_strategies},
           {"situation", m.situation},
           {"automatic_thoughts", m.automatic_thoughts},
           {"emotions", m.emotions},
           {"behaviors", m.behaviors}};
}
inline void from_json(const json& j, CognitiveModel& m) {
  j.at("relevant_history").get_to(m.relevant_history);
  j.at("core_beliefs").get_to(m.core_beliefs);
  j.at("intermediate_beliefs").get_to(m.intermediate_beliefs);
  j.at("coping_strategies").get_to(m.coping_strategies);
  j.at("situation").get_to(m.situation);
  j.at("automatic_thoughts").get_to(m.automatic_thoughts);
  j.at("emotions").get_to(m.emotions);
  j.at("behaviors").get_to(m.behaviors);
}

inline void to_json(json& j, const PatientProfile& p) {
  j = json{{"id", p.id},
           {"disorder", p.disorder},
           {"cognitive_model", p.cognitive_model},
           {"symptom_notes", p.symptom_notes},
           {"history_notes", p.history_notes}};
}
inline void from_json(const json& j, PatientProfile& p) {
  j.at("id").get_to(p.id);
  j.at("disorder").get_to(p.disorder);
  j.at("cognitive_model").get_to(p.cognitive_model);
  p.symptom_notes = j.value("symptom_notes", std::vector<std::string>{});
  p.history_notes = j.value("history_notes", std::vector<std::string>{});
}

inline void to_json(json& j, const CharacterPersona& c) {
  j = json{{"id", c.id},
           {"name", c.name},
           {"persona_prompt", c.persona_prompt},
           {"style_tag", c.style_tag}};
}
inline void from_json(const json& j, CharacterPersona& c) {
  j.at("id").get_to(c.id);
  j.at("name").get_to(c.name);
  j.at("persona_prompt").get_to(c.persona_prompt);
  c.style_tag = j.value("style_tag", std::string{});
}

inline void to_json(json& j, const Provenance& p) {
  j = json{{"backend_id", p.backend_id},
           {"temperature", p.temperature},
           {"top_p", p.top_p},
           {"attempt_count", p.attempt_count}};
  if (p.seed) j["seed"] = *p.seed;
}
inline void from_json(const json& j, Provenance& p) {
  j.at("backend_id").get_to(p.backend_id);
  j.at("temperature").get_to(p.temperature);
  j.at("top_p").get_to(p.top_p);
  j.at("attempt_count").get_to(p.attempt_count);
  if (j.contains("seed")) p.seed = j.at("seed").get<long>();
}

inline void to_json(json& j, const Turn& t) {
  j = json{{"index", t.index},
           {"speaker", std::string(to_string(t.speaker))},
           {"content", t.content},
           {"provenance", t.provenance}};
  if (t.profile_version) j["profile_version"] = *t.profile_version;
}
inline void from_json(const json& j, Turn& t) {
  j.at("index").get_to(t.index);
  t.speaker = speaker_from_string(j.at("speaker").get<std::string>());
  j.at("content").get_to(t.content);
  j.at("provenance").get_to(t.provenance);
  if (j.contains("profile_version")) t.profile_version = j.at("profile_version").get<int>();
}

inline void to_json(json& j, const TopicSpan& s) {
  j = json{{"topic", s.topic}, {"start_round", s.start_round}};
}
inline void from_json(const json& j, TopicSpan& s) {
  j.at("topic").get_to(s.topic);
  j.at("start_round").get_to(s.start_round);
}

inline void to_json(json& j, const ModuleOutputs& m) {
  j = json{{"emotion", m.emotion}, {"thought", m.thought}, {"dialog", m.dialog}};
}
inline void from_json(const json& j, ModuleOutputs& m) {
  j.at("emotion").get_to(m.emotion);
  j.at("thought").get_to(m.thought);
  j.at("dialog").get_to(m.dialog);
}

inline void to_json(json& j, const Advice& a) {
  j = json{{"text", a.text},
           {"module_outputs", a.module_outputs},
           {"profile_version", a.profile_version},
           {"fired_after_round", a.fired_after_round}};
}
inline void from_json(const json& j, Advice& a) {
  j.at("text").get_to(a.text);
  j.at("module_outputs").get_to(a.module_outputs);
  j.at("profile_version").get_to(a.profile_version);
  j.at("fired_after_round").get_to(a.fired_after_round);
}

inline void to_json(json& j, const Factor& f) {
  j = json{{"description", f.description},
           {"evidence", f.evidence_quotes},
           {"case_ref", f.case_ref}};
}
inline void from_json(const json& j, Factor& f) {
  j.at("description").get_to(f.description);
  j.at("evidence").get_to(f.evidence_quotes);
  f.case_ref = j.value("case_ref", std::string{});
}

inline void to_json(json& j, const SamplingParams& s) {
  j = json{{"temperature", s.temperature}, {"top_p", s.top_p}, {"max_tokens", s.max_tokens}};
}
inline void from_json(const json& j, SamplingParams& s) {
  s.temperature = j.value("temperature", s.temperature);
  s.top_p = j.value("top_p", s.top_p);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
}

inline void to_json(json& j, const SimulationConfig& c) {
  j = json{{"conversations_per_patient", c.conversations_per_patient},
           {"rounds_per_conversation", c.rounds_per_conversation},
           {"dm_activation_round", c.dm_activation_round},
           {"dm_cooldown_rounds", c.dm_cooldown_rounds},
           {"guard_cadence_rounds", c.guard_cadence_rounds},
           {"assessment_sampling", c.assessment_sampling},
           {"chat_sampling", c.chat_sampling},
           {"max_parse_retries", c.max_parse_retries}};
}
inline void from_json(const json& j, SimulationConfig& c) {
  c.conversations_per_patient = j.value("conversations_per_patient", c.conversations_per_patient);
  c.rounds_per_conversation = j.value("rounds_per_conversation", c.rounds_per_conversation);
  c.dm_activation_round = j.value("dm_activation_round", c.dm_activation_round);
  c.dm_cooldown_rounds = j.value("dm_cooldown_rounds", c.dm_cooldown_rounds);
  c.guard_cadence_rounds = j.value("guard_cadence_rounds", c.guard_cadence_rounds);
  if (j.contains("assessment_sampling")) j.at("assessment_sampling").get_to(c.assessment_sampling);
  if (j.contains("chat_sampling")) j.at("chat_sampling").get_to(c.chat_sampling);
  c.max_parse_retries = j.value("max_parse_retries", c.max_parse_retries);
}

// ---------------------------------------------------------------------------
// Transcript JSONL: one header line with conversation metadata, then one turn
// per line. Keys within each line are sorted, so the encoding is canonical.

inline std::string encode_transcript_jsonl(const Transcript& t) {
  json header{{"conversation_id", t.conversation_id},
              {"patient_id", t.patient_id},
              {"character_id", t.character_id},
              {"topic_trace", t.topic_trace},
              {"round_count", t.round_count}};
  std::string out = header.dump();
  out += '\n';
  for (const auto& turn : t.turns) {
    out += json(turn).dump();
    out += '\n';
  }
  return out;
}

inline Transcript decode_transcript_jsonl(std::string_view text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw ValidationError("empty transcript stream");
  Transcript t;
  json header = json::parse(lines[0]);
  header.at("conversation_id").get_to(t.conversation_id);
  header.at("patient_id").get_to(t.patient_id);
  header.at("character_id").get_to(t.character_id);
  header.at("topic_trace").get_to(t.topic_trace);
  header.at("round_count").get_to(t.round_count);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    t.turns.push_back(json::parse(lines[i]).get<Turn>());
  }
  validate_transcript(t);
  return t;
}

}  // namespace mindbench
