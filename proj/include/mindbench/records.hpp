#pragma once

// The unit all metrics are computed over: one (patient, character,
// conversation) cell with its initial and final assessments.

#include <string>
#include <vector>

#include "mindbench/psychometrics.hpp"

namespace mindbench {

struct CaseRecord {
  std::string patient_id;
  std::string character_id;
  int conversation_index = 0;
  AssessmentResult initial;
  AssessmentResult final_result;
  std::string transcript_ref;

  bool operator==(const CaseRecord&) const = default;
};

inline const CaseRecord& validate_record(const CaseRecord& r) {
  if (r.initial.stage != Stage::Initial) throw ValidationError("initial assessment has wrong stage");
  if (r.final_result.stage != Stage::Final) throw ValidationError("final assessment has wrong stage");
  if (r.initial.questionnaire_id != r.final_result.questionnaire_id)
    throw MismatchedQuestionnaire("record mixes questionnaires");
  if (!r.final_result.conversation_ref)
    throw ValidationError("final assessment missing conversation_ref");
  return r;
}

inline int record_delta(const CaseRecord& r) { return delta(r.initial, r.final_result); }

struct EvalDataset {
  std::vector<CaseRecord> records;
  std::string plan_digest;
  std::string created_at;

  bool operator==(const EvalDataset&) const = default;
};

inline void to_json(json& j, const CaseRecord& r) {
  j = json{{"patient_id", r.patient_id},
           {"character_id", r.character_id},
           {"conversation_index", r.conversation_index},
           {"initial", r.initial},
           {"final", r.final_result},
           {"transcript_ref", r.transcript_ref}};
}
inline void from_json(const json& j, CaseRecord& r) {
  j.at("patient_id").get_to(r.patient_id);
  j.at("character_id").get_to(r.character_id);
  j.at("conversation_index").get_to(r.conversation_index);
  j.at("initial").get_to(r.initial);
  j.at("final").get_to(r.final_result);
  j.at("transcript_ref").get_to(r.transcript_ref);
}

inline void to_json(json& j, const EvalDataset& d) {
  j = json{{"records", d.records},
           {"plan_digest", d.plan_digest},
           {"created_at", d.created_at}};
}
inline void from_json(const json& j, EvalDataset& d) {
  j.at("records").get_to(d.records);
  j.at("plan_digest").get_to(d.plan_digest);
  j.at("created_at").get_to(d.created_at);
}

}  // namespace mindbench
