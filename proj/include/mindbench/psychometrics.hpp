#pragma once

// Clinical instruments: schema definitions, item-by-item administration
// against a patient agent, strict answer parsing, and scoring.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mindbench/agents.hpp"
#include "mindbench/core.hpp"
#include "mindbench/gateway.hpp"

namespace mindbench {

// ---------------------------------------------------------------------------
// Schemas

struct Item {
  std::string item_id;
  std::string prompt_text;
  bool binary = false;  // yes/no item; scored as 1/0
  int lo = 0;           // integer scale bounds (ignored for binary items)
  int hi = 0;

  bool operator==(const Item&) const = default;
};

struct QuestionnaireSchema {
  std::string id;
  std::vector<Item> items;
  std::map<std::string, std::vector<std::string>> subscales;
  int total_min = 0;
  int total_max = 0;

  bool operator==(const QuestionnaireSchema&) const = default;
};

inline const QuestionnaireSchema& validate_schema(const QuestionnaireSchema& s) {
  if (trim(s.id).empty()) throw ValidationError("schema id empty");
  if (s.items.empty()) throw ValidationError("schema has no items");
  std::set<std::string> ids;
  int computed_min = 0;
  int computed_max = 0;
  for (const auto& item : s.items) {
    if (trim(item.item_id).empty()) throw ValidationError("item id empty");
    if (trim(item.prompt_text).empty())
      throw ValidationError("item prompt empty: " + item.item_id);
    if (!ids.insert(item.item_id).second)
      throw ValidationError("duplicate item id: " + item.item_id);
    if (item.binary) {
      computed_max += 1;
    } else {
      if (item.lo > item.hi) throw ValidationError("item scale inverted: " + item.item_id);
      computed_min += item.lo;
      computed_max += item.hi;
    }
  }
  if (computed_min != s.total_min || computed_max != s.total_max)
    throw ValidationError("total_range does not match item scales for " + s.id);
  for (const auto& [name, members] : s.subscales) {
    if (members.empty()) throw ValidationError("empty subscale: " + name);
    for (const auto& member : members)
      if (!ids.count(member))
        throw ValidationError("subscale " + name + " references unknown item " + member);
  }

  auto require = [&](bool cond, const char* what) {
    if (!cond) throw ValidationError("schema " + s.id + ": " + what);
  };
  if (s.id == "phq9") {
    require(s.items.size() == 9, "expected 9 items");
    for (const auto& item : s.items)
      require(!item.binary && item.lo == 0 && item.hi == 3, "items must be scaled 0..3");
    require(s.total_min == 0 && s.total_max == 27, "total range must be 0..27");
  } else if (s.id == "pdi21") {
    require(s.items.size() == 21, "expected 21 items");
    for (const auto& item : s.items) require(item.binary, "items must be yes/no");
    require(s.total_min == 0 && s.total_max == 21, "total range must be 0..21");
  } else if (s.id == "panss-sr") {
    require(s.items.size() == 30, "expected 30 items");
    for (const auto& item : s.items)
      require(!item.binary && item.lo == 1 && item.hi == 7, "items must be scaled 1..7");
    require(s.subscales.count("positive") && s.subscales.at("positive").size() == 7,
            "positive subscale must have 7 items");
    require(s.subscales.count("negative") && s.subscales.at("negative").size() == 7,
            "negative subscale must have 7 items");
    require(s.subscales.count("general") && s.subscales.at("general").size() == 16,
            "general subscale must have 16 items");
    require(s.total_min == 30 && s.total_max == 210, "total range must be 30..210");
  }
  return s;
}

inline void to_json(json& j, const Item& item) {
  j = json{{"item_id", item.item_id}, {"prompt_text", item.prompt_text}};
  if (item.binary)
    j["scale"] = "yesno";
  else
    j["scale"] = json::array({item.lo, item.hi});
}
inline void from_json(const json& j, Item& item) {
  j.at("item_id").get_to(item.item_id);
  j.at("prompt_text").get_to(item.prompt_text);
  const auto& scale = j.at("scale");
  if (scale.is_string()) {
    if (scale.get<std::string>() != "yesno")
      throw ValidationError("unknown scale kind: " + scale.get<std::string>());
    item.binary = true;
  } else {
    item.binary = false;
    item.lo = scale.at(0).get<int>();
    item.hi = scale.at(1).get<int>();
  }
}

inline void to_json(json& j, const QuestionnaireSchema& s) {
  j = json{{"id", s.id},
           {"items", s.items},
           {"subscales", s.subscales},
           {"total_range", json::array({s.total_min, s.total_max})}};
}
inline void from_json(const json& j, QuestionnaireSchema& s) {
  j.at("id").get_to(s.id);
  j.at("items").get_to(s.items);
  s.subscales.clear();
  if (j.contains("subscales"))
    j.at("subscales").get_to(s.subscales);
  s.total_min = j.at("total_range").at(0).get<int>();
  s.total_max = j.at("total_range").at(1).get<int>();
}

inline QuestionnaireSchema load_schema(const std::filesystem::path& path) {
  auto schema = json::parse(read_file(path)).get<QuestionnaireSchema>();
  validate_schema(schema);
  return schema;
}

using SchemaMap = std::map<std::string, QuestionnaireSchema>;

inline SchemaMap load_schemas_dir(const std::filesystem::path& dir) {
  SchemaMap out;
  if (!std::filesystem::is_directory(dir))
    throw ValidationError("schema directory not found: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    auto schema = load_schema(entry.path());
    out[schema.id] = std::move(schema);
  }
  if (out.empty()) throw ValidationError("no schemas found in " + dir.string());
  return out;
}

// ---------------------------------------------------------------------------
// Responses and scoring

using ItemValue = std::variant<int, bool>;  // int for scaled items, bool for yes/no
using ResponseMap = std::map<std::string, ItemValue>;

struct ScoreResult {
  int total = 0;
  std::map<std::string, int> subscale_totals;

  bool operator==(const ScoreResult&) const = default;
};

namespace detail {

inline int item_points(const Item& item, const ItemValue& value) {
  if (item.binary) {
    if (!std::holds_alternative<bool>(value))
      throw OutOfScaleResponse(item.item_id, "expected yes/no for " + item.item_id);
    return std::get<bool>(value) ? 1 : 0;
  }
  if (!std::holds_alternative<int>(value))
    throw OutOfScaleResponse(item.item_id, "expected an integer for " + item.item_id);
  int v = std::get<int>(value);
  if (v < item.lo || v > item.hi)
    throw OutOfScaleResponse(item.item_id, "value " + std::to_string(v) + " outside [" +
                                               std::to_string(item.lo) + "," +
                                               std::to_string(item.hi) + "] for " + item.item_id);
  return v;
}

}  // namespace detail

// Pure scoring: sum of item values for scaled instruments, count of "yes"
// endorsements for binary ones. Subscale totals sum the listed items.
inline ScoreResult score(const QuestionnaireSchema& schema, const ResponseMap& responses) {
  std::map<std::string, int> points;
  for (const auto& item : schema.items) {
    auto it = responses.find(item.item_id);
    if (it == responses.end())
      throw IncompleteResponses("missing response for " + item.item_id);
    points[item.item_id] = detail::item_points(item, it->second);
  }
  if (responses.size() != schema.items.size()) {
    for (const auto& [id, value] : responses)
      if (!points.count(id)) throw IncompleteResponses("response for unknown item " + id);
  }
  ScoreResult result;
  for (const auto& [id, value] : points) result.total += value;
  for (const auto& [name, members] : schema.subscales) {
    int sum = 0;
    for (const auto& member : members) sum += points.at(member);
    result.subscale_totals[name] = sum;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Strict answer parsing

namespace detail {

// First standalone integer in the text, i.e. a digit run not embedded in a
// word or a decimal number.
inline std::optional<int> first_standalone_integer(const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    bool neg = text[i] == '-' && i + 1 < text.size() && digit_char(text[i + 1]);
    if (!digit_char(text[i]) && !neg) continue;
    std::size_t start = i;
    if (text[start] != '-' && start > 0 &&
        (word_char(text[start - 1]) || text[start - 1] == '.' || text[start - 1] == '-')) {
      while (i < text.size() && digit_char(text[i])) ++i;
      continue;  // embedded, e.g. "v2" or "1.5"
    }
    if (neg && start > 0 && (word_char(text[start - 1]) || text[start - 1] == '.')) {
      ++i;
      continue;
    }
    std::size_t end = neg ? start + 1 : start;
    while (end < text.size() && digit_char(text[end])) ++end;
    if (end < text.size()) {
      if (word_char(text[end])) {
        i = end;
        continue;
      }
      if (text[end] == '.' && end + 1 < text.size() && digit_char(text[end + 1])) {
        i = end + 1;
        while (i < text.size() && digit_char(text[i])) ++i;
        continue;  // decimal, not an integer answer
      }
    }
    try {
      return std::stoi(text.substr(start, end - start));
    } catch (const std::exception&) {
      i = end;  // overflow; keep scanning
    }
  }
  return std::nullopt;
}

inline std::optional<bool> first_yes_no(const std::string& text) {
  std::string word;
  auto check = [&]() -> std::optional<bool> {
    auto lowered = to_lower(word);
    if (lowered == "yes") return true;
    if (lowered == "no") return false;
    return std::nullopt;
  };
  for (char c : text) {
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
      word.push_back(c);
    } else if (!word.empty()) {
      if (auto v = check()) return v;
      word.clear();
    }
  }
  if (!word.empty())
    if (auto v = check()) return v;
  return std::nullopt;
}

}  // namespace detail

// Rigid parser for one item answer. Never accepts an out-of-scale value.
inline std::optional<ItemValue> parse_item_answer(const Item& item, const std::string& text) {
  if (item.binary) {
    if (auto v = detail::first_yes_no(text)) return ItemValue{*v};
    return std::nullopt;
  }
  if (auto v = detail::first_standalone_integer(text)) {
    if (*v >= item.lo && *v <= item.hi) return ItemValue{*v};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Assessment administration

enum class Stage { Initial, Final };

inline std::string_view to_string(Stage s) {
  return s == Stage::Initial ? "initial" : "final";
}
inline Stage stage_from_string(std::string_view s) {
  if (s == "initial") return Stage::Initial;
  if (s == "final") return Stage::Final;
  throw ValidationError("unknown stage: " + std::string(s));
}

struct AssessmentResult {
  std::string questionnaire_id;
  ResponseMap responses;
  int total = 0;
  std::map<std::string, int> subscale_totals;
  Stage stage = Stage::Initial;
  std::optional<std::string> conversation_ref;
  std::optional<std::string> context_digest;

  bool operator==(const AssessmentResult&) const = default;
};

inline const AssessmentResult& validate_assessment(const QuestionnaireSchema& schema,
                                                   const AssessmentResult& r) {
  if (r.questionnaire_id != schema.id) throw MismatchedQuestionnaire("assessment/schema mismatch");
  auto rescored = score(schema, r.responses);
  if (rescored.total != r.total || rescored.subscale_totals != r.subscale_totals)
    throw ValidationError("assessment totals inconsistent with responses");
  if (r.total < schema.total_min || r.total > schema.total_max)
    throw ValidationError("total outside instrument range");
  if (r.stage == Stage::Final && !r.conversation_ref)
    throw ValidationError("final assessment missing conversation_ref");
  return r;
}

inline std::string format_instruction_for(const Item& item) {
  if (item.binary) return "Answer with a single word: yes or no.";
  return "Answer with a single whole number from " + std::to_string(item.lo) + " to " +
         std::to_string(item.hi) + ".";
}

// Administers the instrument one item per request, under assessment sampling
// parameters. When a context transcript is given it is replayed as prior
// dialogue and fingerprinted into context_digest.
inline AssessmentResult administer(const PatientAgent& patient, const QuestionnaireSchema& schema,
                                   const std::optional<Transcript>& context, Backend& backend,
                                   const SimulationConfig& config, Stage stage,
                                   std::optional<std::string> conversation_ref = std::nullopt) {
  AssessmentResult result;
  result.questionnaire_id = schema.id;
  result.stage = stage;
  result.conversation_ref = std::move(conversation_ref);
  if (context) result.context_digest = transcript_digest(*context);

  std::vector<ChatMessage> base;
  base.push_back({MessageRole::System, patient.system_prompt});
  if (context) {
    auto history = patient_history(*context);
    base.insert(base.end(), history.begin(), history.end());
  }
  std::string context_hint =
      context ? ", taking into account the conversation you just had" : "";

  PromptSet prompts;  // assessment item template is not persona-specific
  for (const auto& item : schema.items) {
    ChatRequest req;
    req.messages = base;
    req.messages.push_back(
        {MessageRole::User, render_template(prompts.assessment_item,
                                            {{"item_text", item.prompt_text},
                                             {"format_instruction", format_instruction_for(item)},
                                             {"context_hint", context_hint}})});
    req.temperature = config.assessment_sampling.temperature;
    req.top_p = config.assessment_sampling.top_p;
    req.max_tokens = config.assessment_sampling.max_tokens;

    std::optional<ItemValue> value;
    for (int attempt = 0; attempt < config.max_parse_retries && !value; ++attempt) {
      auto response = backend.complete(req);
      value = parse_item_answer(item, response.content);
    }
    if (!value)
      throw AssessmentParseFailure(item.item_id, "unparseable answer for " + item.item_id +
                                                     " after " +
                                                     std::to_string(config.max_parse_retries) +
                                                     " attempts");
    result.responses[item.item_id] = *value;
  }

  auto scored = score(schema, result.responses);
  result.total = scored.total;
  result.subscale_totals = scored.subscale_totals;
  return result;
}

// Signed score change between two administrations of the same instrument.
inline int delta(const AssessmentResult& initial, const AssessmentResult& final_result) {
  if (initial.questionnaire_id != final_result.questionnaire_id)
    throw MismatchedQuestionnaire("delta across different questionnaires: " +
                                  initial.questionnaire_id + " vs " +
                                  final_result.questionnaire_id);
  return final_result.total - initial.total;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(json& j, const AssessmentResult& r) {
  json responses = json::object();
  for (const auto& [id, value] : r.responses) {
    if (std::holds_alternative<bool>(value))
      responses[id] = std::get<bool>(value) ? "yes" : "no";
    else
      responses[id] = std::get<int>(value);
  }
  j = json{{"questionnaire_id", r.questionnaire_id},
           {"responses", responses},
           {"total", r.total},
           {"subscale_totals", r.subscale_totals},
           {"stage", std::string(to_string(r.stage))}};
  if (r.conversation_ref) j["conversation_ref"] = *r.conversation_ref;
  if (r.context_digest) j["context_digest"] = *r.context_digest;
}
inline void from_json(const json& j, AssessmentResult& r) {
  j.at("questionnaire_id").get_to(r.questionnaire_id);
  r.responses.clear();
  for (const auto& [id, value] : j.at("responses").items()) {
    if (value.is_string()) {
      auto s = value.get<std::string>();
      if (s != "yes" && s != "no") throw ValidationError("bad response value: " + s);
      r.responses[id] = (s == "yes");
    } else {
      r.responses[id] = value.get<int>();
    }
  }
  j.at("total").get_to(r.total);
  r.subscale_totals.clear();
  if (j.contains("subscale_totals")) j.at("subscale_totals").get_to(r.subscale_totals);
  r.stage = stage_from_string(j.at("stage").get<std::string>());
  if (j.contains("conversation_ref")) r.conversation_ref = j.at("conversation_ref").get<std::string>();
  if (j.contains("context_digest")) r.context_digest = j.at("context_digest").get<std::string>();
}

}  // namespace mindbench
