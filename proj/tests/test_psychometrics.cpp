#include <catch2/catch_amalgamated.hpp>

#include "support/helpers.hpp"

using namespace mindbench;
using testsupport::shipped_schemas;

namespace {

// Independent oracle: walk the schema and add up response points by hand.
int brute_force_total(const QuestionnaireSchema& schema, const ResponseMap& responses) {
  int total = 0;
  for (const auto& item : schema.items) {
    const auto& v = responses.at(item.item_id);
    if (item.binary)
      total += std::get<bool>(v) ? 1 : 0;
    else
      total += std::get<int>(v);
  }
  return total;
}

ResponseMap uniform_responses(const QuestionnaireSchema& schema, int value) {
  ResponseMap out;
  for (const auto& item : schema.items)
    out[item.item_id] = item.binary ? ItemValue{value != 0} : ItemValue{value};
  return out;
}

ResponseMap random_responses(const QuestionnaireSchema& schema, std::mt19937& gen) {
  ResponseMap out;
  for (const auto& item : schema.items) {
    if (item.binary) {
      out[item.item_id] = std::uniform_int_distribution<int>(0, 1)(gen) == 1;
    } else {
      out[item.item_id] = std::uniform_int_distribution<int>(item.lo, item.hi)(gen);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("shipped schemas satisfy the instrument invariants") {
  auto& schemas = shipped_schemas();
  REQUIRE(schemas.count("phq9"));
  REQUIRE(schemas.count("pdi21"));
  REQUIRE(schemas.count("panss-sr"));
  CHECK(schemas.at("phq9").items.size() == 9);
  CHECK(schemas.at("pdi21").items.size() == 21);
  CHECK(schemas.at("panss-sr").items.size() == 30);
  // validate_schema ran at load time; spot-check the declared ranges.
  CHECK(schemas.at("phq9").total_max == 27);
  CHECK(schemas.at("pdi21").total_max == 21);
  CHECK(schemas.at("panss-sr").total_min == 30);
  CHECK(schemas.at("panss-sr").total_max == 210);
}

TEST_CASE("schema validation rejects shape violations for known instruments") {
  auto schema = shipped_schemas().at("phq9");
  schema.items.pop_back();
  schema.total_max = 24;
  CHECK_THROWS_AS(validate_schema(schema), ValidationError);

  auto panss = shipped_schemas().at("panss-sr");
  panss.subscales["positive"].pop_back();
  CHECK_THROWS_AS(validate_schema(panss), ValidationError);
}

TEST_CASE("phq9 scoring examples") {
  const auto& phq9 = shipped_schemas().at("phq9");
  CHECK(score(phq9, uniform_responses(phq9, 0)).total == 0);
  CHECK(score(phq9, uniform_responses(phq9, 3)).total == 27);

  // (1,0,2,3,0,1,1,0,2): expected value computed by the independent hand-sum.
  std::vector<int> values = {1, 0, 2, 3, 0, 1, 1, 0, 2};
  ResponseMap responses;
  for (std::size_t i = 0; i < values.size(); ++i)
    responses["phq9-" + std::to_string(i + 1)] = values[i];
  REQUIRE(brute_force_total(phq9, responses) == 10);
  CHECK(score(phq9, responses).total == 10);
}

TEST_CASE("panss minimum hits the floor with subscale totals") {
  const auto& panss = shipped_schemas().at("panss-sr");
  auto result = score(panss, uniform_responses(panss, 1));
  CHECK(result.total == 30);
  CHECK(result.subscale_totals.at("positive") == 7);
  CHECK(result.subscale_totals.at("negative") == 7);
  CHECK(result.subscale_totals.at("general") == 16);
}

TEST_CASE("pdi21 counts endorsements") {
  const auto& pdi = shipped_schemas().at("pdi21");
  CHECK(score(pdi, uniform_responses(pdi, 0)).total == 0);
  CHECK(score(pdi, uniform_responses(pdi, 1)).total == 21);
}

TEST_CASE("scoring equals the brute-force oracle on random response vectors") {
  auto& gen = testsupport::rng();
  for (const auto& [id, schema] : shipped_schemas()) {
    for (int trial = 0; trial < 200; ++trial) {
      auto responses = random_responses(schema, gen);
      CHECK(score(schema, responses).total == brute_force_total(schema, responses));
    }
  }
}

TEST_CASE("extreme response vectors hit the declared range endpoints") {
  for (const auto& [id, schema] : shipped_schemas()) {
    ResponseMap lo, hi;
    for (const auto& item : schema.items) {
      lo[item.item_id] = item.binary ? ItemValue{false} : ItemValue{item.lo};
      hi[item.item_id] = item.binary ? ItemValue{true} : ItemValue{item.hi};
    }
    CHECK(score(schema, lo).total == schema.total_min);
    CHECK(score(schema, hi).total == schema.total_max);
  }
}

TEST_CASE("incomplete or out-of-scale responses are rejected") {
  const auto& phq9 = shipped_schemas().at("phq9");
  auto responses = uniform_responses(phq9, 1);
  responses.erase("phq9-5");
  CHECK_THROWS_AS(score(phq9, responses), IncompleteResponses);

  responses = uniform_responses(phq9, 1);
  responses["phq9-3"] = 4;
  CHECK_THROWS_AS(score(phq9, responses), OutOfScaleResponse);

  responses = uniform_responses(phq9, 1);
  responses["phq9-3"] = true;  // wrong kind
  CHECK_THROWS_AS(score(phq9, responses), OutOfScaleResponse);

  responses = uniform_responses(phq9, 1);
  responses["extra-item"] = 1;
  CHECK_THROWS_AS(score(phq9, responses), IncompleteResponses);
}

TEST_CASE("answer parser takes the first standalone integer in scale") {
  Item item{"phq9-1", "prompt", false, 0, 3};
  CHECK(parse_item_answer(item, "2") == ItemValue{2});
  CHECK(parse_item_answer(item, " 3.") == ItemValue{3});
  CHECK(parse_item_answer(item, "I'd say 2, most days") == ItemValue{2});
  CHECK_FALSE(parse_item_answer(item, "maybe").has_value());
  CHECK_FALSE(parse_item_answer(item, "4").has_value());        // out of scale
  CHECK_FALSE(parse_item_answer(item, "1.5").has_value());      // decimal
  CHECK_FALSE(parse_item_answer(item, "item2b").has_value());   // embedded
  CHECK_FALSE(parse_item_answer(item, "yes").has_value());      // wrong kind

  Item wide{"panss-p1", "prompt", false, 1, 7};
  CHECK(parse_item_answer(wide, "7 out of 7") == ItemValue{7});
  CHECK_FALSE(parse_item_answer(wide, "0").has_value());
}

TEST_CASE("answer parser reads yes/no tokens only for binary items") {
  Item item{"pdi21-1", "prompt", true, 0, 0};
  CHECK(parse_item_answer(item, "Yes.") == ItemValue{true});
  CHECK(parse_item_answer(item, "no, never") == ItemValue{false});
  CHECK(parse_item_answer(item, "NO") == ItemValue{false});
  CHECK_FALSE(parse_item_answer(item, "I don't know").has_value());
  CHECK_FALSE(parse_item_answer(item, "1").has_value());
  CHECK_FALSE(parse_item_answer(item, "yesterday maybe").has_value());  // not standalone
}

TEST_CASE("administer asks one item per request and scores the answers") {
  const auto& phq9 = shipped_schemas().at("phq9");
  auto backend = testsupport::scripted_default("2");
  auto patient = make_patient_agent(testsupport::depression_profile(), backend);
  SimulationConfig config;

  auto result = administer(patient, phq9, std::nullopt, *backend, config, Stage::Initial);
  CHECK(result.total == 18);  // nine items, all answered 2
  CHECK(result.stage == Stage::Initial);
  CHECK_FALSE(result.context_digest.has_value());
  CHECK_FALSE(result.conversation_ref.has_value());

  auto requests = backend->recorded_requests();
  REQUIRE(requests.size() == 9);
  for (const auto& req : requests) {
    CHECK(req.temperature == 0.0);
    CHECK(req.top_p == 1.0);
    CHECK(req.messages.front().role == MessageRole::System);
    CHECK(req.messages.front().content == patient.system_prompt);
  }
  CHECK(requests[0].messages.back().content.find(phq9.items[0].prompt_text) != std::string::npos);
  CHECK(requests[0].messages.back().content.find("from 0 to 3") != std::string::npos);
}

TEST_CASE("administer retries unparseable answers then fails on the item") {
  const auto& phq9 = shipped_schemas().at("phq9");
  auto backend = testsupport::scripted_default("maybe");
  auto patient = make_patient_agent(testsupport::depression_profile(), backend);
  SimulationConfig config;

  try {
    administer(patient, phq9, std::nullopt, *backend, config, Stage::Initial);
    FAIL("expected AssessmentParseFailure");
  } catch (const AssessmentParseFailure& e) {
    CHECK(e.item_id() == "phq9-1");
  }
  CHECK(backend->recorded_requests().size() == static_cast<std::size_t>(config.max_parse_retries));
}

TEST_CASE("administer recovers when a retry parses") {
  const auto& phq9 = shipped_schemas().at("phq9");
  auto backend = testsupport::scripted({"hmm", "1"}, "0");
  auto patient = make_patient_agent(testsupport::depression_profile(), backend);
  SimulationConfig config;
  auto result = administer(patient, phq9, std::nullopt, *backend, config, Stage::Initial);
  CHECK(result.responses.at("phq9-1") == ItemValue{1});
  CHECK(result.total == 1);
}

TEST_CASE("final administration replays the conversation and fingerprints it") {
  const auto& phq9 = shipped_schemas().at("phq9");
  auto backend = testsupport::scripted_default("1");
  auto patient = make_patient_agent(testsupport::depression_profile(), backend);
  SimulationConfig config;

  TranscriptBuilder tb("conv-1", "p-test", "c-test", "T");
  Provenance pv;
  pv.backend_id = "scripted";
  tb.add_patient_turn("I feel heavy", pv);
  tb.add_character_turn("heavy how", pv);
  auto transcript = std::move(tb).finish();

  auto result =
      administer(patient, phq9, transcript, *backend, config, Stage::Final, "conv-1");
  CHECK(result.stage == Stage::Final);
  CHECK(result.conversation_ref == "conv-1");
  REQUIRE(result.context_digest.has_value());
  CHECK(*result.context_digest == transcript_digest(transcript));

  auto requests = backend->recorded_requests();
  bool saw_history = false;
  for (const auto& m : requests.front().messages)
    if (m.role == MessageRole::Assistant && m.content == "I feel heavy") saw_history = true;
  CHECK(saw_history);

  validate_assessment(phq9, result);
}

TEST_CASE("administration is deterministic against identical scripts") {
  const auto& pdi = shipped_schemas().at("pdi21");
  SimulationConfig config;
  auto run = [&]() {
    auto backend = testsupport::scripted_default("no");
    auto patient = make_patient_agent(testsupport::depression_profile(), backend);
    return administer(patient, pdi, std::nullopt, *backend, config, Stage::Initial);
  };
  CHECK(run() == run());
}

TEST_CASE("delta subtracts initial from final and is antisymmetric") {
  AssessmentResult a, b;
  a.questionnaire_id = b.questionnaire_id = "phq9";
  a.total = 10;
  b.total = 15;
  CHECK(delta(a, b) == 5);
  CHECK(delta(b, a) == -5);
  b.total = 10;
  CHECK(delta(a, b) == 0);

  auto& gen = testsupport::rng();
  std::uniform_int_distribution<int> dist(0, 27);
  for (int trial = 0; trial < 100; ++trial) {
    a.total = dist(gen);
    b.total = dist(gen);
    CHECK(delta(a, b) == -delta(b, a));
    CHECK(delta(a, b) == b.total - a.total);
  }

  AssessmentResult other;
  other.questionnaire_id = "pdi21";
  CHECK_THROWS_AS(delta(a, other), MismatchedQuestionnaire);
}

TEST_CASE("assessment results round-trip through JSON") {
  AssessmentResult r;
  r.questionnaire_id = "pdi21";
  r.responses["pdi21-1"] = true;
  r.responses["pdi21-2"] = false;
  r.total = 1;
  r.stage = Stage::Final;
  r.conversation_ref = "conv-9";
  r.context_digest = "abc123";
  CHECK(json(r).get<AssessmentResult>() == r);

  AssessmentResult s;
  s.questionnaire_id = "phq9";
  s.responses["phq9-1"] = 3;
  s.total = 3;
  s.stage = Stage::Initial;
  CHECK(json(s).get<AssessmentResult>() == s);
}
