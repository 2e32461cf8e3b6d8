#include <catch2/catch_amalgamated.hpp>

#include "support/helpers.hpp"

using namespace mindbench;
using testsupport::depression_profile;
using testsupport::test_persona;

namespace {

Transcript two_round_transcript() {
  TranscriptBuilder tb("conv-1", "p-test", "c-test", "T");
  Provenance pv;
  pv.backend_id = "scripted";
  tb.add_patient_turn("patient one", pv);
  tb.add_character_turn("character one", pv);
  tb.add_patient_turn("patient two", pv);
  tb.add_character_turn("character two", pv);
  return std::move(tb).finish();
}

}  // namespace

TEST_CASE("patient prompt renders deterministically with fixed section order") {
  auto profile = depression_profile();
  auto once = render_patient_prompt(profile);
  auto twice = render_patient_prompt(profile);
  CHECK(once == twice);

  auto hist = once.find("Relevant history:");
  auto core = once.find("Core beliefs:");
  auto inter = once.find("Intermediate beliefs:");
  auto coping = once.find("Coping strategies:");
  auto situation = once.find("Current situation:");
  auto thoughts = once.find("Automatic thoughts:");
  auto emotions = once.find("Emotions:");
  auto behaviors = once.find("Behaviors:");
  REQUIRE(hist != std::string::npos);
  CHECK(hist < core);
  CHECK(core < inter);
  CHECK(inter < coping);
  CHECK(coping < situation);
  CHECK(situation < thoughts);
  CHECK(thoughts < emotions);
  CHECK(emotions < behaviors);
}

TEST_CASE("patient prompt lists beliefs in input order and emotions exactly once") {
  auto profile = depression_profile();
  profile.cognitive_model.core_beliefs = {"belief alpha", "belief beta"};
  profile.cognitive_model.emotions = {"sadness", "shame", "dread"};
  auto prompt = render_patient_prompt(profile);

  auto alpha = prompt.find("belief alpha");
  auto beta = prompt.find("belief beta");
  REQUIRE(alpha != std::string::npos);
  REQUIRE(beta != std::string::npos);
  CHECK(alpha < beta);

  for (const auto& emotion : profile.cognitive_model.emotions) {
    auto first = prompt.find(emotion);
    REQUIRE(first != std::string::npos);
    CHECK(prompt.find(emotion, first + 1) == std::string::npos);
  }
  CHECK(prompt.find("first person") != std::string::npos);
}

TEST_CASE("patient request is system prompt plus topic framing on an empty transcript") {
  auto backend = testsupport::scripted_default("hello");
  auto agent = make_patient_agent(depression_profile(), backend);
  SimulationConfig config;
  Transcript empty;
  empty.conversation_id = "conv";
  empty.topic_trace = {{"T", 1}};

  auto req = build_patient_request(agent, empty, "Loneliness late at night", config);
  REQUIRE(req.messages.size() == 2);
  CHECK(req.messages[0].role == MessageRole::System);
  CHECK(req.messages[0].content == agent.system_prompt);
  CHECK(req.messages[1].role == MessageRole::System);
  CHECK(req.messages[1].content.find("Loneliness late at night") != std::string::npos);
  CHECK(req.temperature == config.chat_sampling.temperature);
}

TEST_CASE("patient sees history from its own perspective, without advice turns") {
  auto backend = testsupport::scripted_default("reply");
  auto agent = make_patient_agent(depression_profile(), backend);
  SimulationConfig config;

  TranscriptBuilder tb("conv", "p-test", "c-test", "T");
  Provenance pv;
  tb.add_patient_turn("mine", pv);
  tb.add_character_turn("theirs", pv);
  tb.add_advice_turn("secret guidance", pv, 0);
  auto transcript = std::move(tb).finish();

  auto req = build_patient_request(agent, transcript, "T", config);
  REQUIRE(req.messages.size() == 4);
  CHECK(req.messages[2].role == MessageRole::Assistant);
  CHECK(req.messages[2].content == "mine");
  CHECK(req.messages[3].role == MessageRole::User);
  CHECK(req.messages[3].content == "theirs");
  for (const auto& m : req.messages) CHECK(m.content.find("secret guidance") == std::string::npos);

  auto response = patient_respond(agent, transcript, "T", config);
  CHECK(response.content == "reply");
}

TEST_CASE("character request without advice has exactly one system message") {
  auto backend = testsupport::scripted_default("growl");
  auto agent = make_character_agent(test_persona(), backend);
  SimulationConfig config;
  auto transcript = two_round_transcript();

  auto req = build_character_request(agent, transcript, std::nullopt, config);
  int system_count = 0;
  for (const auto& m : req.messages)
    if (m.role == MessageRole::System) ++system_count;
  CHECK(system_count == 1);
  CHECK(req.messages.front().content == agent.persona.persona_prompt);
}

TEST_CASE("advice appends one system message and changes nothing else") {
  auto backend = testsupport::scripted_default("growl");
  auto agent = make_character_agent(test_persona(), backend);
  SimulationConfig config;
  auto transcript = two_round_transcript();

  auto bare = build_character_request(agent, transcript, std::nullopt, config);
  Advice advice;
  advice.text = "Validate the feeling before teasing.";
  advice.profile_version = 1;
  advice.fired_after_round = 3;
  auto guarded = build_character_request(agent, transcript, advice, config);

  REQUIRE(guarded.messages.size() == bare.messages.size() + 1);
  for (std::size_t i = 0; i < bare.messages.size(); ++i)
    CHECK(guarded.messages[i] == bare.messages[i]);
  CHECK(guarded.messages.back().role == MessageRole::System);
  CHECK(guarded.messages.back().content == advice.text);
}

TEST_CASE("analyst extracts factors with verbatim evidence") {
  auto transcript = two_round_transcript();
  json factor_json = json::array({json{{"description", "mockery of the patient"},
                                       {"evidence", json::array({"character one"})},
                                       {"case_ref", "conv-1"}}});
  auto backend = testsupport::scripted({factor_json.dump()});
  auto analyst = make_analyst_agent(backend);
  SimulationConfig config;

  std::vector<FlaggedCase> flagged{{transcript, 4}};
  auto factors = analyst_extract_factors(flagged, analyst, config);
  REQUIRE(factors.size() == 1);
  CHECK(factors[0].description == "mockery of the patient");
  CHECK(factors[0].case_ref == "conv-1");
  REQUIRE(factors[0].evidence_quotes.size() == 1);

  auto request = backend->recorded_requests().front();
  CHECK(request.messages.back().content.find("4 points") != std::string::npos);
  CHECK(request.messages.back().content.find("character one") != std::string::npos);
}

TEST_CASE("one factor per flagged case across multiple cases") {
  std::vector<FlaggedCase> flagged;
  std::vector<std::string> scripts;
  for (int i = 0; i < 3; ++i) {
    TranscriptBuilder tb("conv-" + std::to_string(i), "p", "c", "T");
    Provenance pv;
    tb.add_patient_turn("hello " + std::to_string(i), pv);
    tb.add_character_turn("reply " + std::to_string(i), pv);
    flagged.push_back({std::move(tb).finish(), 3 + i});
    scripts.push_back(json::array({json{{"description", "factor " + std::to_string(i)},
                                        {"evidence", json::array()}}})
                          .dump());
  }
  auto backend = testsupport::scripted(scripts);
  auto analyst = make_analyst_agent(backend);
  SimulationConfig config;

  auto factors = analyst_extract_factors(flagged, analyst, config);
  REQUIRE(factors.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(factors[static_cast<std::size_t>(i)].case_ref == "conv-" + std::to_string(i));
  }
}

TEST_CASE("fabricated evidence is rejected and retried until it parses") {
  auto transcript = two_round_transcript();
  json bad = json::array({json{{"description", "made up"},
                               {"evidence", json::array({"never said this"})}}});
  json good = json::array({json{{"description", "real"},
                                {"evidence", json::array({"patient two"})}}});
  auto backend = testsupport::scripted({bad.dump(), good.dump()});
  auto analyst = make_analyst_agent(backend);
  SimulationConfig config;

  auto factors = analyst_extract_factors({{transcript, 5}}, analyst, config);
  REQUIRE(factors.size() == 1);
  CHECK(factors[0].description == "real");
  CHECK(backend->recorded_requests().size() == 2);
}

TEST_CASE("persistent analyst garbage fails the case after retries") {
  auto transcript = two_round_transcript();
  auto backend = testsupport::scripted_default("not json at all");
  auto analyst = make_analyst_agent(backend);
  SimulationConfig config;
  try {
    analyst_extract_factors({{transcript, 5}}, analyst, config);
    FAIL("expected AnalysisParseFailure");
  } catch (const AnalysisParseFailure& e) {
    CHECK(e.case_ref() == "conv-1");
  }
}

TEST_CASE("empty flagged list violates the precondition") {
  auto backend = testsupport::scripted_default("[]");
  auto analyst = make_analyst_agent(backend);
  SimulationConfig config;
  CHECK_THROWS_AS(analyst_extract_factors({}, analyst, config), ValidationError);
}

TEST_CASE("factor caps at the configured maximum per case") {
  auto transcript = two_round_transcript();
  json many = json::array();
  for (int i = 0; i < 6; ++i)
    many.push_back(json{{"description", "factor " + std::to_string(i)},
                        {"evidence", json::array()}});
  auto backend = testsupport::scripted({many.dump()});
  auto analyst = make_analyst_agent(backend);
  SimulationConfig config;
  auto factors = analyst_extract_factors({{transcript, 5}}, analyst, config);
  CHECK(factors.size() == 3);
}

TEST_CASE("factor frequency clusters into the seeded taxonomy") {
  CHECK(deterioration_reason_taxonomy().size() == 5);

  std::vector<Factor> factors;
  for (int i = 0; i < 5; ++i)
    factors.push_back({"encouraged staying alone " + std::to_string(i), {}, "conv"});
  auto backend = testsupport::scripted_default("Promotion of Isolation and Social Withdrawal");
  auto analyst = make_analyst_agent(backend);
  SimulationConfig config;

  auto table = analyst_factor_frequency(factors, analyst, config);
  REQUIRE(table.size() == 1);
  CHECK(table[0].canonical_reason == "Promotion of Isolation and Social Withdrawal");
  CHECK(table[0].count == 5);
}

TEST_CASE("factor frequency of nothing is an empty table") {
  auto backend = testsupport::scripted({});
  auto analyst = make_analyst_agent(backend);
  SimulationConfig config;
  CHECK(analyst_factor_frequency({}, analyst, config).empty());
}

TEST_CASE("unknown labels fall into Other; unmappable output fails") {
  std::vector<Factor> factors{{"something else entirely", {}, "conv"}};
  auto backend = testsupport::scripted({"Other"});
  auto analyst = make_analyst_agent(backend);
  SimulationConfig config;
  auto table = analyst_factor_frequency(factors, analyst, config);
  REQUIRE(table.size() == 1);
  CHECK(table[0].canonical_reason == "Other");

  auto stubborn = testsupport::scripted_default("whatever I feel like");
  auto analyst2 = make_analyst_agent(stubborn);
  CHECK_THROWS_AS(analyst_factor_frequency(factors, analyst2, config), AnalysisParseFailure);
}
