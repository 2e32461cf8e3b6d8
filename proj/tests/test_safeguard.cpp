#include <catch2/catch_amalgamated.hpp>

#include "support/helpers.hpp"

using namespace mindbench;
using testsupport::test_persona;

namespace {

Transcript rounds_transcript(int rounds) {
  TranscriptBuilder tb("conv", "p", "c", "T");
  Provenance pv;
  for (int r = 1; r <= rounds; ++r) {
    tb.add_patient_turn("patient round " + std::to_string(r), pv);
    tb.add_character_turn("character round " + std::to_string(r), pv);
  }
  return std::move(tb).finish();
}

}  // namespace

TEST_CASE("trainer config defaults match the training protocol") {
  TrainerConfig config;
  CHECK(config.flag_threshold == 3);
  CHECK(config.max_iterations == 2);
  CHECK(config.questionnaire_id == "phq9");
  validate_trainer_config(config);
  config.flag_threshold = 0;
  CHECK_THROWS_AS(validate_trainer_config(config), ValidationError);
}

TEST_CASE("guard fires on cadence boundaries below the final round") {
  for (int round : {3, 6, 9}) CHECK(guard_fires_after(round, 3, 10));
  for (int round : {1, 2, 4, 5, 7, 8}) CHECK_FALSE(guard_fires_after(round, 3, 10));
  CHECK_FALSE(guard_fires_after(10, 3, 10));  // nothing follows round 10
  CHECK_FALSE(guard_fires_after(0, 3, 10));
  CHECK_FALSE(guard_fires_after(9, 3, 9));
}

TEST_CASE("analyze_window sees only the rounds since the last firing") {
  auto profile = default_safeguard_profile();
  auto backend = testsupport::scripted_default("noted");
  SimulationConfig config;
  auto transcript = rounds_transcript(6);

  analyze_window(transcript, 4, profile, *backend, config);
  auto requests = backend->recorded_requests();
  REQUIRE(requests.size() == 3);  // one per module
  for (const auto& req : requests) {
    const auto& window = req.messages.back().content;
    CHECK(window.find("patient round 4") != std::string::npos);
    CHECK(window.find("patient round 6") != std::string::npos);
    CHECK(window.find("patient round 3") == std::string::npos);
  }
  CHECK(requests[0].messages.front().content == profile.emotion_watcher);
  CHECK(requests[1].messages.front().content == profile.thought_refiner);
  CHECK(requests[2].messages.front().content == profile.dialog_guide);
}

TEST_CASE("analyze_window requires a completed round and fails whole") {
  auto profile = default_safeguard_profile();
  SimulationConfig config;
  Transcript empty;
  empty.conversation_id = "conv";
  empty.topic_trace = {{"T", 1}};
  auto backend = testsupport::scripted_default("x");
  CHECK_THROWS_AS(analyze_window(empty, 1, profile, *backend, config), ValidationError);

  // Third module call exhausts the script: the whole window fails.
  auto failing = testsupport::scripted({"one", "two"});
  CHECK_THROWS_AS(analyze_window(rounds_transcript(3), 1, profile, *failing, config),
                  ScriptExhausted);
}

TEST_CASE("synthesize produces persona-aware advice that round-trips its inputs") {
  auto profile = default_safeguard_profile();
  auto backend = testsupport::scripted({"Tease less, listen more."});
  SimulationConfig config;
  ModuleOutputs outputs{"emotion says distress", "thought says distortion", "dialog says slow"};

  auto advice = synthesize(outputs, test_persona(), profile, *backend, config, 3);
  CHECK(advice.text == "Tease less, listen more.");
  CHECK(advice.module_outputs == outputs);
  CHECK(advice.profile_version == profile.version);
  CHECK(advice.fired_after_round == 3);

  auto req = backend->recorded_requests().front();
  CHECK(req.messages.front().content.find("Vex") != std::string::npos);
  CHECK(req.messages.back().content.find("emotion says distress") != std::string::npos);
}

TEST_CASE("guard runtime fires on cadence and advances its window") {
  SimulationConfig config;
  config.rounds_per_conversation = 10;
  auto backend = testsupport::scripted_default("module text");
  GuardRuntime guard(default_safeguard_profile(), backend, test_persona());

  auto transcript = rounds_transcript(10);
  std::vector<int> fired;
  for (int round = 1; round <= 10; ++round) {
    if (auto event = guard.after_round(transcript, round, config)) {
      fired.push_back(round);
      CHECK(event->advice.fired_after_round == round);
      CHECK(event->advice.profile_version == 0);
    }
  }
  CHECK(fired == std::vector<int>{3, 6, 9});

  // 4 calls per firing: three modules and one manager.
  CHECK(backend->recorded_requests().size() == 12);
  // The second firing's window starts after the first firing.
  auto second_window = backend->recorded_requests()[4].messages.back().content;
  CHECK(second_window.find("patient round 4") != std::string::npos);
  CHECK(second_window.find("patient round 3") == std::string::npos);
}

TEST_CASE("update_profile accumulates factor history across versions") {
  SimulationConfig config;
  json texts{{"emotion_watcher", "watch closer"},
             {"thought_refiner", "refine harder"},
             {"dialog_guide", "guide softer"}};
  auto backend = testsupport::scripted_default(texts.dump());

  Factor f1{"harsh tone", {"quote one"}, "conv-1"};
  Factor f2{"isolation push", {"quote two"}, "conv-2"};

  std::vector<SafeguardProfile> chain{default_safeguard_profile()};
  auto v1 = update_profile(chain, {f1}, *backend, config);
  CHECK(v1.version == 1);
  CHECK(v1.parent_version == 0);
  REQUIRE(v1.factor_history.size() == 1);
  CHECK(v1.factor_history[0] == std::vector<Factor>{f1});
  CHECK(v1.emotion_watcher == "watch closer");

  chain.push_back(v1);
  auto v2 = update_profile(chain, {f2}, *backend, config);
  CHECK(v2.version == 2);
  CHECK(v2.parent_version == 1);
  REQUIRE(v2.factor_history.size() == 2);
  CHECK(v2.factor_history[0] == std::vector<Factor>{f1});
  CHECK(v2.factor_history[1] == std::vector<Factor>{f2});

  // Lineage: every version's history contains its parent's.
  for (std::size_t i = 0; i + 1 < v2.factor_history.size(); ++i)
    CHECK(v1.factor_history[i] == v2.factor_history[i]);

  // The update request shows the prior texts and the factors.
  auto req = backend->recorded_requests().back();
  CHECK(req.messages.back().content.find("harsh tone") != std::string::npos);
  CHECK(req.messages.back().content.find(chain.front().emotion_watcher) != std::string::npos);
}

TEST_CASE("update_profile is deterministic against identical scripts") {
  SimulationConfig config;
  json texts{{"emotion_watcher", "a"}, {"thought_refiner", "b"}, {"dialog_guide", "c"}};
  Factor f{"factor", {}, "conv"};
  auto run = [&]() {
    auto backend = testsupport::scripted_default(texts.dump());
    std::vector<SafeguardProfile> chain{default_safeguard_profile()};
    return update_profile(chain, {f}, *backend, config);
  };
  CHECK(run() == run());
}

TEST_CASE("update_profile retries bad output then gives up") {
  SimulationConfig config;
  json texts{{"emotion_watcher", "a"}, {"thought_refiner", "b"}, {"dialog_guide", "c"}};
  auto recovering = testsupport::scripted({"garbage", texts.dump()});
  std::vector<SafeguardProfile> chain{default_safeguard_profile()};
  auto v1 = update_profile(chain, {}, *recovering, config);
  CHECK(v1.emotion_watcher == "a");

  auto hopeless = testsupport::scripted_default("{\"emotion_watcher\": \"\"}");
  CHECK_THROWS_AS(update_profile(chain, {}, *hopeless, config), AnalysisParseFailure);

  std::vector<SafeguardProfile> empty_chain;
  auto any = testsupport::scripted_default(texts.dump());
  CHECK_THROWS_AS(update_profile(empty_chain, {}, *any, config), ValidationError);
}

TEST_CASE("safeguard profiles validate and round-trip through JSON") {
  auto p = default_safeguard_profile();
  p.factor_history.push_back({Factor{"desc", {"q"}, "conv"}});
  json j = p;
  CHECK(j.at("parent_version").is_null());
  CHECK(j.get<SafeguardProfile>() == p);

  SafeguardProfile bad = p;
  bad.version = 2;
  CHECK_THROWS_AS(validate_safeguard_profile(bad), ValidationError);  // no parent
  bad.parent_version = 2;
  CHECK_THROWS_AS(validate_safeguard_profile(bad), ValidationError);  // parent >= version
  bad.parent_version = 1;
  validate_safeguard_profile(bad);

  SafeguardProfile blank = p;
  blank.dialog_guide = "  ";
  CHECK_THROWS_AS(validate_safeguard_profile(blank), ValidationError);
}

TEST_CASE("the shipped v0 profile file matches the built-in default") {
  auto shipped = load_safeguard_profile(testsupport::data_dir() / "profiles" / "v0.json");
  CHECK(shipped == default_safeguard_profile());
}
