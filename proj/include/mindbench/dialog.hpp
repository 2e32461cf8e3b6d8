#pragma once

// Topic state machine. Pure counters decide *when* to consult the judge;
// the judge decides *whether* the topic is resolved and what comes next.
// A judge reply that cannot be parsed always means Keep.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "mindbench/core.hpp"
#include "mindbench/gateway.hpp"
#include "mindbench/prompts.hpp"

namespace mindbench {

struct TopicState {
  std::string current_topic;
  std::vector<std::string> topic_list;  // remaining candidates, current excluded
  int rounds_on_topic = 0;
  int rounds_since_switch = 0;
  int total_rounds = 0;

  bool operator==(const TopicState&) const = default;
};

inline TopicState make_topic_state(std::string initial_topic,
                                   std::vector<std::string> candidates) {
  candidates.erase(std::remove(candidates.begin(), candidates.end(), initial_topic),
                   candidates.end());
  return {std::move(initial_topic), std::move(candidates), 0, 0, 0};
}

// Counter bump applied after every completed round.
inline TopicState after_round(TopicState state) {
  ++state.rounds_on_topic;
  ++state.rounds_since_switch;
  ++state.total_rounds;
  return state;
}

struct TopicDecision {
  enum class Kind { Keep, Switch };
  Kind kind = Kind::Keep;
  std::string new_topic;   // Switch only
  std::string rationale;   // Switch only

  static TopicDecision keep() { return {}; }
  static TopicDecision switch_to(std::string topic, std::string rationale = {}) {
    return {Kind::Switch, std::move(topic), std::move(rationale)};
  }

  bool is_switch() const { return kind == Kind::Switch; }
};

// True when the topic has been held long enough and the last switch is out of
// cooldown. Pure predicate over the counters.
inline bool should_evaluate(const TopicState& state, const SimulationConfig& config) {
  return state.rounds_on_topic > config.dm_activation_round &&
         state.rounds_since_switch >= config.dm_cooldown_rounds;
}

namespace detail {

inline bool contains_word(const std::string& haystack, const std::string& needle) {
  auto upper = to_lower(haystack);
  auto target = to_lower(needle);
  std::size_t pos = 0;
  while ((pos = upper.find(target, pos)) != std::string::npos) {
    bool left_ok = pos == 0 || !word_char(upper[pos - 1]);
    std::size_t end = pos + target.size();
    bool right_ok = end >= upper.size() || !word_char(upper[end]);
    if (left_ok && right_ok) return true;
    pos = end;
  }
  return false;
}

// Topic named after "NEXT:", matched against the candidate list.
inline std::optional<std::string> parse_next_topic(const std::string& text,
                                                   const std::vector<std::string>& candidates) {
  auto lowered = to_lower(text);
  auto pos = lowered.find("next:");
  if (pos == std::string::npos) return std::nullopt;
  auto line_end = text.find('\n', pos);
  auto raw = text.substr(pos + 5, (line_end == std::string::npos ? text.size() : line_end) -
                                      (pos + 5));
  auto candidate = trim(raw);
  while (!candidate.empty() && (candidate.back() == '.' || candidate.back() == '"'))
    candidate.pop_back();
  while (!candidate.empty() && candidate.front() == '"') candidate.erase(candidate.begin());
  candidate = trim(candidate);
  for (const auto& topic : candidates)
    if (topic == candidate) return topic;
  for (const auto& topic : candidates)
    if (to_lower(topic) == to_lower(candidate)) return topic;
  return std::nullopt;
}

}  // namespace detail

// Parses a judge verdict. Keep unless the reply clearly resolves the topic
// and names a valid candidate.
inline TopicDecision parse_judge_verdict(const std::string& text, const TopicState& state) {
  if (detail::contains_word(text, "UNRESOLVED")) return TopicDecision::keep();
  if (!detail::contains_word(text, "RESOLVED")) return TopicDecision::keep();
  if (state.topic_list.empty()) return TopicDecision::keep();
  if (auto topic = detail::parse_next_topic(text, state.topic_list))
    return TopicDecision::switch_to(*topic, trim(text));
  return TopicDecision::keep();
}

// Asks the judge whether the current topic is settled. Backend errors
// propagate; parse trouble fails safe to Keep.
inline TopicDecision evaluate_topic(const TopicState& state, const Transcript& so_far,
                                    Backend& judge, const SimulationConfig& config,
                                    const PromptSet& prompts = PromptSet{}) {
  ChatRequest req;
  req.messages.push_back({MessageRole::System, prompts.dm_judge_system});
  req.messages.push_back(
      {MessageRole::User,
       render_template(prompts.dm_judge_user, {{"topic", state.current_topic},
                                               {"topic_list", render_list(state.topic_list)},
                                               {"dialogue", render_dialogue(so_far)}})});
  req.temperature = config.assessment_sampling.temperature;
  req.top_p = config.assessment_sampling.top_p;
  req.max_tokens = config.assessment_sampling.max_tokens;
  auto response = judge.complete(req);
  return parse_judge_verdict(response.content, state);
}

// Applies a decision. Keep leaves the state untouched; Switch installs the
// new topic, removes it from the candidate list, and resets the counters.
inline TopicState apply_decision(TopicState state, const TopicDecision& decision) {
  if (!decision.is_switch()) return state;
  auto it = std::find(state.topic_list.begin(), state.topic_list.end(), decision.new_topic);
  if (it == state.topic_list.end())
    throw UnknownTopic("switch to a topic not in the candidate list: " + decision.new_topic);
  state.topic_list.erase(it);
  state.current_topic = decision.new_topic;
  state.rounds_on_topic = 0;
  state.rounds_since_switch = 0;
  return state;
}

}  // namespace mindbench
