#pragma once

#include <stdexcept>
#include <string>

namespace mindbench {

// Base class for every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A domain invariant does not hold (bad profile, bad config, bad schema...).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what) {}
};

// --- gateway ---

class AuthError : public Error {
 public:
  explicit AuthError(const std::string& what) : Error(what) {}
};

class RateLimitExhausted : public Error {
 public:
  explicit RateLimitExhausted(const std::string& what) : Error(what) {}
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what) : Error(what) {}
};

// Scripted backend ran out of rules and has no default response.
class ScriptExhausted : public Error {
 public:
  explicit ScriptExhausted(const std::string& what) : Error(what) {}
};

// --- psychometrics ---

class IncompleteResponses : public Error {
 public:
  explicit IncompleteResponses(const std::string& what) : Error(what) {}
};

class OutOfScaleResponse : public Error {
 public:
  OutOfScaleResponse(const std::string& item_id, const std::string& what)
      : Error(what), item_id_(item_id) {}
  const std::string& item_id() const { return item_id_; }

 private:
  std::string item_id_;
};

class AssessmentParseFailure : public Error {
 public:
  AssessmentParseFailure(const std::string& item_id, const std::string& what)
      : Error(what), item_id_(item_id) {}
  const std::string& item_id() const { return item_id_; }

 private:
  std::string item_id_;
};

class MismatchedQuestionnaire : public Error {
 public:
  explicit MismatchedQuestionnaire(const std::string& what) : Error(what) {}
};

// --- agents ---

class AnalysisParseFailure : public Error {
 public:
  AnalysisParseFailure(const std::string& case_ref, const std::string& what)
      : Error(what), case_ref_(case_ref) {}
  const std::string& case_ref() const { return case_ref_; }

 private:
  std::string case_ref_;
};

// --- dialog manager ---

class UnknownTopic : public Error {
 public:
  explicit UnknownTopic(const std::string& what) : Error(what) {}
};

// --- pipeline ---

class ConversationAborted : public Error {
 public:
  ConversationAborted(int round, const std::string& cause)
      : Error("conversation aborted at round " + std::to_string(round) + ": " + cause),
        round_(round),
        cause_(cause) {}
  int round() const { return round_; }
  const std::string& cause() const { return cause_; }

 private:
  int round_;
  std::string cause_;
};

// --- metrics ---

class EmptyDataset : public Error {
 public:
  explicit EmptyDataset(const std::string& what) : Error(what) {}
};

class UncoveredDelta : public Error {
 public:
  explicit UncoveredDelta(const std::string& what) : Error(what) {}
};

}  // namespace mindbench
