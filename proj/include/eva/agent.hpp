#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eva/frame_tool.hpp"
#include "eva/reflector.hpp"
#include "eva/synthetic_video.hpp"

namespace eva {

class Policy;

struct AgentAction {
  enum class Kind { kToolCall, kFinalAnswer };
  Kind kind = Kind::kFinalAnswer;
  FrameSelectCall call;  // kToolCall
  std::string answer;    // kFinalAnswer

  static AgentAction tool(const FrameSelectCall& c) {
    return AgentAction{Kind::kToolCall, c, {}};
  }
  static AgentAction final(std::string a) {
    return AgentAction{Kind::kFinalAnswer, {}, std::move(a)};
  }
  bool operator==(const AgentAction&) const = default;
};

enum class ParseError { kNone, kMalformedJson, kUnknownTool, kMissingArgument, kNoAction };

const char* parse_error_name(ParseError e);

struct ParsedAction {
  std::optional<AgentAction> action;
  ParseError error = ParseError::kNone;
  std::string message;

  bool ok() const { return action.has_value(); }
};

// Extracts the agent's action from free-form round text. The first
// syntactically complete JSON object carrying a "tool" key wins; otherwise
// the trailing text after the last `Answer:` marker becomes a final answer.
// A tool envelope takes precedence when both forms appear.
ParsedAction parse_action(const std::string& model_text);

// The exact wire envelope for a frame_select call, matching the transcript
// format: {"tool": "frame_select", "arguments": {...}}.
std::string render_tool_envelope(const FrameSelectCall& call);

struct HistoryItem {
  enum class Kind { kText, kFrames };
  Kind kind = Kind::kText;
  std::string text;      // kText
  int batch_index = -1;  // kFrames
};

struct EpisodeLimits {
  int max_rounds = 6;
  std::int64_t max_tokens = 25000;
};

// Eq-style belief state: the query, the interleaved text-frame history and
// the accumulated visual evidence, plus the bookkeeping policies need to act.
struct BeliefState {
  std::string q;
  const QueryInstance* query = nullptr;  // structured view, non-owning
  std::string video_id;
  double video_duration_s = 0.0;
  int video_resolution_p = 720;
  std::vector<HistoryItem> h;
  std::vector<FrameObservation> frames;  // F_t, flattened
  std::vector<FrameBatch> batches;
  int round_index = 0;
  std::int64_t tokens_spent = 0;
  EpisodeLimits limits;
  TokenProfile token_profile;
  bool has_prev_call = false;
  FrameSelectCall prev_call;
  bool prev_found_info = false;
};

struct Round {
  std::string summary;
  std::string plan;
  AgentAction action;
  std::optional<std::string> reflection;
  std::optional<Verdict> reflection_audit;  // present when a reflector ran
  std::optional<std::string> tool_error;    // invalid call or budget refusal
};

enum class Outcome { kAnswered, kRoundCap, kBudgetCap, kParseFailure };

const char* outcome_name(Outcome o);

struct Trajectory {
  int schema_version = 1;
  std::string video_id;
  double video_duration_s = 0.0;
  std::uint64_t episode_seed = 0;
  std::string policy_name;
  std::string config_hash;
  QueryInstance query;
  std::vector<Round> rounds;
  std::vector<FrameBatch> frame_batches;  // one per executed tool call
  std::optional<std::string> final_answer;
  EpisodeLimits limits;
  Outcome outcome = Outcome::kRoundCap;
  std::int64_t tokens_spent = 0;
  std::optional<std::string> parse_error;

  int executed_tool_calls() const { return static_cast<int>(frame_batches.size()); }
};

struct EpisodeOptions {
  EpisodeLimits limits{};
  TokenProfile profile{};
  std::optional<ReflectorMode> reflector;  // nullopt: no reflector attached
  std::uint64_t seed = 0;
  std::string config_hash;
};

// Drives one summary-plan-action-reflection loop. An episode is strictly
// sequential; distinct runners share no mutable state.
class EpisodeRunner {
 public:
  EpisodeRunner(const SyntheticVideo& video, const QueryInstance& query,
                const Policy& policy, EpisodeOptions opts);

  const BeliefState& state() const { return state_; }
  bool done() const { return done_; }

  // Executes one round; returns the recorded round, or nullopt when the
  // policy output failed to parse (episode ends with parse_failure).
  std::optional<Round> step();

  Trajectory take_trajectory();

 private:
  const SyntheticVideo& video_;
  const QueryInstance& query_;
  const Policy& policy_;
  EpisodeOptions opts_;
  BeliefState state_;
  Trajectory trajectory_;
  bool done_ = false;
};

Trajectory run_episode(const SyntheticVideo& video, const QueryInstance& query,
                       const Policy& policy, const EpisodeOptions& opts);

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

// Renders the paper-style dialogue: system prompt, video header, assistant
// rounds, tool responses as user turns.
std::vector<ChatMessage> render_messages(const BeliefState& state);
std::vector<ChatMessage> render_transcript(const Trajectory& trajectory);

std::string compose_round_text(const std::string& summary, const std::string& plan,
                               const std::string& action_text,
                               const std::optional<std::string>& reflection);

}  // namespace eva
