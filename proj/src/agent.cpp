#include "eva/agent.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "eva/policy.hpp"
#include "eva/rng.hpp"

namespace eva {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Extracts the balanced {...} substring starting at `start`, honoring string
// literals and escapes. Returns empty on imbalance.
std::string balanced_object(const std::string& text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      --depth;
      if (depth == 0) return text.substr(start, i - start + 1);
      if (depth < 0) return {};
    }
  }
  return {};
}

// Emit integral values the way the transcripts do (0, not 0.0).
ordered_json json_number(double v) {
  if (std::floor(v) == v && std::abs(v) < 9.0e15) {
    return ordered_json(static_cast<std::int64_t>(v));
  }
  return ordered_json(v);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const char* parse_error_name(ParseError e) {
  switch (e) {
    case ParseError::kNone: return "None";
    case ParseError::kMalformedJson: return "MalformedJson";
    case ParseError::kUnknownTool: return "UnknownTool";
    case ParseError::kMissingArgument: return "MissingArgument";
    case ParseError::kNoAction: return "NoAction";
  }
  return "?";
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kAnswered: return "answered";
    case Outcome::kRoundCap: return "round_cap";
    case Outcome::kBudgetCap: return "budget_cap";
    case Outcome::kParseFailure: return "parse_failure";
  }
  return "?";
}

std::string render_tool_envelope(const FrameSelectCall& call) {
  ordered_json args;
  args["start_time"] = json_number(call.start_time);
  args["end_time"] = json_number(call.end_time);
  args["nframes"] = call.nframes;
  args["resize"] = json_number(call.resize);
  ordered_json envelope;
  envelope["tool"] = "frame_select";
  envelope["arguments"] = args;
  return envelope.dump();
}

ParsedAction parse_action(const std::string& model_text) {
  // First syntactically complete JSON object with a "tool" key wins.
  for (std::size_t pos = model_text.find('{'); pos != std::string::npos;
       pos = model_text.find('{', pos + 1)) {
    const std::string blob = balanced_object(model_text, pos);
    if (blob.empty()) continue;
    const json obj = json::parse(blob, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("tool")) continue;

    if (!obj["tool"].is_string() || obj["tool"] != "frame_select") {
      return {std::nullopt, ParseError::kUnknownTool,
              "unknown tool in envelope: " + obj["tool"].dump()};
    }
    if (!obj.contains("arguments") || !obj["arguments"].is_object()) {
      return {std::nullopt, ParseError::kMissingArgument, "missing arguments object"};
    }
    const json& args = obj["arguments"];
    for (const char* key : {"start_time", "end_time", "nframes", "resize"}) {
      if (!args.contains(key) || !args[key].is_number()) {
        return {std::nullopt, ParseError::kMissingArgument,
                std::string("missing or non-numeric argument: ") + key};
      }
    }
    FrameSelectCall call;
    call.start_time = args["start_time"].get<double>();
    call.end_time = args["end_time"].get<double>();
    call.nframes = static_cast<int>(std::llround(args["nframes"].get<double>()));
    call.resize = args["resize"].get<double>();
    return {AgentAction::tool(call), ParseError::kNone, {}};
  }

  // An envelope was attempted but never parsed.
  if (model_text.find("\"tool\"") != std::string::npos) {
    return {std::nullopt, ParseError::kMalformedJson,
            "text mentions a tool envelope but no JSON object parses"};
  }

  const std::size_t marker = model_text.rfind("Answer:");
  if (marker != std::string::npos) {
    return {AgentAction::final(trim(model_text.substr(marker + 7))), ParseError::kNone, {}};
  }
  return {std::nullopt, ParseError::kNoAction, "neither tool envelope nor Answer: found"};
}

std::string compose_round_text(const std::string& summary, const std::string& plan,
                               const std::string& action_text,
                               const std::optional<std::string>& reflection) {
  std::ostringstream os;
  if (!summary.empty()) os << summary << "\n\n";
  if (!plan.empty()) os << plan << "\n\n";
  os << action_text;
  if (reflection && !reflection->empty()) os << "\n\n" << *reflection;
  return os.str();
}

// ---------------------------------------------------------------------------
// EpisodeRunner
// ---------------------------------------------------------------------------

EpisodeRunner::EpisodeRunner(const SyntheticVideo& video, const QueryInstance& query,
                             const Policy& policy, EpisodeOptions opts)
    : video_(video), query_(query), policy_(policy), opts_(std::move(opts)) {
  state_.q = query.question;
  state_.query = &query_;
  state_.video_id = video.id;
  state_.video_duration_s = video.duration_s;
  state_.video_resolution_p = video.height_px;
  state_.h.push_back(HistoryItem{HistoryItem::Kind::kText, query.question, -1});
  state_.limits = opts_.limits;
  state_.token_profile = opts_.profile;

  trajectory_.video_id = video.id;
  trajectory_.video_duration_s = video.duration_s;
  trajectory_.episode_seed = opts_.seed;
  trajectory_.policy_name = policy.name();
  trajectory_.config_hash = opts_.config_hash;
  trajectory_.query = query;
  trajectory_.limits = opts_.limits;
}

std::optional<Round> EpisodeRunner::step() {
  if (done_) return std::nullopt;

  const std::uint64_t round_seed =
      mix_seed(opts_.seed, static_cast<std::uint64_t>(trajectory_.rounds.size()));
  const PolicyOutput out = policy_.act(state_, round_seed);
  const ParsedAction parsed = parse_action(out.round_text);

  if (!parsed.ok()) {
    trajectory_.outcome = Outcome::kParseFailure;
    trajectory_.parse_error =
        std::string(parse_error_name(parsed.error)) + ": " + parsed.message;
    done_ = true;
    return std::nullopt;
  }

  Round round;
  round.summary = out.summary;
  round.plan = out.plan;
  round.reflection = out.reflection;
  round.action = *parsed.action;

  state_.h.push_back(HistoryItem{HistoryItem::Kind::kText, out.round_text, -1});

  if (round.action.kind == AgentAction::Kind::kFinalAnswer) {
    trajectory_.final_answer = round.action.answer;
    trajectory_.outcome = Outcome::kAnswered;
    done_ = true;
    trajectory_.rounds.push_back(round);
    return round;
  }

  FrameSelectCall call = round.action.call;
  std::vector<Violation> violations = validate(call, video_.duration_s);
  if (violations.empty() && opts_.reflector.has_value()) {
    std::optional<PrevRound> prev;
    if (state_.has_prev_call) {
      prev = PrevRound{state_.prev_call, state_.prev_found_info};
    }
    Verdict verdict = audit(prev, call, video_.duration_s, *opts_.reflector);
    if (verdict.corrected()) call = *verdict.corrected_call;
    round.reflection_audit = std::move(verdict);
  }

  if (!violations.empty()) {
    // The episode continues; the error becomes an observation the policy can
    // react to next round.
    std::ostringstream os;
    os << "Tool error:";
    for (const Violation& v : violations) os << " " << violation_name(v.code);
    round.tool_error = os.str();
    state_.h.push_back(HistoryItem{HistoryItem::Kind::kText, *round.tool_error, -1});
    trajectory_.rounds.push_back(round);
    state_.round_index = static_cast<int>(trajectory_.rounds.size());
    if (state_.round_index >= opts_.limits.max_rounds) {
      trajectory_.outcome = Outcome::kRoundCap;
      done_ = true;
    }
    return round;
  }

  const std::int64_t cost = token_cost(call, opts_.profile);
  if (state_.tokens_spent + cost > opts_.limits.max_tokens) {
    round.tool_error = "token budget exhausted: call refused";
    trajectory_.rounds.push_back(round);
    trajectory_.outcome = Outcome::kBudgetCap;
    done_ = true;
    return round;
  }

  FrameBatch batch = execute(call, video_, opts_.profile);
  bool found_info = false;
  for (const FrameObservation& obs : batch.observations) {
    if (!obs.labels.empty()) {
      found_info = true;
      break;
    }
  }

  state_.batches.push_back(batch);
  state_.frames.insert(state_.frames.end(), batch.observations.begin(),
                       batch.observations.end());
  state_.h.push_back(HistoryItem{HistoryItem::Kind::kFrames, {},
                                 static_cast<int>(state_.batches.size()) - 1});
  state_.tokens_spent += cost;
  state_.has_prev_call = true;
  state_.prev_call = call;
  state_.prev_found_info = found_info;

  trajectory_.frame_batches.push_back(std::move(batch));
  trajectory_.rounds.push_back(round);
  trajectory_.tokens_spent = state_.tokens_spent;
  state_.round_index = static_cast<int>(trajectory_.rounds.size());
  if (state_.round_index >= opts_.limits.max_rounds) {
    trajectory_.outcome = Outcome::kRoundCap;
    done_ = true;
  }
  return round;
}

Trajectory EpisodeRunner::take_trajectory() {
  trajectory_.tokens_spent = state_.tokens_spent;
  return std::move(trajectory_);
}

Trajectory run_episode(const SyntheticVideo& video, const QueryInstance& query,
                       const Policy& policy, const EpisodeOptions& opts) {
  EpisodeRunner runner(video, query, policy, opts);
  while (!runner.done()) runner.step();
  return runner.take_trajectory();
}

// ---------------------------------------------------------------------------
// Transcript rendering
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kSystemPrompt =
    "Use Frame Select Tool to Analyze the video and generate an answer to the "
    "question.";

std::string video_header(double duration_s, int resolution_p, const std::string& q) {
  std::ostringstream os;
  os << "Video Length: " << static_cast<std::int64_t>(duration_s)
     << " seconds. Original video resolution: " << resolution_p << "p.\n"
     << q;
  return os.str();
}

std::string render_batch(const FrameBatch& batch, const std::string& question) {
  std::ostringstream os;
  os << "(sampled " << batch.call.nframes << " frames from "
     << batch.call.start_time << "s to " << batch.call.end_time << "s at resize "
     << batch.call.resize << "; fps " << batch.fps << ", visual budget "
     << batch.visual_budget << ")\n";
  int empty = 0;
  for (const FrameObservation& obs : batch.observations) {
    if (obs.labels.empty()) {
      ++empty;
      continue;
    }
    os << "[t=" << obs.timestamp_s << "s]";
    for (const std::string& label : obs.labels) os << " " << label;
    os << "\n";
  }
  if (empty > 0) os << "(" << empty << " frames show nothing notable)\n";
  os << "If more information is needed, call the frame selection tool again.\n"
     << "Question: " << question;
  return os.str();
}

}  // namespace

std::vector<ChatMessage> render_messages(const BeliefState& state) {
  std::vector<ChatMessage> messages;
  messages.push_back({"system", kSystemPrompt});
  messages.push_back(
      {"user", video_header(state.video_duration_s, state.video_resolution_p, state.q)});
  for (std::size_t i = 1; i < state.h.size(); ++i) {
    const HistoryItem& item = state.h[i];
    if (item.kind == HistoryItem::Kind::kText) {
      messages.push_back({"assistant", item.text});
    } else {
      messages.push_back(
          {"user", render_batch(state.batches[static_cast<std::size_t>(item.batch_index)],
                                state.q)});
    }
  }
  return messages;
}

std::vector<ChatMessage> render_transcript(const Trajectory& trajectory) {
  std::vector<ChatMessage> messages;
  messages.push_back({"system", kSystemPrompt});
  const QueryInstance& q = trajectory.query;
  messages.push_back({"user", video_header(trajectory.video_duration_s, 720, q.question)});
  std::size_t batch_i = 0;
  for (const Round& round : trajectory.rounds) {
    std::string action_text;
    if (round.action.kind == AgentAction::Kind::kToolCall) {
      action_text = render_tool_envelope(round.action.call);
    } else {
      action_text = "Answer: " + round.action.answer;
    }
    messages.push_back(
        {"assistant", compose_round_text(round.summary, round.plan, action_text,
                                         round.reflection)});
    if (round.action.kind == AgentAction::Kind::kToolCall && !round.tool_error &&
        batch_i < trajectory.frame_batches.size()) {
      messages.push_back(
          {"user", render_batch(trajectory.frame_batches[batch_i], q.question)});
      ++batch_i;
    } else if (round.tool_error) {
      messages.push_back({"user", *round.tool_error});
    }
  }
  return messages;
}

}  // namespace eva
