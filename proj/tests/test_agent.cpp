#include <doctest.h>

#include "eva/agent.hpp"
#include "eva/policy.hpp"
#include "eva/serialization.hpp"
#include "eva/synthetic_video.hpp"

using namespace eva;

namespace {

GeneratorParams env_params() {
  GeneratorParams p;
  p.duration_range = {120, 160};
  p.event_count_range = {3, 5};
  p.window_len_range = {12, 24};
  p.motion_fraction = 0.0;
  return p;
}

EpisodeOptions default_opts(std::uint64_t seed = 1) {
  EpisodeOptions opts;
  opts.profile = {"qwen", 650};
  opts.seed = seed;
  return opts;
}

}  // namespace

TEST_CASE("parse_action: transcript tool envelope") {
  const std::string text =
      "Sparse sampling might give me an overview of the whole video.\n"
      "{\"tool\": \"frame_select\", \"arguments\": {\"start_time\": 0, "
      "\"end_time\": 397, \"nframes\": 10, \"resize\": 0.1}}\n";
  const ParsedAction parsed = parse_action(text);
  REQUIRE(parsed.ok());
  REQUIRE(parsed.action->kind == AgentAction::Kind::kToolCall);
  CHECK(parsed.action->call.start_time == 0);
  CHECK(parsed.action->call.end_time == 397);
  CHECK(parsed.action->call.nframes == 10);
  CHECK(parsed.action->call.resize == doctest::Approx(0.1));
}

TEST_CASE("parse_action: final answer marker") {
  const ParsedAction parsed =
      parse_action("...confirming this as the primary trigger.\nAnswer: D");
  REQUIRE(parsed.ok());
  REQUIRE(parsed.action->kind == AgentAction::Kind::kFinalAnswer);
  CHECK(parsed.action->answer == "D");
}

TEST_CASE("parse_action: neither form present") {
  const ParsedAction parsed = parse_action("I am unsure.");
  CHECK(!parsed.ok());
  CHECK(parsed.error == ParseError::kNoAction);
}

TEST_CASE("parse_action: envelope takes precedence over an answer") {
  const std::string text =
      "Answer: B\n{\"tool\": \"frame_select\", \"arguments\": {\"start_time\": 5, "
      "\"end_time\": 10, \"nframes\": 2, \"resize\": 1.0}}";
  const ParsedAction parsed = parse_action(text);
  REQUIRE(parsed.ok());
  CHECK(parsed.action->kind == AgentAction::Kind::kToolCall);
}

TEST_CASE("parse_action: malformed JSON, unknown tool, missing argument") {
  CHECK(parse_action("{\"tool\": \"frame_select\", \"arguments\": {").error ==
        ParseError::kMalformedJson);
  CHECK(parse_action("{\"tool\": \"zoom_lens\", \"arguments\": {}}").error ==
        ParseError::kUnknownTool);
  CHECK(parse_action("{\"tool\": \"frame_select\", \"arguments\": {\"start_time\": 1}}")
            .error == ParseError::kMissingArgument);
  CHECK(parse_action(
            "{\"tool\": \"frame_select\", \"arguments\": {\"start_time\": \"a\", "
            "\"end_time\": 2, \"nframes\": 1, \"resize\": 1}}")
            .error == ParseError::kMissingArgument);
}

TEST_CASE("parse_action: prose braces before the envelope do not confuse it") {
  const std::string text =
      "Sets like {1, 2} look like JSON. {\"notool\": 1} either. "
      "{\"tool\": \"frame_select\", \"arguments\": {\"start_time\": 1, \"end_time\": 9, "
      "\"nframes\": 4, \"resize\": 0.5}} done.";
  const ParsedAction parsed = parse_action(text);
  REQUIRE(parsed.ok());
  CHECK(parsed.action->call.nframes == 4);
}

TEST_CASE("render_tool_envelope round-trips through parse_action") {
  const FrameSelectCall call{12.5, 200, 32, 0.25};
  const ParsedAction parsed = parse_action(render_tool_envelope(call));
  REQUIRE(parsed.ok());
  CHECK(parsed.action->call == call);
}

TEST_CASE("run_episode: DirectDense makes one tool round then answers") {
  const SyntheticVideo video = generate_video(5, env_params());
  const QueryInstance query = generate_query(video, 9, QueryKind::kOpenEnded);
  const DirectDensePolicy policy;
  EpisodeOptions opts = default_opts();
  opts.limits.max_tokens = 200000;  // dense full-span needs headroom
  const Trajectory traj = run_episode(video, query, policy, opts);
  CHECK(traj.outcome == Outcome::kAnswered);
  CHECK(traj.rounds.size() == 2);
  CHECK(traj.frame_batches.size() == 1);
  REQUIRE(traj.final_answer.has_value());
  CHECK(*traj.final_answer == query.answer_gt);
}

TEST_CASE("run_episode: GlobalThenZoom makes two tool rounds then answers") {
  const SyntheticVideo video = generate_video(6, env_params());
  const QueryInstance query = generate_query(video, 10, QueryKind::kOpenEnded);
  const GlobalThenZoomPolicy policy;
  EpisodeOptions opts = default_opts();
  opts.limits.max_tokens = 200000;
  const Trajectory traj = run_episode(video, query, policy, opts);
  CHECK(traj.outcome == Outcome::kAnswered);
  CHECK(traj.rounds.size() == 3);
  CHECK(traj.frame_batches.size() == 2);
  CHECK(traj.final_answer.has_value());
}

namespace {

// Keeps calling the tool and never answers.
class NeverAnswersPolicy : public Policy {
 public:
  PolicyOutput act(const BeliefState& state, std::uint64_t) const override {
    PolicyOutput out;
    FrameSelectCall call{0.0, state.video_duration_s, 4, 0.25};
    out.round_text = compose_round_text("Looking again.", "One more scan.",
                                        render_tool_envelope(call), std::nullopt);
    out.action_trace = parse_action(out.round_text);
    out.summary = "Looking again.";
    out.plan = "One more scan.";
    return out;
  }
  std::string name() const override { return "never_answers"; }
};

// Emits a syntactically broken envelope.
class BrokenPolicy : public Policy {
 public:
  PolicyOutput act(const BeliefState&, std::uint64_t) const override {
    PolicyOutput out;
    out.round_text = "{\"tool\": \"frame_select\", \"arguments\": {\"start_time\": ";
    out.action_trace = parse_action(out.round_text);
    return out;
  }
  std::string name() const override { return "broken"; }
};

// First proposes an invalid window, then answers.
class InvalidCallPolicy : public Policy {
 public:
  PolicyOutput act(const BeliefState& state, std::uint64_t) const override {
    PolicyOutput out;
    if (state.round_index == 0) {
      FrameSelectCall call{50.0, 50.0, 4, 0.5};  // empty window
      out.round_text = render_tool_envelope(call);
    } else {
      out.round_text = "Answer: unknown";
    }
    out.action_trace = parse_action(out.round_text);
    return out;
  }
  std::string name() const override { return "invalid_then_answer"; }
};

}  // namespace

TEST_CASE("run_episode: round cap when the policy never answers") {
  const SyntheticVideo video = generate_video(7, env_params());
  const QueryInstance query = generate_query(video, 11, QueryKind::kOpenEnded);
  const NeverAnswersPolicy policy;
  EpisodeOptions opts = default_opts();
  opts.limits.max_rounds = 1;
  const Trajectory traj = run_episode(video, query, policy, opts);
  CHECK(traj.outcome == Outcome::kRoundCap);
  CHECK(!traj.final_answer.has_value());
  CHECK(traj.rounds.size() == 1);
}

TEST_CASE("run_episode: budget cap refuses the overflowing call") {
  const SyntheticVideo video = generate_video(8, env_params());
  const QueryInstance query = generate_query(video, 12, QueryKind::kOpenEnded);
  const NeverAnswersPolicy policy;  // each call costs 4 * ceil(650 * 0.0625) = 164
  EpisodeOptions opts = default_opts();
  opts.limits.max_rounds = 10;
  opts.limits.max_tokens = 400;  // second call would exceed
  const Trajectory traj = run_episode(video, query, policy, opts);
  CHECK(traj.outcome == Outcome::kBudgetCap);
  CHECK(traj.tokens_spent <= opts.limits.max_tokens);
  CHECK(traj.frame_batches.size() == 2);
  CHECK(traj.rounds.back().tool_error.has_value());
}

TEST_CASE("run_episode: parse failure terminates with the error recorded") {
  const SyntheticVideo video = generate_video(9, env_params());
  const QueryInstance query = generate_query(video, 13, QueryKind::kOpenEnded);
  const BrokenPolicy policy;
  const Trajectory traj = run_episode(video, query, policy, default_opts());
  CHECK(traj.outcome == Outcome::kParseFailure);
  CHECK(traj.parse_error.has_value());
  CHECK(traj.rounds.empty());
}

TEST_CASE("run_episode: invalid calls surface as error observations, episode continues") {
  const SyntheticVideo video = generate_video(10, env_params());
  const QueryInstance query = generate_query(video, 14, QueryKind::kOpenEnded);
  const InvalidCallPolicy policy;
  const Trajectory traj = run_episode(video, query, policy, default_opts());
  CHECK(traj.outcome == Outcome::kAnswered);
  CHECK(traj.rounds.size() == 2);
  CHECK(traj.rounds[0].tool_error.has_value());
  CHECK(traj.frame_batches.empty());  // the invalid call never executed
}

TEST_CASE("step: strict reflector rewrites an over-dense call before execution") {
  const SyntheticVideo video = generate_video(12, env_params());
  const QueryInstance query = generate_query(video, 15, QueryKind::kOpenEnded);
  const OverDensePolicy policy;  // proposes fps 2 on a short window
  EpisodeOptions opts = default_opts();
  opts.reflector = ReflectorMode::kStrict;
  EpisodeRunner runner(video, query, policy, opts);
  const auto round = runner.step();
  REQUIRE(round.has_value());
  REQUIRE(round->reflection_audit.has_value());
  CHECK(round->reflection_audit->corrected());
  const FrameSelectCall& executed = runner.state().batches.back().call;
  CHECK(call_fps(executed) <= 1.0 + 1e-9);
}

TEST_CASE("run_episode: replay determinism, identical JSONL line") {
  const SyntheticVideo video = generate_video(13, env_params());
  const QueryInstance query = generate_query(video, 16, QueryKind::kMultipleChoice);
  auto policy = make_random_policy();
  EpisodeOptions opts = default_opts(77);
  const Trajectory a = run_episode(video, query, *policy, opts);
  const Trajectory b = run_episode(video, query, *policy, opts);
  CHECK(trajectory_to_json(a).dump() == trajectory_to_json(b).dump());
}

TEST_CASE("history fidelity: every observation is referenced by exactly one item") {
  const SyntheticVideo video = generate_video(14, env_params());
  const QueryInstance query = generate_query(video, 17, QueryKind::kOpenEnded);
  const GlobalThenZoomPolicy policy;
  EpisodeOptions opts = default_opts();
  opts.limits.max_tokens = 200000;
  EpisodeRunner runner(video, query, policy, opts);
  while (!runner.done()) runner.step();
  const BeliefState& state = runner.state();

  std::size_t total_from_batches = 0;
  std::vector<int> referenced;
  for (const HistoryItem& item : state.h) {
    if (item.kind == HistoryItem::Kind::kFrames) referenced.push_back(item.batch_index);
  }
  CHECK(referenced.size() == state.batches.size());
  for (std::size_t i = 0; i < state.batches.size(); ++i) {
    CHECK(referenced[i] == static_cast<int>(i));
    total_from_batches += state.batches[i].observations.size();
  }
  CHECK(total_from_batches == state.frames.size());
}

TEST_CASE("belief state starts with only the query") {
  const SyntheticVideo video = generate_video(15, env_params());
  const QueryInstance query = generate_query(video, 18, QueryKind::kOpenEnded);
  const DirectDensePolicy policy;
  EpisodeRunner runner(video, query, policy, default_opts());
  const BeliefState& state = runner.state();
  CHECK(state.round_index == 0);
  REQUIRE(state.h.size() == 1);
  CHECK(state.h[0].kind == HistoryItem::Kind::kText);
  CHECK(state.h[0].text == query.question);
  CHECK(state.frames.empty());
  CHECK(state.tokens_spent == 0);
}

TEST_CASE("trajectory serialization round-trips") {
  const SyntheticVideo video = generate_video(16, env_params());
  const QueryInstance query = generate_query(video, 19, QueryKind::kMultipleChoice);
  const GlobalThenZoomPolicy policy;
  EpisodeOptions opts = default_opts(3);
  opts.limits.max_tokens = 200000;
  opts.reflector = ReflectorMode::kLenient;
  const Trajectory traj = run_episode(video, query, policy, opts);
  const Trajectory back = trajectory_from_json(trajectory_to_json(traj));
  CHECK(trajectory_to_json(back).dump() == trajectory_to_json(traj).dump());
}

TEST_CASE("transcript mirrors the dialogue structure") {
  const SyntheticVideo video = generate_video(17, env_params());
  const QueryInstance query = generate_query(video, 20, QueryKind::kOpenEnded);
  const DirectDensePolicy policy;
  EpisodeOptions opts = default_opts();
  opts.limits.max_tokens = 200000;
  const Trajectory traj = run_episode(video, query, policy, opts);
  const std::vector<ChatMessage> messages = render_transcript(traj);
  REQUIRE(messages.size() >= 4);
  CHECK(messages[0].role == "system");
  CHECK(messages[1].role == "user");
  CHECK(messages[1].content.find("Video Length:") == 0);
  CHECK(messages[2].role == "assistant");
  CHECK(messages[3].role == "user");
  CHECK(messages[3].content.find("frame selection tool") != std::string::npos);
  CHECK(messages.back().role == "assistant");
  CHECK(messages.back().content.find("Answer:") != std::string::npos);
}
