#include "eva/serialization.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace eva {

namespace {

[[noreturn]] void bad_enum(const char* what, const std::string& value) {
  throw ConfigError(std::string("unknown ") + what + ": " + value);
}

}  // namespace

std::string to_string(EventKind k) {
  return k == EventKind::kStatic ? "static" : "motion";
}
EventKind event_kind_from(const std::string& s) {
  if (s == "static") return EventKind::kStatic;
  if (s == "motion") return EventKind::kMotion;
  bad_enum("event kind", s);
}

std::string to_string(QueryKind k) {
  return k == QueryKind::kOpenEnded ? "open_ended" : "multiple_choice";
}
QueryKind query_kind_from(const std::string& s) {
  if (s == "open_ended") return QueryKind::kOpenEnded;
  if (s == "multiple_choice") return QueryKind::kMultipleChoice;
  bad_enum("query kind", s);
}

std::string to_string(QueryTask t) {
  switch (t) {
    case QueryTask::kIdentification: return "identification";
    case QueryTask::kWindow: return "window";
    case QueryTask::kCounting: return "counting";
    case QueryTask::kOrdering: return "ordering";
  }
  return "?";
}
QueryTask query_task_from(const std::string& s) {
  if (s == "identification") return QueryTask::kIdentification;
  if (s == "window") return QueryTask::kWindow;
  if (s == "counting") return QueryTask::kCounting;
  if (s == "ordering") return QueryTask::kOrdering;
  bad_enum("query task", s);
}

std::string to_string(Outcome o) { return outcome_name(o); }
Outcome outcome_from(const std::string& s) {
  if (s == "answered") return Outcome::kAnswered;
  if (s == "round_cap") return Outcome::kRoundCap;
  if (s == "budget_cap") return Outcome::kBudgetCap;
  if (s == "parse_failure") return Outcome::kParseFailure;
  bad_enum("outcome", s);
}

std::string to_string(RewardKind k) { return k == RewardKind::kCsv ? "csv" : "rouge"; }
RewardKind reward_kind_from(const std::string& s) {
  if (s == "csv") return RewardKind::kCsv;
  if (s == "rouge") return RewardKind::kRouge;
  bad_enum("reward kind", s);
}

std::string to_string(ReflectorMode m) {
  return m == ReflectorMode::kStrict ? "strict" : "lenient";
}
ReflectorMode reflector_mode_from(const std::string& s) {
  if (s == "strict") return ReflectorMode::kStrict;
  if (s == "lenient") return ReflectorMode::kLenient;
  bad_enum("reflector mode", s);
}

// ---------------------------------------------------------------------------
// Environment types
// ---------------------------------------------------------------------------

Json to_json(const TimeWindow& w) {
  return Json{{"start_s", w.start_s}, {"end_s", w.end_s}};
}
TimeWindow time_window_from(const Json& j) {
  return TimeWindow{j.at("start_s").get<double>(), j.at("end_s").get<double>()};
}

Json to_json(const Event& e) {
  return Json{{"id", e.id},
              {"window", to_json(e.window)},
              {"label", e.label},
              {"min_resize", e.min_resize},
              {"min_density_fps", e.min_density_fps},
              {"kind", to_string(e.kind)}};
}
Event event_from(const Json& j) {
  Event e;
  e.id = j.at("id").get<int>();
  e.window = time_window_from(j.at("window"));
  e.label = j.at("label").get<std::string>();
  e.min_resize = j.at("min_resize").get<double>();
  e.min_density_fps = j.at("min_density_fps").get<double>();
  e.kind = event_kind_from(j.at("kind").get<std::string>());
  return e;
}

Json to_json(const SyntheticVideo& v) {
  Json events = Json::array();
  for (const Event& e : v.events) events.push_back(to_json(e));
  return Json{{"id", v.id},
              {"duration_s", v.duration_s},
              {"native_resolution", Json{{"width_px", v.width_px}, {"height_px", v.height_px}}},
              {"events", events},
              {"seed", v.seed}};
}
SyntheticVideo video_from(const Json& j) {
  SyntheticVideo v;
  v.id = j.at("id").get<std::string>();
  v.duration_s = j.at("duration_s").get<double>();
  v.width_px = j.at("native_resolution").at("width_px").get<int>();
  v.height_px = j.at("native_resolution").at("height_px").get<int>();
  for (const Json& e : j.at("events")) v.events.push_back(event_from(e));
  v.seed = j.at("seed").get<std::uint64_t>();
  return v;
}

Json to_json(const Choice& c) {
  return Json{{"letter", std::string(1, c.letter)}, {"text", c.text}};
}

Json to_json(const QueryInstance& q) {
  Json choices = Json::array();
  for (const Choice& c : q.choices) choices.push_back(to_json(c));
  Json windows = Json::array();
  for (const TimeWindow& w : q.evidence_windows) windows.push_back(to_json(w));
  Json task_params;
  switch (q.task) {
    case QueryTask::kIdentification: task_params["at_s"] = q.at_s; break;
    case QueryTask::kWindow: task_params["window"] = to_json(q.ask_window); break;
    case QueryTask::kCounting: task_params["target_label"] = q.target_label; break;
    case QueryTask::kOrdering: task_params["position"] = q.ask_last ? "last" : "first"; break;
  }
  return Json{{"video_id", q.video_id},
              {"question", q.question},
              {"answer_gt", q.answer_gt},
              {"query_kind", to_string(q.query_kind)},
              {"choices", choices},
              {"evidence_windows", windows},
              {"task", to_string(q.task)},
              {"task_params", task_params}};
}
QueryInstance query_from(const Json& j) {
  QueryInstance q;
  q.video_id = j.value("video_id", std::string{});
  q.question = j.at("question").get<std::string>();
  q.answer_gt = j.at("answer_gt").get<std::string>();
  q.query_kind = query_kind_from(j.at("query_kind").get<std::string>());
  for (const Json& c : j.at("choices")) {
    q.choices.push_back(Choice{c.at("letter").get<std::string>().at(0),
                               c.at("text").get<std::string>()});
  }
  for (const Json& w : j.at("evidence_windows")) {
    q.evidence_windows.push_back(time_window_from(w));
  }
  q.task = query_task_from(j.at("task").get<std::string>());
  const Json& params = j.at("task_params");
  switch (q.task) {
    case QueryTask::kIdentification: q.at_s = params.at("at_s").get<double>(); break;
    case QueryTask::kWindow: q.ask_window = time_window_from(params.at("window")); break;
    case QueryTask::kCounting:
      q.target_label = params.at("target_label").get<std::string>();
      break;
    case QueryTask::kOrdering:
      q.ask_last = params.at("position").get<std::string>() == "last";
      break;
  }
  return q;
}

Json to_json(const FrameObservation& o) {
  return Json{{"timestamp_s", o.timestamp_s}, {"labels", o.labels}};
}
FrameObservation observation_from(const Json& j) {
  FrameObservation o;
  o.timestamp_s = j.at("timestamp_s").get<double>();
  o.labels = j.at("labels").get<std::vector<std::string>>();
  return o;
}

// ---------------------------------------------------------------------------
// Tool types
// ---------------------------------------------------------------------------

Json to_json(const FrameSelectCall& c) {
  return Json{{"start_time", c.start_time},
              {"end_time", c.end_time},
              {"nframes", c.nframes},
              {"resize", c.resize}};
}
FrameSelectCall call_from(const Json& j) {
  FrameSelectCall c;
  c.start_time = j.at("start_time").get<double>();
  c.end_time = j.at("end_time").get<double>();
  c.nframes = j.at("nframes").get<int>();
  c.resize = j.at("resize").get<double>();
  return c;
}

Json to_json(const FrameBatch& b) {
  Json observations = Json::array();
  for (const FrameObservation& o : b.observations) observations.push_back(to_json(o));
  return Json{{"call", to_json(b.call)},
              {"timestamps", b.timestamps},
              {"observations", observations},
              {"fps", b.fps},
              {"visual_budget", b.visual_budget},
              {"token_cost", b.token_cost}};
}
FrameBatch batch_from(const Json& j) {
  FrameBatch b;
  b.call = call_from(j.at("call"));
  b.timestamps = j.at("timestamps").get<std::vector<double>>();
  for (const Json& o : j.at("observations")) b.observations.push_back(observation_from(o));
  b.fps = j.at("fps").get<double>();
  b.visual_budget = j.at("visual_budget").get<double>();
  b.token_cost = j.at("token_cost").get<std::int64_t>();
  return b;
}

Json to_json(const Verdict& v) {
  Json rules = Json::array();
  for (RuleId r : v.triggered_rules) rules.push_back(rule_name(r));
  Json j{{"decision", v.corrected() ? "corrected" : "no_change"},
         {"triggered_rules", rules},
         {"rationale", v.rationale}};
  if (v.corrected_call) j["corrected_call"] = to_json(*v.corrected_call);
  return j;
}
Verdict verdict_from(const Json& j) {
  Verdict v;
  v.decision = j.at("decision").get<std::string>() == "corrected"
                   ? Verdict::Decision::kCorrected
                   : Verdict::Decision::kNoChange;
  for (const Json& r : j.at("triggered_rules")) {
    const std::string name = r.get<std::string>();
    if (name == "R1") v.triggered_rules.push_back(RuleId::kR1AggressiveGlobalRescan);
    else if (name == "R2b") v.triggered_rules.push_back(RuleId::kR2bNoRepeatDenseSampling);
    else if (name == "R3") v.triggered_rules.push_back(RuleId::kR3MinVisualBudget);
    else if (name == "R4") v.triggered_rules.push_back(RuleId::kR4FpsCap);
    else bad_enum("rule id", name);
  }
  v.rationale = j.at("rationale").get<std::string>();
  if (j.contains("corrected_call")) v.corrected_call = call_from(j.at("corrected_call"));
  return v;
}

Json to_json(const AgentAction& a) {
  if (a.kind == AgentAction::Kind::kToolCall) {
    return Json{{"kind", "tool_call"}, {"call", to_json(a.call)}};
  }
  return Json{{"kind", "final_answer"}, {"answer", a.answer}};
}
AgentAction action_from(const Json& j) {
  if (j.at("kind").get<std::string>() == "tool_call") {
    return AgentAction::tool(call_from(j.at("call")));
  }
  return AgentAction::final(j.at("answer").get<std::string>());
}

Json to_json(const Round& r) {
  Json j{{"summary", r.summary}, {"plan", r.plan}, {"action", to_json(r.action)}};
  if (r.reflection) j["reflection"] = *r.reflection;
  if (r.reflection_audit) j["reflection_audit"] = to_json(*r.reflection_audit);
  if (r.tool_error) j["tool_error"] = *r.tool_error;
  return j;
}
Round round_from(const Json& j) {
  Round r;
  r.summary = j.at("summary").get<std::string>();
  r.plan = j.at("plan").get<std::string>();
  r.action = action_from(j.at("action"));
  if (j.contains("reflection")) r.reflection = j.at("reflection").get<std::string>();
  if (j.contains("reflection_audit")) r.reflection_audit = verdict_from(j.at("reflection_audit"));
  if (j.contains("tool_error")) r.tool_error = j.at("tool_error").get<std::string>();
  return r;
}

Json to_json(const EpisodeLimits& l) {
  return Json{{"max_rounds", l.max_rounds}, {"max_tokens", l.max_tokens}};
}
EpisodeLimits limits_from(const Json& j) {
  return EpisodeLimits{j.at("max_rounds").get<int>(), j.at("max_tokens").get<std::int64_t>()};
}

Json to_json(const RewardBreakdown& r) {
  return Json{{"r_acc", r.r_acc},
              {"r_fmt", r.r_fmt},
              {"total", r.total},
              {"kind", to_string(r.kind)},
              {"w_acc", r.w_acc},
              {"w_fmt", r.w_fmt},
              {"judge_no_frames", r.judge_no_frames},
              {"judge_answer", r.judge_answer}};
}
RewardBreakdown reward_from(const Json& j) {
  RewardBreakdown r;
  r.r_acc = j.at("r_acc").get<double>();
  r.r_fmt = j.at("r_fmt").get<double>();
  r.total = j.at("total").get<double>();
  r.kind = reward_kind_from(j.at("kind").get<std::string>());
  r.w_acc = j.at("w_acc").get<double>();
  r.w_fmt = j.at("w_fmt").get<double>();
  r.judge_no_frames = j.at("judge_no_frames").get<bool>();
  r.judge_answer = j.at("judge_answer").get<std::string>();
  return r;
}

Json to_json(const GeneratorParams& p) {
  return Json{{"duration_range", Json::array({p.duration_range.first, p.duration_range.second})},
              {"event_count_range",
               Json::array({p.event_count_range.first, p.event_count_range.second})},
              {"window_len_range",
               Json::array({p.window_len_range.first, p.window_len_range.second})},
              {"min_gap_s", p.min_gap_s},
              {"same_label_gap_s", p.same_label_gap_s},
              {"motion_fraction", p.motion_fraction},
              {"resize_grid", p.resize_grid},
              {"density_grid", p.density_grid},
              {"resolution_p", p.resolution_p},
              {"labels", p.labels}};
}

Json to_json(const QueryGenParams& p) {
  return Json{{"mcq_choices", p.mcq_choices},
              {"w_identification", p.w_identification},
              {"w_window", p.w_window},
              {"w_counting", p.w_counting},
              {"w_ordering", p.w_ordering}};
}

Json to_json(const DiscreteActionSpace& s) {
  Json windows = Json::array();
  for (const WindowFraction& w : s.window_grid) {
    windows.push_back(Json::array({w.start_frac, w.end_frac}));
  }
  return Json{{"window_grid", windows},
              {"nframes_set", s.nframes_set},
              {"resize_set", s.resize_set},
              {"answer_slots", s.answer_slots}};
}
DiscreteActionSpace action_space_from(const Json& j) {
  DiscreteActionSpace s;
  s.window_grid.clear();
  for (const Json& w : j.at("window_grid")) {
    s.window_grid.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
  }
  s.nframes_set = j.at("nframes_set").get<std::vector<int>>();
  s.resize_set = j.at("resize_set").get<std::vector<double>>();
  s.answer_slots = j.at("answer_slots").get<int>();
  return s;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

Json trajectory_to_json(const Trajectory& t, const RewardBreakdown* reward) {
  Json rounds = Json::array();
  for (const Round& r : t.rounds) rounds.push_back(to_json(r));
  Json batches = Json::array();
  for (const FrameBatch& b : t.frame_batches) batches.push_back(to_json(b));
  Json j{{"schema_version", t.schema_version},
         {"video_id", t.video_id},
         {"video_duration_s", t.video_duration_s},
         {"episode_seed", t.episode_seed},
         {"policy", t.policy_name},
         {"config_hash", t.config_hash},
         {"query", to_json(t.query)},
         {"rounds", rounds},
         {"frame_batches", batches},
         {"limits", to_json(t.limits)},
         {"outcome", to_string(t.outcome)},
         {"tokens_spent", t.tokens_spent}};
  if (t.final_answer) j["final_answer"] = *t.final_answer;
  if (t.parse_error) j["parse_error"] = *t.parse_error;
  if (reward) j["reward"] = to_json(*reward);
  return j;
}

Trajectory trajectory_from_json(const Json& j, std::optional<RewardBreakdown>* reward_out) {
  Trajectory t;
  t.schema_version = j.at("schema_version").get<int>();
  t.video_id = j.at("video_id").get<std::string>();
  t.video_duration_s = j.at("video_duration_s").get<double>();
  t.episode_seed = j.at("episode_seed").get<std::uint64_t>();
  t.policy_name = j.at("policy").get<std::string>();
  t.config_hash = j.at("config_hash").get<std::string>();
  t.query = query_from(j.at("query"));
  for (const Json& r : j.at("rounds")) t.rounds.push_back(round_from(r));
  for (const Json& b : j.at("frame_batches")) t.frame_batches.push_back(batch_from(b));
  t.limits = limits_from(j.at("limits"));
  t.outcome = outcome_from(j.at("outcome").get<std::string>());
  t.tokens_spent = j.at("tokens_spent").get<std::int64_t>();
  if (j.contains("final_answer")) t.final_answer = j.at("final_answer").get<std::string>();
  if (j.contains("parse_error")) t.parse_error = j.at("parse_error").get<std::string>();
  if (reward_out) {
    if (j.contains("reward")) {
      *reward_out = reward_from(j.at("reward"));
    } else {
      reward_out->reset();
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

Json checkpoint_to_json(const ToyPolicyParams& params, const DiscreteActionSpace& space,
                        const CheckpointMeta& meta) {
  return Json{{"format", "eva-theta-v1"},
              {"n_actions", params.n_actions},
              {"n_features", kFeatureCount},
              {"theta", params.theta},
              {"action_space", to_json(space)},
              {"metadata", Json{{"stage", meta.stage},
                                 {"step", meta.step},
                                 {"seed", meta.seed},
                                 {"config_hash", meta.config_hash}}}};
}

ToyPolicyParams checkpoint_from_json(const Json& j, DiscreteActionSpace* space_out,
                                     CheckpointMeta* meta_out) {
  if (j.value("format", std::string{}) != "eva-theta-v1") {
    throw ConfigError("not a theta checkpoint");
  }
  ToyPolicyParams params;
  params.n_actions = j.at("n_actions").get<int>();
  params.theta = j.at("theta").get<std::vector<double>>();
  if (params.theta.size() !=
      static_cast<std::size_t>(params.n_actions) * kFeatureCount) {
    throw ConfigError("theta size does not match n_actions");
  }
  if (space_out) *space_out = action_space_from(j.at("action_space"));
  if (meta_out) {
    const Json& m = j.at("metadata");
    meta_out->stage = m.at("stage").get<std::string>();
    meta_out->step = m.at("step").get<int>();
    meta_out->seed = m.at("seed").get<std::uint64_t>();
    meta_out->config_hash = m.at("config_hash").get<std::string>();
  }
  return params;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvaError("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw EvaError("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, target);
}

void append_jsonl(const std::string& path, const Json& line) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw EvaError("cannot append to " + path);
  out << line.dump() << "\n";
}

void write_jsonl(const std::string& path, const std::vector<Json>& lines) {
  std::ostringstream os;
  for (const Json& line : lines) os << line.dump() << "\n";
  write_text_file_atomic(path, os.str());
}

std::vector<Json> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvaError("cannot read " + path);
  std::vector<Json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(Json::parse(line));
  }
  return out;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << hash;
  return os.str();
}

}  // namespace eva
