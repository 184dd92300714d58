#include "eva/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "eva/evidence.hpp"
#include "eva/rng.hpp"

namespace eva {

namespace {

PolicyOutput make_output(const std::string& summary, const std::string& plan,
                         const AgentAction& action,
                         const std::optional<std::string>& reflection,
                         std::optional<double> logprob = std::nullopt) {
  const std::string action_text = action.kind == AgentAction::Kind::kToolCall
                                      ? render_tool_envelope(action.call)
                                      : "Answer: " + action.answer;
  PolicyOutput out;
  out.round_text = compose_round_text(summary, plan, action_text, reflection);
  out.action_trace = parse_action(out.round_text);
  out.summary = summary;
  out.plan = plan;
  out.reflection = reflection;
  out.logprob = logprob;
  return out;
}

std::string describe_evidence(const BeliefState& state) {
  if (state.batches.empty()) return "No visual evidence gathered yet.";
  std::set<std::string> labels;
  for (const FrameObservation& obs : state.frames) {
    labels.insert(obs.labels.begin(), obs.labels.end());
  }
  std::ostringstream os;
  os << "Observed " << state.frames.size() << " frames across " << state.batches.size()
     << " tool calls; " << labels.size() << " distinct events visible";
  if (!labels.empty()) {
    os << ":";
    for (const std::string& l : labels) os << " " << l;
  }
  os << ".";
  return os.str();
}

// How many frames the remaining token budget affords at this resize.
int budget_frames(const BeliefState& state, double resize) {
  const double per_frame = std::ceil(
      static_cast<double>(state.token_profile.base_tokens_per_frame) * resize * resize);
  const std::int64_t remaining = state.limits.max_tokens - state.tokens_spent;
  if (per_frame <= 0.0 || remaining <= 0) return 1;
  return std::max(1, static_cast<int>(remaining / static_cast<std::int64_t>(per_frame)));
}

int fps_cap(double start, double end) {
  return std::max(1, static_cast<int>(std::floor(end - start)));
}

FrameSelectCall dense_full_span(const BeliefState& state) {
  FrameSelectCall call;
  call.start_time = 0.0;
  call.end_time = state.video_duration_s;
  call.nframes = std::min(fps_cap(0.0, state.video_duration_s), budget_frames(state, 1.0));
  call.resize = 1.0;
  return call;
}

const std::string kZoomReflection =
    "If this call returns nothing useful, widen or densify the next scan.";

}  // namespace

// ---------------------------------------------------------------------------
// Discrete action space
// ---------------------------------------------------------------------------

DiscreteActionSpace DiscreteActionSpace::default_space() {
  DiscreteActionSpace space;
  space.window_grid.push_back({0.0, 1.0});
  for (int i = 0; i < 4; ++i) {
    space.window_grid.push_back({i / 4.0, (i + 1) / 4.0});
  }
  for (int i = 0; i < 8; ++i) {
    space.window_grid.push_back({i / 8.0, (i + 1) / 8.0});
  }
  return space;
}

int DiscreteActionSpace::call_index(int window_i, int nframes_i, int resize_i) const {
  return (window_i * static_cast<int>(nframes_set.size()) + nframes_i) *
             static_cast<int>(resize_set.size()) +
         resize_i;
}

FrameSelectCall DiscreteActionSpace::call_at(int action, double duration_s) const {
  const int nr = static_cast<int>(resize_set.size());
  const int nn = static_cast<int>(nframes_set.size());
  const int ri = action % nr;
  const int ni = (action / nr) % nn;
  const int wi = action / (nr * nn);
  const WindowFraction& w = window_grid[static_cast<std::size_t>(wi)];
  FrameSelectCall call;
  call.start_time = w.start_frac * duration_s;
  call.end_time = w.end_frac * duration_s;
  call.nframes = nframes_set[static_cast<std::size_t>(ni)];
  call.resize = resize_set[static_cast<std::size_t>(ri)];
  return call;
}

int DiscreteActionSpace::snap_call(const FrameSelectCall& call, double duration_s) const {
  int best_w = 0;
  double best_wd = 1e300;
  for (std::size_t i = 0; i < window_grid.size(); ++i) {
    const double d = std::abs(window_grid[i].start_frac * duration_s - call.start_time) +
                     std::abs(window_grid[i].end_frac * duration_s - call.end_time);
    if (d < best_wd) {
      best_wd = d;
      best_w = static_cast<int>(i);
    }
  }
  int best_n = 0;
  double best_nd = 1e300;
  for (std::size_t i = 0; i < nframes_set.size(); ++i) {
    const double d = std::abs(static_cast<double>(nframes_set[i] - call.nframes));
    if (d < best_nd) {
      best_nd = d;
      best_n = static_cast<int>(i);
    }
  }
  int best_r = 0;
  double best_rd = 1e300;
  for (std::size_t i = 0; i < resize_set.size(); ++i) {
    const double d = std::abs(resize_set[i] - call.resize);
    if (d < best_rd) {
      best_rd = d;
      best_r = static_cast<int>(i);
    }
  }
  return call_index(best_w, best_n, best_r);
}

// ---------------------------------------------------------------------------
// Toy parametric policy
// ---------------------------------------------------------------------------

Features state_features(const BeliefState& state) {
  Features f{};
  f[0] = state.limits.max_rounds > 0
             ? static_cast<double>(state.round_index) / state.limits.max_rounds
             : 0.0;
  // Fraction of the duration covered by executed calls (interval union).
  std::vector<std::pair<double, double>> spans;
  for (const FrameBatch& b : state.batches) {
    spans.emplace_back(b.call.start_time, b.call.end_time);
  }
  std::sort(spans.begin(), spans.end());
  double covered = 0.0;
  double cur_lo = 0.0, cur_hi = -1.0;
  for (const auto& [lo, hi] : spans) {
    if (hi <= cur_hi) continue;
    if (lo > cur_hi) {
      if (cur_hi > cur_lo) covered += cur_hi - cur_lo;
      cur_lo = lo;
    }
    cur_hi = hi;
  }
  if (cur_hi > cur_lo) covered += cur_hi - cur_lo;
  f[1] = state.video_duration_s > 0 ? std::min(1.0, covered / state.video_duration_s) : 0.0;
  std::set<std::string> labels;
  for (const FrameObservation& obs : state.frames) {
    labels.insert(obs.labels.begin(), obs.labels.end());
  }
  f[2] = std::min(1.0, static_cast<double>(labels.size()) / 8.0);
  f[3] = state.limits.max_tokens > 0
             ? std::clamp(static_cast<double>(state.limits.max_tokens - state.tokens_spent) /
                              static_cast<double>(state.limits.max_tokens),
                          0.0, 1.0)
             : 1.0;
  f[4] = state.prev_found_info ? 1.0 : 0.0;
  return f;
}

ToyPolicyParams ToyPolicyParams::zeros(int n_actions) {
  ToyPolicyParams p;
  p.n_actions = n_actions;
  p.theta.assign(static_cast<std::size_t>(kFeatureCount) * n_actions, 0.0);
  return p;
}

std::vector<double> action_logits(const ToyPolicyParams& params, const Features& f) {
  std::vector<double> logits(static_cast<std::size_t>(params.n_actions), 0.0);
  for (int feat = 0; feat < kFeatureCount; ++feat) {
    const double x = f[static_cast<std::size_t>(feat)];
    if (x == 0.0) continue;
    const double* row = params.theta.data() + static_cast<std::size_t>(feat) * params.n_actions;
    for (int a = 0; a < params.n_actions; ++a) logits[static_cast<std::size_t>(a)] += x * row[a];
  }
  return logits;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

LogProbGrad logprob_and_grad(const ToyPolicyParams& params, const Features& features,
                             int action) {
  if (action < 0 || action >= params.n_actions) {
    throw ActionNotInSpace("action index " + std::to_string(action) +
                           " outside space of size " + std::to_string(params.n_actions));
  }
  const std::vector<double> logits = action_logits(params, features);
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  const double logz = m + std::log(z);

  LogProbGrad out;
  out.logprob = logits[static_cast<std::size_t>(action)] - logz;
  out.grad.assign(params.theta.size(), 0.0);
  for (int feat = 0; feat < kFeatureCount; ++feat) {
    const double x = features[static_cast<std::size_t>(feat)];
    if (x == 0.0) continue;
    double* row = out.grad.data() + static_cast<std::size_t>(feat) * params.n_actions;
    for (int a = 0; a < params.n_actions; ++a) {
      const double p = std::exp(logits[static_cast<std::size_t>(a)] - logz);
      row[a] = x * ((a == action ? 1.0 : 0.0) - p);
    }
  }
  return out;
}

double policy_entropy(const ToyPolicyParams& params, const Features& features) {
  const std::vector<double> p = softmax(action_logits(params, features));
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

ToyPolicy::ToyPolicy(DiscreteActionSpace space, ToyPolicyParams params, std::string name)
    : space_(std::move(space)), params_(std::move(params)), name_(std::move(name)) {
  if (params_.n_actions != space_.size()) {
    throw ActionNotInSpace("theta shape does not match the action space");
  }
}

PolicyOutput ToyPolicy::act(const BeliefState& state, std::uint64_t seed) const {
  return act_traced(state, seed, nullptr);
}

PolicyOutput ToyPolicy::act_traced(const BeliefState& state, std::uint64_t seed,
                                   int* action_index) const {
  const Features f = state_features(state);
  const std::vector<double> probs = softmax(action_logits(params_, f));

  Rng rng(mix_seed(seed, 0x70f1ULL));
  const double u = rng.next_real();
  int action = params_.n_actions - 1;
  double acc = 0.0;
  for (int a = 0; a < params_.n_actions; ++a) {
    acc += probs[static_cast<std::size_t>(a)];
    if (u < acc) {
      action = a;
      break;
    }
  }
  if (action_index) *action_index = action;
  const double logprob = std::log(std::max(probs[static_cast<std::size_t>(action)], 1e-300));

  const std::string summary = describe_evidence(state);
  if (space_.is_answer(action)) {
    std::string answer = "unknown";
    if (state.query) {
      const std::vector<std::string> ranked = ranked_answers(
          *state.query, extract_runs(state.batches), space_.answer_slots);
      answer = ranked[static_cast<std::size_t>(space_.slot_of(action))];
    }
    return make_output(summary, "The gathered evidence settles the question; answering now.",
                       AgentAction::final(answer), std::nullopt, logprob);
  }
  const FrameSelectCall call = space_.call_at(action, state.video_duration_s);
  std::ostringstream plan;
  plan << "Inspect " << call.start_time << "s to " << call.end_time << "s with "
       << call.nframes << " frames at resize " << call.resize << ".";
  return make_output(summary, plan.str(), AgentAction::tool(call), kZoomReflection, logprob);
}

std::unique_ptr<ToyPolicy> make_random_policy() {
  DiscreteActionSpace space = DiscreteActionSpace::default_space();
  ToyPolicyParams params = ToyPolicyParams::zeros(space.size());
  return std::make_unique<ToyPolicy>(std::move(space), std::move(params), "random");
}

// ---------------------------------------------------------------------------
// Scripted policies
// ---------------------------------------------------------------------------

namespace {

AgentAction answer_from_evidence(const BeliefState& state) {
  if (!state.query) return AgentAction::final("unknown");
  const std::vector<EvidenceRun> runs = extract_runs(state.batches);
  std::string text = best_answer(*state.query, runs);
  if (state.query->query_kind == QueryKind::kMultipleChoice) {
    for (const Choice& c : state.query->choices) {
      if (c.text == text) return AgentAction::final(std::string(1, c.letter));
    }
    return AgentAction::final("A");
  }
  return AgentAction::final(text);
}

PolicyOutput answer_round(const BeliefState& state) {
  return make_output(describe_evidence(state),
                     "The gathered evidence settles the question; answering now.",
                     answer_from_evidence(state), std::nullopt);
}

}  // namespace

PolicyOutput GlobalThenZoomPolicy::act(const BeliefState& state, std::uint64_t) const {
  const double duration = state.video_duration_s;
  if (state.round_index == 0) {
    FrameSelectCall call;
    call.start_time = 0.0;
    call.end_time = duration;
    call.nframes = std::min({std::max(4, static_cast<int>(std::llround(duration * 0.25))),
                             64, fps_cap(0.0, duration), budget_frames(state, 0.25)});
    call.resize = 0.25;
    return make_output(
        "No visual evidence gathered yet.",
        "Scan the whole video at low resolution first to build an overview without "
        "spending many visual tokens.",
        AgentAction::tool(call), kZoomReflection);
  }
  if (state.round_index == 1) {
    const QueryTask task = state.query ? state.query->task : QueryTask::kIdentification;
    if (task == QueryTask::kCounting || task == QueryTask::kOrdering) {
      return make_output(describe_evidence(state),
                         "The question needs full coverage; sample the whole video "
                         "densely at full resolution.",
                         AgentAction::tool(dense_full_span(state)), kZoomReflection);
    }
    // Zoom on the evidence run near the asked region; fall back to the asked
    // region itself when the scan saw nothing there.
    double lo = 0.0, hi = duration;
    if (state.query) {
      if (task == QueryTask::kIdentification) {
        lo = state.query->at_s - 15.0;
        hi = state.query->at_s + 15.0;
      } else {
        lo = state.query->ask_window.start_s - 2.0;
        hi = state.query->ask_window.end_s + 2.0;
      }
    }
    const std::vector<EvidenceRun> runs = extract_runs(state.batches);
    for (const EvidenceRun& run : runs) {
      if (run.last_s >= lo && run.first_s <= hi) {
        lo = std::min(lo, run.first_s - 3.0);
        hi = std::max(hi, run.last_s + 3.0);
        break;
      }
    }
    FrameSelectCall call;
    call.start_time = std::max(0.0, std::floor(lo));
    call.end_time = std::min(duration, std::ceil(hi));
    if (call.end_time - call.start_time < 8.0) {
      call.end_time = std::min(duration, call.start_time + 8.0);
      call.start_time = std::max(0.0, call.end_time - 8.0);
    }
    call.nframes = std::min(fps_cap(call.start_time, call.end_time),
                            budget_frames(state, 1.0));
    call.resize = 1.0;
    std::ostringstream plan;
    plan << "Zoom into " << call.start_time << "s to " << call.end_time
         << "s at full resolution to confirm the details.";
    return make_output(describe_evidence(state), plan.str(), AgentAction::tool(call),
                       kZoomReflection);
  }
  return answer_round(state);
}

PolicyOutput DirectDensePolicy::act(const BeliefState& state, std::uint64_t) const {
  if (state.round_index == 0) {
    return make_output(
        "No visual evidence gathered yet.",
        "The question needs broad, detailed coverage; sample the full video densely "
        "at high resolution.",
        AgentAction::tool(dense_full_span(state)), kZoomReflection);
  }
  return answer_round(state);
}

PolicyOutput ScanThenAnswerPolicy::act(const BeliefState& state, std::uint64_t) const {
  if (state.round_index == 0) {
    FrameSelectCall call;
    call.start_time = 0.0;
    call.end_time = state.video_duration_s;
    call.nframes = std::min({32, fps_cap(0.0, state.video_duration_s),
                             budget_frames(state, scan_resize_)});
    call.resize = scan_resize_;
    return make_output("No visual evidence gathered yet.",
                       "One moderate full-span scan should reveal what the question "
                       "asks about.",
                       AgentAction::tool(call), kZoomReflection);
  }
  return answer_round(state);
}

PolicyOutput AnswerFirstPolicy::act(const BeliefState& state, std::uint64_t) const {
  return make_output("No visual evidence gathered yet.",
                     "The answer seems clear enough without looking at the video.",
                     answer_from_evidence(state), std::nullopt);
}

PolicyOutput OverDensePolicy::act(const BeliefState& state, std::uint64_t) const {
  if (state.round_index == 0) {
    const double duration = state.video_duration_s;
    FrameSelectCall call;
    call.start_time = std::floor(duration * 3.0 / 8.0);
    call.end_time = std::min(duration, call.start_time + std::max(8.0, std::floor(duration / 8.0)));
    const double len = call.end_time - call.start_time;
    call.nframes = std::max(2, static_cast<int>(std::llround(len * 2.0)));
    call.resize = 0.5;
    return make_output("No visual evidence gathered yet.",
                       "Sample the middle segment very densely to catch the action.",
                       AgentAction::tool(call), kZoomReflection);
  }
  return answer_round(state);
}

PolicyOutput UnderDensePolicy::act(const BeliefState& state, std::uint64_t) const {
  if (state.round_index == 0) {
    FrameSelectCall call;
    call.start_time = 0.0;
    call.end_time = state.video_duration_s;
    call.nframes = 8;
    call.resize = 0.1;
    return make_output("No visual evidence gathered yet.",
                       "A handful of tiny frames across the video should be enough.",
                       AgentAction::tool(call), kZoomReflection);
  }
  return answer_round(state);
}

// ---------------------------------------------------------------------------
// Judge
// ---------------------------------------------------------------------------

PolicyOutput EvidenceJudgePolicy::act(const BeliefState& state, std::uint64_t) const {
  std::string letter = "A";
  if (state.query && state.query->query_kind == QueryKind::kMultipleChoice) {
    if (evidence_covered(*state.query, state.frames)) {
      letter = state.query->answer_gt;
    } else {
      for (const Choice& c : state.query->choices) {
        if (std::string(1, c.letter) != state.query->answer_gt) {
          letter = std::string(1, c.letter);
          break;
        }
      }
    }
  }
  return make_output("Reviewed the retrieved frames against the question.",
                     "Pick the choice the frames actually support.",
                     AgentAction::final(letter), std::nullopt);
}

// ---------------------------------------------------------------------------
// Chat adapter
// ---------------------------------------------------------------------------

PolicyOutput ChatAdapterPolicy::act(const BeliefState& state, std::uint64_t) const {
  nlohmann::json request;
  request["model"] = config_.model;
  request["messages"] = nlohmann::json::array();
  for (const ChatMessage& m : render_messages(state)) {
    request["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  const std::string body = request.dump();

  std::string last_error;
  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(config_.backoff_base_ms << (attempt - 1)));
    }
    httplib::Client client(config_.host, config_.port);
    client.set_connection_timeout(0, config_.timeout_ms * 1000);
    client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
    auto res = client.Post(config_.path, body, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    const nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty() ||
        !reply["choices"][0].contains("message")) {
      last_error = "malformed chat completion response";
      continue;
    }
    const std::string content =
        reply["choices"][0]["message"].value("content", std::string{});

    PolicyOutput out;
    out.round_text = content;
    out.action_trace = parse_action(content);
    // Keep the prose leading up to the action as the round summary.
    std::size_t cut = content.find('{');
    const std::size_t marker = content.rfind("Answer:");
    if (cut == std::string::npos || (marker != std::string::npos && marker < cut)) {
      cut = marker;
    }
    if (cut != std::string::npos && cut > 0) {
      out.summary = content.substr(0, cut);
    }
    return out;
  }
  throw ExternalEndpointError("chat endpoint failed after " +
                              std::to_string(config_.max_attempts) +
                              " attempts: " + last_error);
}

}  // namespace eva
