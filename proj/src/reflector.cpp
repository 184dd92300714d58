#include "eva/reflector.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace eva {

namespace {

constexpr double kEps = 1e-9;

int fps_capped_nframes(double start, double end) {
  return std::max(1, static_cast<int>(std::floor(end - start)));
}

// Global rescan used by both R1 and R2b: full span, at least 3x the previous
// frame count, resize raised to at least 0.5, fps kept <= 1.
FrameSelectCall aggressive_global_scan(const FrameSelectCall& prev, double duration) {
  FrameSelectCall out;
  out.start_time = 0.0;
  out.end_time = duration;
  const long long tripled = 3LL * std::max(1, prev.nframes);
  out.nframes = static_cast<int>(
      std::min<long long>(tripled, fps_capped_nframes(0.0, duration)));
  out.nframes = std::max(1, out.nframes);
  out.resize = std::max(prev.resize, 0.5);
  return out;
}

}  // namespace

const char* rule_name(RuleId id) {
  switch (id) {
    case RuleId::kR1AggressiveGlobalRescan: return "R1";
    case RuleId::kR2bNoRepeatDenseSampling: return "R2b";
    case RuleId::kR3MinVisualBudget: return "R3";
    case RuleId::kR4FpsCap: return "R4";
  }
  return "?";
}

bool is_global_call(const FrameSelectCall& call, double duration_s) {
  return (call.end_time - call.start_time) >= kGlobalWindowFraction * duration_s - kEps;
}

double window_jaccard(const FrameSelectCall& a, const FrameSelectCall& b) {
  const double inter = std::max(
      0.0, std::min(a.end_time, b.end_time) - std::max(a.start_time, b.start_time));
  const double uni = std::max(a.end_time, b.end_time) - std::min(a.start_time, b.start_time);
  return uni > 0.0 ? inter / uni : 0.0;
}

Verdict audit(const std::optional<PrevRound>& prev, const FrameSelectCall& proposed,
              double video_duration_s, ReflectorMode mode) {
  const double duration = video_duration_s;
  FrameSelectCall call = proposed;
  std::set<RuleId> fired;
  std::ostringstream rationale;

  // The rules run as a pipeline until nothing fires, so a correction from one
  // rule is itself held to all the others. Rule 2 (an evidence-justified zoom
  // passes through) is implicit: R1 requires found_info == false, and R2b is
  // the more specific carve-out that applies even after evidence was found,
  // since its segment has already been seen densely.
  for (int iter = 0; iter < 6; ++iter) {
    bool changed = false;

    if (prev.has_value() && is_global_call(prev->call, duration) && !prev->found_info &&
        !is_global_call(call, duration)) {
      call = aggressive_global_scan(prev->call, duration);
      if (fired.insert(RuleId::kR1AggressiveGlobalRescan).second) {
        rationale << "global scan found nothing; rescanning the full span denser "
                     "instead of narrowing. ";
      }
      changed = true;
    } else if (prev.has_value() && !is_global_call(prev->call, duration) &&
               call_fps(prev->call) >= 1.0 - kEps && !is_global_call(call, duration) &&
               window_jaccard(prev->call, call) >= kSameSegmentJaccard &&
               call_fps(call) >= kDenseFps) {
      call = aggressive_global_scan(prev->call, duration);
      if (fired.insert(RuleId::kR2bNoRepeatDenseSampling).second) {
        rationale << "segment was already densely sampled; searching globally "
                     "instead of re-sampling it. ";
      }
      changed = true;
    }

    const int cap = fps_capped_nframes(call.start_time, call.end_time);
    if (call_fps(call) > 1.0 + kEps) {
      call.nframes = cap;
      if (fired.insert(RuleId::kR4FpsCap).second) {
        rationale << "fps exceeded 1; reduced nframes to the window length. ";
      }
      changed = true;
    }

    if (mode == ReflectorMode::kStrict && visual_budget(call) < kMinVisualBudget - kEps) {
      // Raise resize first (free of fps effects), then frames under the fps
      // cap, then widen the window as a last resort.
      call.resize = std::clamp(kMinVisualBudget / call.nframes, call.resize, 1.0);
      if (visual_budget(call) < kMinVisualBudget - kEps) {
        call.nframes = std::min(
            std::max(call.nframes,
                     static_cast<int>(std::ceil(kMinVisualBudget / call.resize))),
            cap);
      }
      if (visual_budget(call) < kMinVisualBudget - kEps && !is_global_call(call, duration)) {
        call.start_time = 0.0;
        call.end_time = duration;
      }
      if (fired.insert(RuleId::kR3MinVisualBudget).second) {
        rationale << "visual budget below " << kMinVisualBudget
                  << "; scaled the call up. ";
      }
      changed = true;
    }

    if (!changed) break;
  }

  Verdict verdict;
  if (call == proposed) {
    verdict.decision = Verdict::Decision::kNoChange;
    verdict.rationale = "<NO_CHANGE>";
    return verdict;
  }
  verdict.decision = Verdict::Decision::kCorrected;
  verdict.corrected_call = call;
  verdict.triggered_rules.assign(fired.begin(), fired.end());  // prompt order
  verdict.rationale = rationale.str();
  return verdict;
}

}  // namespace eva
