#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eva/frame_tool.hpp"

namespace eva {

enum class ReflectorMode { kStrict, kLenient };

enum class RuleId {
  kR1AggressiveGlobalRescan,  // failed global scan -> denser global scan
  kR2bNoRepeatDenseSampling,  // dense segment re-sampled -> global scan
  kR3MinVisualBudget,         // budget < 15 lifted (strict mode only)
  kR4FpsCap,                  // fps > 1 -> nframes = floor(window)
};

const char* rule_name(RuleId id);

struct PrevRound {
  FrameSelectCall call;
  bool found_info = false;  // the executed call observed at least one event
};

struct Verdict {
  enum class Decision { kNoChange, kCorrected };
  Decision decision = Decision::kNoChange;
  std::optional<FrameSelectCall> corrected_call;
  std::vector<RuleId> triggered_rules;
  std::string rationale;  // "<NO_CHANGE>" when nothing fired

  bool corrected() const { return decision == Decision::kCorrected; }
};

// Tunables shared with the data pipelines.
inline constexpr double kGlobalWindowFraction = 0.9;
inline constexpr double kSameSegmentJaccard = 0.5;
inline constexpr double kMinVisualBudget = 15.0;
inline constexpr double kDenseFps = 0.5;

bool is_global_call(const FrameSelectCall& call, double duration_s);
double window_jaccard(const FrameSelectCall& a, const FrameSelectCall& b);

// Audits a proposed call against the previous round. The proposed call must
// already pass validate(). Rules apply as a pipeline: a correction from an
// earlier rule is itself checked against the later ones, so corrected calls
// always come out with fps <= 1 and (strict mode) budget >= kMinVisualBudget,
// and re-auditing a corrected call is a no-op.
Verdict audit(const std::optional<PrevRound>& prev, const FrameSelectCall& proposed,
              double video_duration_s, ReflectorMode mode);

}  // namespace eva
