#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eva/errors.hpp"
#include "eva/synthetic_video.hpp"

namespace eva {

// The frame-selection tool action: a temporal window, a frame count and a
// spatial downsampling ratio.
struct FrameSelectCall {
  double start_time = 0.0;
  double end_time = 0.0;
  int nframes = 1;
  double resize = 1.0;

  bool operator==(const FrameSelectCall&) const = default;
};

struct TokenProfile {
  std::string name = "qwen";
  int base_tokens_per_frame = 650;
};

// Built-in per-model token bases; returns nullptr for unknown names.
const TokenProfile* find_builtin_profile(const std::string& name);
const std::vector<TokenProfile>& builtin_profiles();

enum class CallViolation { kEmptyWindow, kOutOfRange, kBadFrameCount, kBadResize };

struct Violation {
  CallViolation code;
  std::string field;
  std::string message;
};

const char* violation_name(CallViolation v);

// Returns every violated invariant; empty means the call is valid.
std::vector<Violation> validate(const FrameSelectCall& call, double duration_s);

// Thrown by execute() on a call that fails validate().
class InvalidCall : public EvaError {
 public:
  InvalidCall(std::string what, std::vector<Violation> violations)
      : EvaError(std::move(what)), violations_(std::move(violations)) {}
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

struct FrameBatch {
  FrameSelectCall call;
  std::vector<double> timestamps;
  std::vector<FrameObservation> observations;
  double fps = 0.0;
  double visual_budget = 0.0;
  std::int64_t token_cost = 0;
};

double call_fps(const FrameSelectCall& call);

// Rule-3 proxy for a call's information content: nframes * resize.
double visual_budget(const FrameSelectCall& call);

// nframes * ceil(base_tokens_per_frame * resize^2): spatial downsampling
// shrinks per-frame token cost with the frame area.
std::int64_t token_cost(const FrameSelectCall& call, const TokenProfile& profile);

// Window midpoints: t_i = start + (i + 0.5) * (end - start) / nframes.
std::vector<double> sample_timestamps(const FrameSelectCall& call);

// Runs a validated call against the video. Throws InvalidCall otherwise.
FrameBatch execute(const FrameSelectCall& call, const SyntheticVideo& video,
                   const TokenProfile& profile);

}  // namespace eva
