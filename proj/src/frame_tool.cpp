#include "eva/frame_tool.hpp"

#include <cmath>
#include <sstream>

namespace eva {

const std::vector<TokenProfile>& builtin_profiles() {
  static const std::vector<TokenProfile> kProfiles = {
      {"qwen", 650},
      {"gemini", 258},
      {"longva", 144},
      {"longvila", 256},
  };
  return kProfiles;
}

const TokenProfile* find_builtin_profile(const std::string& name) {
  for (const TokenProfile& p : builtin_profiles()) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const char* violation_name(CallViolation v) {
  switch (v) {
    case CallViolation::kEmptyWindow: return "EmptyWindow";
    case CallViolation::kOutOfRange: return "OutOfRange";
    case CallViolation::kBadFrameCount: return "BadFrameCount";
    case CallViolation::kBadResize: return "BadResize";
  }
  return "?";
}

std::vector<Violation> validate(const FrameSelectCall& call, double duration_s) {
  std::vector<Violation> out;
  if (!(call.start_time < call.end_time)) {
    out.push_back({CallViolation::kEmptyWindow, "start_time",
                   "start_time must be strictly below end_time"});
  }
  if (call.start_time < 0.0 || call.end_time > duration_s) {
    out.push_back({CallViolation::kOutOfRange, "end_time",
                   "window must lie inside [0, duration]"});
  }
  if (call.nframes < 1) {
    out.push_back({CallViolation::kBadFrameCount, "nframes", "nframes must be >= 1"});
  }
  if (call.resize <= 0.0 || call.resize > 1.0) {
    out.push_back({CallViolation::kBadResize, "resize", "resize must be in (0, 1]"});
  }
  return out;
}

double call_fps(const FrameSelectCall& call) {
  return static_cast<double>(call.nframes) / (call.end_time - call.start_time);
}

double visual_budget(const FrameSelectCall& call) {
  return static_cast<double>(call.nframes) * call.resize;
}

std::int64_t token_cost(const FrameSelectCall& call, const TokenProfile& profile) {
  const double per_frame =
      std::ceil(static_cast<double>(profile.base_tokens_per_frame) * call.resize * call.resize);
  return static_cast<std::int64_t>(call.nframes) * static_cast<std::int64_t>(per_frame);
}

std::vector<double> sample_timestamps(const FrameSelectCall& call) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(call.nframes));
  const double step = (call.end_time - call.start_time) / call.nframes;
  for (int i = 0; i < call.nframes; ++i) {
    out.push_back(call.start_time + (i + 0.5) * step);
  }
  return out;
}

FrameBatch execute(const FrameSelectCall& call, const SyntheticVideo& video,
                   const TokenProfile& profile) {
  std::vector<Violation> violations = validate(call, video.duration_s);
  if (!violations.empty()) {
    std::ostringstream os;
    os << "invalid frame_select call:";
    for (const Violation& v : violations) os << " " << violation_name(v.code);
    throw InvalidCall(os.str(), std::move(violations));
  }
  FrameBatch batch;
  batch.call = call;
  batch.timestamps = sample_timestamps(call);
  batch.observations = observe(video, batch.timestamps, call.resize);
  batch.fps = call_fps(call);
  batch.visual_budget = visual_budget(call);
  batch.token_cost = token_cost(call, profile);
  return batch;
}

}  // namespace eva
