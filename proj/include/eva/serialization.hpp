#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eva/agent.hpp"
#include "eva/frame_tool.hpp"
#include "eva/policy.hpp"
#include "eva/reflector.hpp"
#include "eva/reward.hpp"
#include "eva/synthetic_video.hpp"

namespace eva {

using Json = nlohmann::json;

// Enum <-> string names used across every serialized artifact.
std::string to_string(EventKind k);
std::string to_string(QueryKind k);
std::string to_string(QueryTask t);
std::string to_string(Outcome o);
std::string to_string(RewardKind k);
std::string to_string(ReflectorMode m);
EventKind event_kind_from(const std::string& s);
QueryKind query_kind_from(const std::string& s);
QueryTask query_task_from(const std::string& s);
Outcome outcome_from(const std::string& s);
RewardKind reward_kind_from(const std::string& s);
ReflectorMode reflector_mode_from(const std::string& s);

Json to_json(const TimeWindow& w);
Json to_json(const Event& e);
Json to_json(const SyntheticVideo& v);
Json to_json(const Choice& c);
Json to_json(const QueryInstance& q);
Json to_json(const FrameObservation& o);
Json to_json(const FrameSelectCall& c);
Json to_json(const FrameBatch& b);
Json to_json(const Verdict& v);
Json to_json(const AgentAction& a);
Json to_json(const Round& r);
Json to_json(const EpisodeLimits& l);
Json to_json(const RewardBreakdown& r);
Json to_json(const GeneratorParams& p);
Json to_json(const QueryGenParams& p);
Json to_json(const DiscreteActionSpace& s);

TimeWindow time_window_from(const Json& j);
Event event_from(const Json& j);
SyntheticVideo video_from(const Json& j);
QueryInstance query_from(const Json& j);
FrameObservation observation_from(const Json& j);
FrameSelectCall call_from(const Json& j);
FrameBatch batch_from(const Json& j);
Verdict verdict_from(const Json& j);
AgentAction action_from(const Json& j);
Round round_from(const Json& j);
EpisodeLimits limits_from(const Json& j);
RewardBreakdown reward_from(const Json& j);
DiscreteActionSpace action_space_from(const Json& j);

// One JSONL line per trajectory; the reward block is attached by scoring.
Json trajectory_to_json(const Trajectory& t, const RewardBreakdown* reward = nullptr);
Trajectory trajectory_from_json(const Json& j,
                                std::optional<RewardBreakdown>* reward_out = nullptr);

// Theta checkpoints: parameters + action space + metadata, written atomically.
struct CheckpointMeta {
  std::string stage;  // sft | kto | grpo
  int step = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};
Json checkpoint_to_json(const ToyPolicyParams& params, const DiscreteActionSpace& space,
                        const CheckpointMeta& meta);
ToyPolicyParams checkpoint_from_json(const Json& j, DiscreteActionSpace* space_out = nullptr,
                                     CheckpointMeta* meta_out = nullptr);

// File helpers.
std::string read_text_file(const std::string& path);
void write_text_file_atomic(const std::string& path, const std::string& content);
void append_jsonl(const std::string& path, const Json& line);
void write_jsonl(const std::string& path, const std::vector<Json>& lines);
std::vector<Json> read_jsonl(const std::string& path);

// FNV-1a 64-bit hex digest (config hashes, run directory names).
std::string fnv1a_hex(const std::string& text);

}  // namespace eva
