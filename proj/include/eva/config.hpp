#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "eva/agent.hpp"
#include "eva/policy.hpp"
#include "eva/serialization.hpp"
#include "eva/synthetic_video.hpp"

namespace eva {

struct PolicySelection {
  std::string kind = "toy";  // toy | random | global_then_zoom | direct_dense |
                             // scan_then_answer | answer_first | chat
  std::string theta_path;    // toy: checkpoint to load (zeros when empty)
  double scan_resize = 0.5;
  ChatEndpointConfig endpoint;
};

struct ReflectorConfig {
  bool enabled = false;
  ReflectorMode mode = ReflectorMode::kLenient;
};

struct SftStageConfig {
  int epochs = 2;
  double lr = 1e-2;
  int batch = 8;
  double guess_fraction = 0.15;
  int episodes = 240;
  std::int64_t teacher_max_tokens = 150000;  // teachers run with headroom
};

struct KtoStageConfig {
  double beta = 0.1;
  double lr = 1e-3;
  int epochs = 8;
  int batch = 16;
  double chosen_threshold = 0.9;
  double target_chosen_fraction = 0.63;
  int episodes = 240;
};

struct GrpoStageConfig {
  int group_size = 8;
  double kl_lambda = 0.05;
  double lr = 1e-3;
  int steps = 400;
  int queries_per_step = 2;
  bool plain_reinforce = false;
  int tasks = 300;
};

struct QueriesConfig {
  int count = 200;
  double open_ended_ratio = 0.9;
  QueryGenParams gen;
};

struct RunConfig {
  std::uint64_t seed = 7;
  GeneratorParams video;
  QueriesConfig queries;
  EpisodeLimits episode;
  RewardWeights rewards;
  std::string token_profile = "qwen";
  std::vector<TokenProfile> token_profiles;  // empty -> builtin table
  PolicySelection policy;
  ReflectorConfig reflector;
  SftStageConfig sft;
  KtoStageConfig kto;
  GrpoStageConfig grpo;
};

// Parses a config JSON, overlaying the defaults. Unknown keys anywhere are
// rejected with ConfigError.
RunConfig config_from_json(const Json& j);
Json config_to_json(const RunConfig& config);
RunConfig load_config_file(const std::string& path);

// FNV-1a digest of the canonical serialization; embedded in every artifact.
std::string config_hash(const RunConfig& config);

// Token profile named by the config (from its table or the builtin one).
TokenProfile resolve_profile(const RunConfig& config);

EpisodeOptions episode_options(const RunConfig& config);

// Policy factory for the CLI and evaluation paths.
std::unique_ptr<Policy> make_policy(const RunConfig& config);

}  // namespace eva
