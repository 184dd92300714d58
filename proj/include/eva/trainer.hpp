#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eva/agent.hpp"
#include "eva/errors.hpp"
#include "eva/policy.hpp"
#include "eva/reward.hpp"
#include "eva/synthetic_video.hpp"

namespace eva {

// A self-contained training/evaluation unit: the environment plus one query.
struct TrainTask {
  SyntheticVideo video;
  QueryInstance query;
};

struct StatePair {
  Features features{};
  int action = 0;
};

struct SftExample {
  Features features{};
  int action = 0;
  std::string source = "executor_teacher";
  std::vector<std::string> experience_tags;
};

enum class FailureCategory {
  kNone,
  kAnswerWithoutEvidence,
  kOverDenseShortWindow,
  kUnderDenseLongWindow,
};

const char* failure_category_name(FailureCategory c);

struct KtoExample {
  std::string trajectory_id;
  bool chosen = false;
  FailureCategory failure_category = FailureCategory::kNone;
  std::vector<StatePair> pairs;
};

struct ScoredTrajectory {
  Trajectory trajectory;
  RewardBreakdown reward;
};

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

// Reconstructs the per-round (features, action-index) pairs of a stored
// trajectory by replaying its belief-state evolution. Tool actions snap to
// the nearest in-space call; answer actions resolve to their ranked slot.
std::vector<StatePair> trajectory_pairs(const Trajectory& trajectory,
                                        const DiscreteActionSpace& space);

// Sum of per-round log-probs of the trajectory's pairs under theta.
double trajectory_logprob(const ToyPolicyParams& params,
                          const std::vector<StatePair>& pairs);

// True when the trajectory answered without any visual grounding: no tool
// call at all, or no non-empty observation inside any evidence window.
bool answered_without_evidence(const Trajectory& trajectory);

// ---------------------------------------------------------------------------
// Experience bank
// ---------------------------------------------------------------------------

// Archive of successful trajectories; teachers consult it to pick the
// workflow with the best track record for a task family.
class ExperienceBank {
 public:
  struct Entry {
    QueryTask task;
    std::string workflow;
    double reward = 0.0;
    std::vector<std::string> tags;
  };

  void add(Entry entry) { entries_.push_back(std::move(entry)); }
  std::optional<std::string> best_workflow(QueryTask task) const;
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// SFT
// ---------------------------------------------------------------------------

struct SftOptions {
  int epochs = 2;
  double lr = 1e-2;
  int batch = 8;
  std::uint64_t seed = 0;
};

// Behavior cloning: minimizes cross-entropy of target actions under the
// softmax policy. Throws EmptyCorpus. epochs == 0 returns the zero init.
ToyPolicyParams run_sft(const std::vector<SftExample>& corpus,
                        const DiscreteActionSpace& space, const SftOptions& options,
                        std::vector<double>* epoch_losses = nullptr);

struct SftPipelineOptions {
  double guess_fraction = 0.15;  // share of answer-without-looking teachers
  EpisodeOptions episode;        // strict reflector is attached internally
  std::uint64_t seed = 0;
};

struct SftBuildResult {
  std::vector<SftExample> corpus;
  std::vector<ScoredTrajectory> trajectories;
  ExperienceBank bank;
};

// Multi-agent SFT data pipeline: scripted executor teachers audited by the
// strict reflector; successful trajectories are archived in the experience
// bank and guide later teacher choices.
SftBuildResult build_sft_corpus(const std::vector<TrainTask>& tasks,
                                const DiscreteActionSpace& space, const Policy& judge,
                                const RewardWeights& weights,
                                const SftPipelineOptions& options);

// ---------------------------------------------------------------------------
// KTO
// ---------------------------------------------------------------------------

struct KtoLabelRules {
  double chosen_threshold = 0.9;
  double budget_threshold = 15.0;
  double target_chosen_fraction = 0.63;
};

// Rule-based replacement for the judge-driven selection: failures are
// categorized, successes above the threshold become chosen, the rest drop,
// and the output is rebalanced toward the 63/37 chosen/rejected mix.
std::vector<KtoExample> label_kto(const std::vector<ScoredTrajectory>& trajectories,
                                  const DiscreteActionSpace& space,
                                  const KtoLabelRules& rules);

struct KtoOptions {
  double beta = 0.1;
  double lr = 1e-3;
  int epochs = 8;
  int batch = 16;
  std::uint64_t seed = 0;
};

// Kahneman-Tversky optimization over single-sample preference labels:
// v = sigmoid(beta * (l - z0)) for chosen and sigmoid(beta * (z0 - l)) for
// rejected, l the policy/reference trajectory log-ratio and z0 the clamped
// batch-mean divergence; minimizes mean(1 - v). Throws SingleLabelCorpus.
ToyPolicyParams run_kto(const std::vector<KtoExample>& examples,
                        const ToyPolicyParams& reference, const DiscreteActionSpace& space,
                        const KtoOptions& options,
                        std::vector<double>* epoch_losses = nullptr);

struct KtoPipelineOptions {
  EpisodeOptions episode;
  KtoLabelRules rules;
  std::uint64_t seed = 0;
};

// Runs the good and deliberately bad scripted policies over the tasks and
// labels the outcomes.
std::vector<KtoExample> build_kto_corpus(const std::vector<TrainTask>& tasks,
                                         const DiscreteActionSpace& space,
                                         const Policy& judge, const RewardWeights& weights,
                                         const KtoPipelineOptions& options,
                                         std::vector<ScoredTrajectory>* out_trajectories = nullptr);

// ---------------------------------------------------------------------------
// GRPO
// ---------------------------------------------------------------------------

// (R_i - mean) / (std + eps) within one rollout group.
std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double eps = 1e-8);

struct GrpoOptions {
  int group_size = 8;
  double kl_lambda = 0.05;
  double lr = 1e-3;
  int steps = 400;
  int queries_per_step = 2;
  bool plain_reinforce = false;  // ablation: advantages = raw rewards, no KL
  std::uint64_t seed = 0;
  EpisodeOptions episode;
};

struct GrpoLogRow {
  int step = 0;
  double reward_mean = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  double loss = 0.0;
  int degenerate_groups = 0;  // all-equal-reward groups this step
};

// Online policy-gradient RL with group-normalized advantages and a KL
// penalty toward the frozen reference policy.
ToyPolicyParams run_grpo(const std::vector<TrainTask>& tasks, const ToyPolicyParams& init,
                         const ToyPolicyParams& reference, const DiscreteActionSpace& space,
                         const Policy& judge, const RewardWeights& weights,
                         const GrpoOptions& options, std::vector<GrpoLogRow>* log = nullptr);

// ---------------------------------------------------------------------------
// Data enhancement and mixing
// ---------------------------------------------------------------------------

// Emits fresh open-ended queries on unseen videos, weighted toward the query
// families that failed most. Throws EmptyPool.
std::vector<QueryInstance> enhance_dataset(const std::vector<Trajectory>& failures,
                                           const std::vector<SyntheticVideo>& video_pool,
                                           std::uint64_t seed, int count,
                                           const QueryGenParams& gen = QueryGenParams{});

// Deterministic interleave of the two pools at the given open-ended ratio.
// target_count < 0 picks the largest feasible corpus. Throws EmptyPool when
// either pool is empty.
template <typename T>
std::vector<T> build_rl_mix(const std::vector<T>& open_ended, const std::vector<T>& multi_choice,
                            double ratio, int target_count = -1) {
  if (open_ended.empty() || multi_choice.empty()) {
    throw EmptyPool("build_rl_mix needs both pools non-empty");
  }
  if (ratio < 0.0 || ratio > 1.0) throw InvalidParams("ratio outside [0,1]");
  int total = target_count;
  if (total < 0) {
    // Largest T whose quotas fit both pools.
    const int cap = static_cast<int>(open_ended.size() + multi_choice.size());
    total = 0;
    for (int t = cap; t >= 1; --t) {
      const int oe = static_cast<int>(std::floor(t * ratio + 0.5));
      if (oe <= static_cast<int>(open_ended.size()) &&
          t - oe <= static_cast<int>(multi_choice.size())) {
        total = t;
        break;
      }
    }
  }
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(total));
  std::size_t oe_used = 0, mc_used = 0;
  for (int i = 1; i <= total; ++i) {
    const auto oe_target =
        static_cast<std::size_t>(std::floor(static_cast<double>(i) * ratio + 0.5));
    if (oe_used < oe_target && oe_used < open_ended.size()) {
      out.push_back(open_ended[oe_used++]);
    } else if (mc_used < multi_choice.size()) {
      out.push_back(multi_choice[mc_used++]);
    } else {
      out.push_back(open_ended[oe_used++]);
    }
  }
  return out;
}

}  // namespace eva
