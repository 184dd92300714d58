#pragma once

#include <string>
#include <vector>

#include "eva/config.hpp"
#include "eva/trainer.hpp"

namespace eva {

// Deterministic corpus of (video, query) pairs at the requested open-ended
// ratio, built from two generated pools and interleaved with build_rl_mix.
std::vector<TrainTask> make_task_set(const RunConfig& config, std::uint64_t seed,
                                     int count, double open_ended_ratio);

struct EvalReport {
  int total = 0;
  double accuracy = 0.0;        // MCQ letter match; OE rouge >= 0.5
  double mean_tokens = 0.0;
  double mean_rounds = 0.0;
  double mean_frames = 0.0;     // sampled frames per episode
  double estimated_frames = 0.0;  // mean_tokens / profile base
  int mc_total = 0;
  double mc_accuracy = 0.0;
  int oe_total = 0;
  double oe_accuracy = 0.0;
  double oe_mean_rouge = 0.0;
  double answer_without_evidence_rate = 0.0;
  double mean_reward = 0.0;
};

// Runs one episode per task (parallelized across tasks; per-worker shards are
// merged in task order so the output is independent of the thread count).
EvalReport evaluate(const Policy& policy, const std::vector<TrainTask>& tasks,
                    const EpisodeOptions& opts, const RewardWeights& weights,
                    const Policy& judge, int threads = 4,
                    std::vector<ScoredTrajectory>* out_trajectories = nullptr);

Json eval_report_to_json(const EvalReport& report);

// ---------------------------------------------------------------------------
// Round statistics (appendix-style behavior analysis)
// ---------------------------------------------------------------------------

struct MetricStats {
  int count = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<int> histogram;  // kHistogramBins equal bins over [min, max]
};

inline constexpr int kHistogramBins = 10;

struct RoundStats {
  struct PerRound {
    int round = 1;  // 1-based tool-call round
    MetricStats nframes;
    MetricStats resize;
    MetricStats time_range;
    MetricStats token_cost;
    MetricStats frames_x_resize;
  };
  std::vector<PerRound> per_round;
};

// Aggregates per tool-call-round over all trajectories; rounds beyond a
// trajectory's length are simply absent (no zero padding). Throws
// NoToolRounds when nothing executed a call.
RoundStats compute_round_stats(const std::vector<Trajectory>& trajectories);

Json round_stats_to_json(const RoundStats& stats);
std::string round_stats_to_csv(const RoundStats& stats);

// ---------------------------------------------------------------------------
// Run directories and training curves
// ---------------------------------------------------------------------------

// <base>/<UTC timestamp>-<config hash prefix>/
std::string make_run_dir(const std::string& base, const std::string& hash);

std::string grpo_log_to_csv(const std::vector<GrpoLogRow>& log);

}  // namespace eva
