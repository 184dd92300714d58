#include "eva/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <sstream>
#include <thread>

#include "eva/evidence.hpp"
#include "eva/rng.hpp"

namespace eva {

std::vector<TrainTask> make_task_set(const RunConfig& config, std::uint64_t seed,
                                     int count, double open_ended_ratio) {
  std::vector<TrainTask> open_ended;
  std::vector<TrainTask> multi_choice;
  for (int i = 0; i < count; ++i) {
    {
      const std::uint64_t vseed = mix_seed(seed, 0x0eULL, i);
      SyntheticVideo video = generate_video(vseed, config.video);
      QueryInstance query = generate_query(video, mix_seed(vseed, 1),
                                           QueryKind::kOpenEnded, config.queries.gen);
      open_ended.push_back({std::move(video), std::move(query)});
    }
    {
      const std::uint64_t vseed = mix_seed(seed, 0x3cULL, i);
      SyntheticVideo video = generate_video(vseed, config.video);
      QueryInstance query = generate_query(video, mix_seed(vseed, 2),
                                           QueryKind::kMultipleChoice, config.queries.gen);
      multi_choice.push_back({std::move(video), std::move(query)});
    }
  }
  return build_rl_mix(open_ended, multi_choice, open_ended_ratio, count);
}

EvalReport evaluate(const Policy& policy, const std::vector<TrainTask>& tasks,
                    const EpisodeOptions& opts, const RewardWeights& weights,
                    const Policy& judge, int threads,
                    std::vector<ScoredTrajectory>* out_trajectories) {
  const std::size_t n = tasks.size();
  std::vector<ScoredTrajectory> scored(n);

  // Per-worker shards over disjoint index ranges; seeds derive from the task
  // index, so the result does not depend on the thread count.
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      EpisodeOptions epi = opts;
      epi.seed = mix_seed(opts.seed, 0xea1ULL, i);
      Trajectory traj = run_episode(tasks[i].video, tasks[i].query, policy, epi);
      const RewardBreakdown reward = total_reward(traj, judge, weights);
      scored[i] = {std::move(traj), reward};
    }
  };
  if (workers == 1) {
    run_range(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::size_t lo = static_cast<std::size_t>(w) * chunk;
      const std::size_t hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(run_range, lo, hi);
    }
    for (std::thread& t : pool) t.join();
  }

  EvalReport report;
  report.total = static_cast<int>(n);
  double tokens = 0.0, rounds = 0.0, frames = 0.0, reward_sum = 0.0;
  int correct = 0, mc_correct = 0, oe_correct = 0, no_evidence = 0;
  double oe_rouge = 0.0;
  for (const ScoredTrajectory& st : scored) {
    const Trajectory& t = st.trajectory;
    tokens += static_cast<double>(t.tokens_spent);
    rounds += static_cast<double>(t.rounds.size());
    for (const FrameBatch& b : t.frame_batches) frames += b.call.nframes;
    reward_sum += st.reward.total;
    if (answered_without_evidence(t)) ++no_evidence;

    if (t.query.query_kind == QueryKind::kMultipleChoice) {
      ++report.mc_total;
      const bool ok = t.final_answer && *t.final_answer == t.query.answer_gt;
      mc_correct += ok;
      correct += ok;
    } else {
      ++report.oe_total;
      const double rouge =
          t.final_answer ? rouge_reward(*t.final_answer, t.query.answer_gt) : 0.0;
      oe_rouge += rouge;
      const bool ok = rouge >= kOpenEndedCorrectThreshold;
      oe_correct += ok;
      correct += ok;
    }
  }
  if (n > 0) {
    report.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    report.mean_tokens = tokens / static_cast<double>(n);
    report.mean_rounds = rounds / static_cast<double>(n);
    report.mean_frames = frames / static_cast<double>(n);
    report.estimated_frames =
        report.mean_tokens / static_cast<double>(opts.profile.base_tokens_per_frame);
    report.answer_without_evidence_rate =
        static_cast<double>(no_evidence) / static_cast<double>(n);
    report.mean_reward = reward_sum / static_cast<double>(n);
  }
  if (report.mc_total > 0) {
    report.mc_accuracy = static_cast<double>(mc_correct) / report.mc_total;
  }
  if (report.oe_total > 0) {
    report.oe_accuracy = static_cast<double>(oe_correct) / report.oe_total;
    report.oe_mean_rouge = oe_rouge / report.oe_total;
  }
  if (out_trajectories) *out_trajectories = std::move(scored);
  return report;
}

Json eval_report_to_json(const EvalReport& r) {
  return Json{{"total", r.total},
              {"accuracy", r.accuracy},
              {"mean_tokens", r.mean_tokens},
              {"mean_rounds", r.mean_rounds},
              {"mean_frames", r.mean_frames},
              {"estimated_frames", r.estimated_frames},
              {"mc_total", r.mc_total},
              {"mc_accuracy", r.mc_accuracy},
              {"oe_total", r.oe_total},
              {"oe_accuracy", r.oe_accuracy},
              {"oe_mean_rouge", r.oe_mean_rouge},
              {"answer_without_evidence_rate", r.answer_without_evidence_rate},
              {"mean_reward", r.mean_reward}};
}

// ---------------------------------------------------------------------------
// Round statistics
// ---------------------------------------------------------------------------

namespace {

MetricStats summarize(const std::vector<double>& values) {
  MetricStats s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.histogram.assign(kHistogramBins, 0);
  const double span = s.max - s.min;
  for (double v : values) {
    int bin = span > 0.0 ? static_cast<int>((v - s.min) / span * kHistogramBins) : 0;
    bin = std::clamp(bin, 0, kHistogramBins - 1);
    ++s.histogram[static_cast<std::size_t>(bin)];
  }
  return s;
}

Json metric_to_json(const MetricStats& m) {
  return Json{{"count", m.count},
              {"mean", m.mean},
              {"min", m.min},
              {"max", m.max},
              {"histogram", m.histogram}};
}

}  // namespace

RoundStats compute_round_stats(const std::vector<Trajectory>& trajectories) {
  std::size_t max_rounds = 0;
  for (const Trajectory& t : trajectories) {
    max_rounds = std::max(max_rounds, t.frame_batches.size());
  }
  if (max_rounds == 0) throw NoToolRounds("no trajectory executed a tool call");

  RoundStats stats;
  for (std::size_t r = 0; r < max_rounds; ++r) {
    std::vector<double> nframes, resize, time_range, token_cost, budget;
    for (const Trajectory& t : trajectories) {
      if (r >= t.frame_batches.size()) continue;  // no zero padding
      const FrameBatch& b = t.frame_batches[r];
      nframes.push_back(b.call.nframes);
      resize.push_back(b.call.resize);
      time_range.push_back(b.call.end_time - b.call.start_time);
      token_cost.push_back(static_cast<double>(b.token_cost));
      budget.push_back(b.visual_budget);
    }
    RoundStats::PerRound row;
    row.round = static_cast<int>(r) + 1;
    row.nframes = summarize(nframes);
    row.resize = summarize(resize);
    row.time_range = summarize(time_range);
    row.token_cost = summarize(token_cost);
    row.frames_x_resize = summarize(budget);
    stats.per_round.push_back(std::move(row));
  }
  return stats;
}

Json round_stats_to_json(const RoundStats& stats) {
  Json rounds = Json::array();
  for (const RoundStats::PerRound& row : stats.per_round) {
    rounds.push_back(Json{{"round", row.round},
                          {"nframes", metric_to_json(row.nframes)},
                          {"resize", metric_to_json(row.resize)},
                          {"time_range", metric_to_json(row.time_range)},
                          {"token_cost", metric_to_json(row.token_cost)},
                          {"frames_x_resize", metric_to_json(row.frames_x_resize)}}});
  }
  return Json{{"rounds", rounds}};
}

std::string round_stats_to_csv(const RoundStats& stats) {
  std::ostringstream os;
  os << "round,metric,count,mean,min,max\n";
  for (const RoundStats::PerRound& row : stats.per_round) {
    auto emit = [&](const char* name, const MetricStats& m) {
      os << row.round << "," << name << "," << m.count << "," << m.mean << "," << m.min
         << "," << m.max << "\n";
    };
    emit("nframes", row.nframes);
    emit("resize", row.resize);
    emit("time_range", row.time_range);
    emit("token_cost", row.token_cost);
    emit("frames_x_resize", row.frames_x_resize);
  }
  return os.str();
}

std::string make_run_dir(const std::string& base, const std::string& hash) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);
  std::ostringstream os;
  os << base << "/" << stamp << "-" << hash.substr(0, 8);
  std::filesystem::create_directories(os.str());
  return os.str();
}

std::string grpo_log_to_csv(const std::vector<GrpoLogRow>& log) {
  std::ostringstream os;
  os << "step,reward_mean,kl,entropy,loss,degenerate_groups\n";
  for (const GrpoLogRow& row : log) {
    os << row.step << "," << row.reward_mean << "," << row.kl << "," << row.entropy
       << "," << row.loss << "," << row.degenerate_groups << "\n";
  }
  return os.str();
}

}  // namespace eva
