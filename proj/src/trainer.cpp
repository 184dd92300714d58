#include "eva/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "eva/evidence.hpp"
#include "eva/reflector.hpp"
#include "eva/rng.hpp"

namespace eva {

const char* failure_category_name(FailureCategory c) {
  switch (c) {
    case FailureCategory::kNone: return "none";
    case FailureCategory::kAnswerWithoutEvidence: return "answer_without_evidence";
    case FailureCategory::kOverDenseShortWindow: return "over_dense_short_window";
    case FailureCategory::kUnderDenseLongWindow: return "under_dense_long_window";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Trajectory replay helpers
// ---------------------------------------------------------------------------

std::vector<StatePair> trajectory_pairs(const Trajectory& trajectory,
                                        const DiscreteActionSpace& space) {
  // Rebuild the belief-state evolution from the stored rounds and batches.
  BeliefState state;
  state.q = trajectory.query.question;
  state.query = &trajectory.query;
  state.video_id = trajectory.video_id;
  state.video_duration_s = trajectory.video_duration_s;
  state.limits = trajectory.limits;
  state.h.push_back(HistoryItem{HistoryItem::Kind::kText, trajectory.query.question, -1});

  std::vector<StatePair> pairs;
  std::size_t batch_i = 0;
  for (const Round& round : trajectory.rounds) {
    const Features f = state_features(state);
    if (round.action.kind == AgentAction::Kind::kToolCall) {
      const bool executed = !round.tool_error && batch_i < trajectory.frame_batches.size();
      const FrameSelectCall& call =
          executed ? trajectory.frame_batches[batch_i].call : round.action.call;
      pairs.push_back({f, space.snap_call(call, trajectory.video_duration_s)});
      if (executed) {
        const FrameBatch& batch = trajectory.frame_batches[batch_i];
        state.batches.push_back(batch);
        state.frames.insert(state.frames.end(), batch.observations.begin(),
                            batch.observations.end());
        state.tokens_spent += batch.token_cost;
        state.has_prev_call = true;
        state.prev_call = batch.call;
        state.prev_found_info = false;
        for (const FrameObservation& obs : batch.observations) {
          if (!obs.labels.empty()) {
            state.prev_found_info = true;
            break;
          }
        }
        ++batch_i;
      }
    } else {
      const std::vector<std::string> ranked = ranked_answers(
          trajectory.query, extract_runs(state.batches), space.answer_slots);
      int slot = -1;
      for (std::size_t s = 0; s < ranked.size(); ++s) {
        if (ranked[s] == round.action.answer) {
          slot = static_cast<int>(s);
          break;
        }
      }
      if (slot >= 0) pairs.push_back({f, space.answer_action(slot)});
      // Answers outside the candidate list cannot be expressed in the space.
    }
    state.round_index = static_cast<int>(&round - trajectory.rounds.data()) + 1;
  }
  return pairs;
}

double trajectory_logprob(const ToyPolicyParams& params,
                          const std::vector<StatePair>& pairs) {
  double sum = 0.0;
  for (const StatePair& p : pairs) {
    sum += logprob_and_grad(params, p.features, p.action).logprob;
  }
  return sum;
}

bool answered_without_evidence(const Trajectory& trajectory) {
  if (!trajectory.final_answer.has_value()) return false;
  if (trajectory.frame_batches.empty()) return true;
  for (const FrameBatch& batch : trajectory.frame_batches) {
    for (const FrameObservation& obs : batch.observations) {
      if (obs.labels.empty()) continue;
      for (const TimeWindow& w : trajectory.query.evidence_windows) {
        if (w.contains(obs.timestamp_s)) return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Experience bank
// ---------------------------------------------------------------------------

std::optional<std::string> ExperienceBank::best_workflow(QueryTask task) const {
  std::map<std::string, std::pair<double, int>> sums;
  for (const Entry& e : entries_) {
    if (e.task != task) continue;
    auto& [sum, count] = sums[e.workflow];
    sum += e.reward;
    ++count;
  }
  std::optional<std::string> best;
  double best_mean = -1.0;
  for (const auto& [workflow, sc] : sums) {
    const double mean = sc.first / sc.second;
    if (mean > best_mean) {
      best_mean = mean;
      best = workflow;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// SFT
// ---------------------------------------------------------------------------

ToyPolicyParams run_sft(const std::vector<SftExample>& corpus,
                        const DiscreteActionSpace& space, const SftOptions& options,
                        std::vector<double>* epoch_losses) {
  if (corpus.empty()) throw EmptyCorpus("sft corpus is empty");
  ToyPolicyParams params = ToyPolicyParams::zeros(space.size());
  Rng rng(mix_seed(options.seed, 0x5f7ULL));

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
      const std::size_t batch_end = std::min(order.size(), i + static_cast<std::size_t>(options.batch));
      std::vector<double> grad(params.theta.size(), 0.0);
      const double inv = 1.0 / static_cast<double>(batch_end - i);
      for (; i < batch_end; ++i) {
        const SftExample& ex = corpus[order[i]];
        const LogProbGrad lp = logprob_and_grad(params, ex.features, ex.action);
        loss_sum += -lp.logprob;
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += inv * lp.grad[k];
      }
      for (std::size_t k = 0; k < grad.size(); ++k) {
        params.theta[k] += options.lr * grad[k];
      }
    }
    if (epoch_losses) epoch_losses->push_back(loss_sum / static_cast<double>(corpus.size()));
  }
  return params;
}

namespace {

std::string task_name(QueryTask t) {
  switch (t) {
    case QueryTask::kIdentification: return "identification";
    case QueryTask::kWindow: return "window";
    case QueryTask::kCounting: return "counting";
    case QueryTask::kOrdering: return "ordering";
  }
  return "?";
}

std::string trajectory_key(const Trajectory& t) {
  std::ostringstream os;
  os << t.video_id << "#" << t.episode_seed << "#" << t.policy_name;
  return os.str();
}

}  // namespace

SftBuildResult build_sft_corpus(const std::vector<TrainTask>& tasks,
                                const DiscreteActionSpace& space, const Policy& judge,
                                const RewardWeights& weights,
                                const SftPipelineOptions& options) {
  SftBuildResult result;
  Rng rng(mix_seed(options.seed, 0xdafaULL));

  const ScanThenAnswerPolicy scan_teacher;
  const DirectDensePolicy dense_teacher;
  const AnswerFirstPolicy guess_teacher;

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TrainTask& task = tasks[i];
    const bool guess = rng.next_bool(options.guess_fraction);

    std::string workflow = "scan_then_answer";
    if (!guess) {
      if (auto best = result.bank.best_workflow(task.query.task)) workflow = *best;
    } else {
      workflow = "answer_first";
    }
    const Policy* teacher = &scan_teacher;
    if (workflow == "direct_dense") teacher = &dense_teacher;
    if (workflow == "answer_first") teacher = &guess_teacher;

    EpisodeOptions epi = options.episode;
    epi.seed = mix_seed(options.seed, i);
    epi.reflector = ReflectorMode::kStrict;  // the data pipeline audits calls
    Trajectory traj = run_episode(task.video, task.query, *teacher, epi);
    const RewardBreakdown reward = total_reward(traj, judge, weights);

    const std::vector<StatePair> pairs = trajectory_pairs(traj, space);
    for (const StatePair& p : pairs) {
      SftExample ex;
      ex.features = p.features;
      ex.action = p.action;
      ex.source = "executor_teacher";
      ex.experience_tags = {task_name(task.query.task), workflow};
      result.corpus.push_back(std::move(ex));
    }
    if (reward.total >= 0.9) {
      result.bank.add({task.query.task, workflow, reward.total,
                       {task_name(task.query.task)}});
    }
    result.trajectories.push_back({std::move(traj), reward});
  }
  if (result.corpus.empty()) throw EmptyCorpus("sft pipeline produced no examples");
  return result;
}

// ---------------------------------------------------------------------------
// KTO
// ---------------------------------------------------------------------------

std::vector<KtoExample> label_kto(const std::vector<ScoredTrajectory>& trajectories,
                                  const DiscreteActionSpace& space,
                                  const KtoLabelRules& rules) {
  std::vector<KtoExample> chosen;
  std::vector<KtoExample> rejected;

  for (const ScoredTrajectory& st : trajectories) {
    const Trajectory& traj = st.trajectory;
    const bool correct = traj.query.query_kind == QueryKind::kMultipleChoice
                             ? st.reward.r_acc == 1.0
                             : st.reward.r_acc >= kOpenEndedCorrectThreshold;

    FailureCategory category = FailureCategory::kNone;
    if (answered_without_evidence(traj)) {
      category = FailureCategory::kAnswerWithoutEvidence;
    } else {
      for (const FrameBatch& batch : traj.frame_batches) {
        if (batch.fps > 1.0 + 1e-9) {
          category = FailureCategory::kOverDenseShortWindow;
          break;
        }
      }
    }
    if (category == FailureCategory::kNone && !correct) {
      for (const FrameBatch& batch : traj.frame_batches) {
        const bool global =
            (batch.call.end_time - batch.call.start_time) >=
            kGlobalWindowFraction * traj.video_duration_s;
        bool found = false;
        for (const FrameObservation& obs : batch.observations) {
          if (!obs.labels.empty()) {
            found = true;
            break;
          }
        }
        if (global && batch.visual_budget < rules.budget_threshold && !found) {
          category = FailureCategory::kUnderDenseLongWindow;
          break;
        }
      }
    }

    KtoExample ex;
    ex.trajectory_id = trajectory_key(traj);
    ex.pairs = trajectory_pairs(traj, space);
    if (ex.pairs.empty()) continue;
    if (category != FailureCategory::kNone) {
      ex.chosen = false;
      ex.failure_category = category;
      rejected.push_back(std::move(ex));
    } else if (st.reward.total >= rules.chosen_threshold) {
      ex.chosen = true;
      chosen.push_back(std::move(ex));
    }
    // Everything else drops.
  }

  // Rebalance toward the target chosen fraction by trimming the heavy side.
  const double target = rules.target_chosen_fraction;
  if (!chosen.empty() && !rejected.empty()) {
    const double actual =
        static_cast<double>(chosen.size()) / (chosen.size() + rejected.size());
    if (actual > target) {
      const std::size_t keep = static_cast<std::size_t>(
          std::llround(target / (1.0 - target) * static_cast<double>(rejected.size())));
      if (chosen.size() > keep) chosen.resize(std::max<std::size_t>(1, keep));
    } else if (actual < target) {
      const std::size_t keep = static_cast<std::size_t>(
          std::llround((1.0 - target) / target * static_cast<double>(chosen.size())));
      if (rejected.size() > keep) rejected.resize(std::max<std::size_t>(1, keep));
    }
  }

  std::vector<KtoExample> out;
  out.reserve(chosen.size() + rejected.size());
  // Interleave deterministically so minibatches see both labels.
  std::size_t ci = 0, ri = 0;
  while (ci < chosen.size() || ri < rejected.size()) {
    if (ci < chosen.size()) out.push_back(chosen[ci++]);
    if (ci < chosen.size()) out.push_back(chosen[ci++]);
    if (ri < rejected.size()) out.push_back(rejected[ri++]);
  }
  return out;
}

std::vector<KtoExample> build_kto_corpus(const std::vector<TrainTask>& tasks,
                                         const DiscreteActionSpace& space,
                                         const Policy& judge, const RewardWeights& weights,
                                         const KtoPipelineOptions& options,
                                         std::vector<ScoredTrajectory>* out_trajectories) {
  const DirectDensePolicy dense;
  const ScanThenAnswerPolicy scan;
  const AnswerFirstPolicy guesser;
  const OverDensePolicy over_dense;
  const UnderDensePolicy under_dense;
  // Success-heavy mix; label_kto rebalances to the target fraction.
  const std::vector<const Policy*> roster = {&dense, &scan, &dense, &guesser,
                                             &over_dense, &under_dense};

  std::vector<ScoredTrajectory> scored;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Policy& policy = *roster[i % roster.size()];
    EpisodeOptions epi = options.episode;
    epi.seed = mix_seed(options.seed, 0x4704ULL, i);
    epi.reflector = std::nullopt;  // failures must survive for labeling
    Trajectory traj = run_episode(tasks[i].video, tasks[i].query, policy, epi);
    const RewardBreakdown reward = total_reward(traj, judge, weights);
    scored.push_back({std::move(traj), reward});
  }
  std::vector<KtoExample> examples = label_kto(scored, space, options.rules);
  if (out_trajectories) *out_trajectories = std::move(scored);
  return examples;
}

ToyPolicyParams run_kto(const std::vector<KtoExample>& examples,
                        const ToyPolicyParams& reference, const DiscreteActionSpace& space,
                        const KtoOptions& options, std::vector<double>* epoch_losses) {
  bool has_chosen = false, has_rejected = false;
  for (const KtoExample& ex : examples) {
    (ex.chosen ? has_chosen : has_rejected) = true;
  }
  if (!has_chosen || !has_rejected) {
    throw SingleLabelCorpus("kto needs both chosen and rejected examples");
  }
  if (static_cast<int>(space.size()) != reference.n_actions) {
    throw ActionNotInSpace("reference does not match the action space");
  }

  ToyPolicyParams params = reference;
  Rng rng(mix_seed(options.seed, 0x270ULL));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), i + static_cast<std::size_t>(options.batch));

      // Policy/reference log-ratio and its gradient per example.
      std::vector<double> ell;
      std::vector<std::vector<double>> ell_grad;
      std::vector<bool> is_chosen;
      for (std::size_t b = i; b < batch_end; ++b) {
        const KtoExample& ex = examples[order[b]];
        double l = 0.0;
        std::vector<double> g(params.theta.size(), 0.0);
        for (const StatePair& p : ex.pairs) {
          const LogProbGrad lp = logprob_and_grad(params, p.features, p.action);
          const LogProbGrad lr = logprob_and_grad(reference, p.features, p.action);
          l += lp.logprob - lr.logprob;
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += lp.grad[k];
        }
        ell.push_back(l);
        ell_grad.push_back(std::move(g));
        is_chosen.push_back(ex.chosen);
      }

      // z0: batch-mean divergence estimate, clamped at zero, stop-gradient.
      double z0 = 0.0;
      for (double l : ell) z0 += l;
      z0 = std::max(0.0, z0 / static_cast<double>(ell.size()));

      std::vector<double> grad(params.theta.size(), 0.0);
      const double inv = 1.0 / static_cast<double>(ell.size());
      for (std::size_t b = 0; b < ell.size(); ++b) {
        const double x = is_chosen[b] ? options.beta * (ell[b] - z0)
                                      : options.beta * (z0 - ell[b]);
        const double v = 1.0 / (1.0 + std::exp(-x));
        loss_sum += 1.0 - v;
        // d(1 - v)/d theta = -v(1-v) * beta * (+-1) * d ell / d theta
        const double coeff =
            -(v * (1.0 - v)) * options.beta * (is_chosen[b] ? 1.0 : -1.0) * inv;
        for (std::size_t k = 0; k < grad.size(); ++k) {
          grad[k] += coeff * ell_grad[b][k];
        }
      }
      for (std::size_t k = 0; k < grad.size(); ++k) {
        params.theta[k] -= options.lr * grad[k];
      }
      i = batch_end;
    }
    if (epoch_losses) {
      epoch_losses->push_back(loss_sum / static_cast<double>(examples.size()));
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// GRPO
// ---------------------------------------------------------------------------

std::vector<double> group_advantages(const std::vector<double>& rewards, double eps) {
  const double n = static_cast<double>(rewards.size());
  if (rewards.empty()) return {};
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / (std_dev + eps));
  return out;
}

namespace {

// Policy wrapper that records the (features, action) trace of each episode.
class RecordingToyPolicy : public Policy {
 public:
  RecordingToyPolicy(const ToyPolicy& inner, std::vector<StatePair>* sink)
      : inner_(inner), sink_(sink) {}

  PolicyOutput act(const BeliefState& state, std::uint64_t seed) const override {
    const Features f = state_features(state);
    int action = 0;
    PolicyOutput out = inner_.act_traced(state, seed, &action);
    sink_->push_back({f, action});
    return out;
  }
  std::string name() const override { return inner_.name(); }

 private:
  const ToyPolicy& inner_;
  std::vector<StatePair>* sink_;
};

}  // namespace

ToyPolicyParams run_grpo(const std::vector<TrainTask>& tasks, const ToyPolicyParams& init,
                         const ToyPolicyParams& reference, const DiscreteActionSpace& space,
                         const Policy& judge, const RewardWeights& weights,
                         const GrpoOptions& options, std::vector<GrpoLogRow>* log) {
  if (options.group_size < 2) throw InvalidParams("grpo group size must be >= 2");
  if (tasks.empty()) throw EmptyPool("grpo needs a non-empty task set");

  ToyPolicyParams params = init;
  Rng order_rng(mix_seed(options.seed, 0x6704ULL));
  std::vector<std::size_t> task_order(tasks.size());
  std::iota(task_order.begin(), task_order.end(), std::size_t{0});
  order_rng.shuffle(task_order);
  std::size_t cursor = 0;

  for (int step = 0; step < options.steps; ++step) {
    struct Rollout {
      std::vector<StatePair> trace;
      double reward = 0.0;
      double advantage = 0.0;
    };
    std::vector<Rollout> rollouts;
    int degenerate = 0;
    double reward_sum = 0.0;

    const ToyPolicy policy(space, params, "grpo");
    for (int q = 0; q < options.queries_per_step; ++q) {
      const TrainTask& task = tasks[task_order[cursor]];
      cursor = (cursor + 1) % task_order.size();

      std::vector<double> rewards;
      std::vector<Rollout> group(static_cast<std::size_t>(options.group_size));
      for (int g = 0; g < options.group_size; ++g) {
        Rollout& rollout = group[static_cast<std::size_t>(g)];
        RecordingToyPolicy recorder(policy, &rollout.trace);
        EpisodeOptions epi = options.episode;
        epi.seed = mix_seed(options.seed, static_cast<std::uint64_t>(step), q, g);
        const Trajectory traj = run_episode(task.video, task.query, recorder, epi);
        rollout.reward = total_reward(traj, judge, weights).total;
        rewards.push_back(rollout.reward);
        reward_sum += rollout.reward;
      }
      const bool all_equal =
          std::adjacent_find(rewards.begin(), rewards.end(),
                             [](double a, double b) { return a != b; }) == rewards.end();
      if (all_equal) ++degenerate;  // advantages vanish; the step is pure KL
      std::vector<double> advantages;
      if (options.plain_reinforce) {
        advantages = rewards;
      } else {
        advantages = group_advantages(rewards);
      }
      for (int g = 0; g < options.group_size; ++g) {
        group[static_cast<std::size_t>(g)].advantage = advantages[static_cast<std::size_t>(g)];
        rollouts.push_back(std::move(group[static_cast<std::size_t>(g)]));
      }
    }

    // Gradient of sum_i A_i log p(tau_i) / N and of the KL estimate.
    std::vector<double> policy_grad(params.theta.size(), 0.0);
    std::vector<double> kl_grad(params.theta.size(), 0.0);
    double kl_sum = 0.0;
    double entropy_sum = 0.0;
    double objective = 0.0;
    std::size_t pair_count = 0;

    for (const Rollout& rollout : rollouts) {
      double traj_logprob = 0.0;
      for (const StatePair& p : rollout.trace) {
        const LogProbGrad lp = logprob_and_grad(params, p.features, p.action);
        const LogProbGrad lr = logprob_and_grad(reference, p.features, p.action);
        traj_logprob += lp.logprob;
        kl_sum += lp.logprob - lr.logprob;
        entropy_sum += policy_entropy(params, p.features);
        for (std::size_t k = 0; k < params.theta.size(); ++k) {
          policy_grad[k] += rollout.advantage * lp.grad[k];
          kl_grad[k] += lp.grad[k];
        }
        ++pair_count;
      }
      objective += rollout.advantage * traj_logprob;
    }
    const double inv_rollouts = 1.0 / static_cast<double>(rollouts.size());
    const double inv_pairs = pair_count > 0 ? 1.0 / static_cast<double>(pair_count) : 0.0;
    const double kl_hat = kl_sum * inv_pairs;
    const double lambda = options.plain_reinforce ? 0.0 : options.kl_lambda;

    for (std::size_t k = 0; k < params.theta.size(); ++k) {
      const double ascent =
          policy_grad[k] * inv_rollouts - lambda * kl_grad[k] * inv_pairs;
      params.theta[k] += options.lr * ascent;
    }

    if (log) {
      GrpoLogRow row;
      row.step = step;
      row.reward_mean = reward_sum / static_cast<double>(rollouts.size());
      row.kl = kl_hat;
      row.entropy = entropy_sum * inv_pairs;
      row.loss = -(objective * inv_rollouts) + lambda * kl_hat;
      row.degenerate_groups = degenerate;
      log->push_back(row);
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// Data enhancement
// ---------------------------------------------------------------------------

std::vector<QueryInstance> enhance_dataset(const std::vector<Trajectory>& failures,
                                           const std::vector<SyntheticVideo>& video_pool,
                                           std::uint64_t seed, int count,
                                           const QueryGenParams& gen) {
  if (video_pool.empty()) throw EmptyPool("enhance_dataset needs a video pool");

  // Weight the query families by their failure counts; uniform without data.
  std::map<QueryTask, double> weights = {
      {QueryTask::kIdentification, 0.0},
      {QueryTask::kWindow, 0.0},
      {QueryTask::kCounting, 0.0},
      {QueryTask::kOrdering, 0.0},
  };
  if (failures.empty()) {
    for (auto& [task, w] : weights) w = 1.0;
  } else {
    for (const Trajectory& t : failures) weights[t.query.task] += 1.0;
  }
  double total_w = 0.0;
  for (const auto& [task, w] : weights) total_w += w;

  Rng rng(mix_seed(seed, 0xe47a4cedULL));
  std::vector<QueryInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    double u = rng.next_real() * total_w;
    QueryTask task = QueryTask::kOrdering;
    for (const auto& [t, w] : weights) {
      if ((u -= w) < 0) {
        task = t;
        break;
      }
    }
    const SyntheticVideo& video = video_pool[rng.next_index(video_pool.size())];
    QueryInstance q = generate_query_for_task(
        video, mix_seed(seed, static_cast<std::uint64_t>(out.size()), attempts),
        QueryKind::kOpenEnded, task, gen);
    ++attempts;
    if (oracle_answer(video, q) != q.answer_gt) continue;  // never at desk scale
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace eva
