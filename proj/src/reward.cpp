#include "eva/reward.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "eva/porter.hpp"

namespace eva {

std::vector<std::string> rouge_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      tokens.push_back(porter_stem(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(porter_stem(current));
  return tokens;
}

namespace {

double f1(double matches, double cand_total, double ref_total) {
  if (cand_total <= 0.0 && ref_total <= 0.0) return 1.0;
  if (cand_total <= 0.0 || ref_total <= 0.0) return 0.0;
  const double p = matches / cand_total;
  const double r = matches / ref_total;
  if (p + r <= 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

// Clipped n-gram overlap F1.
double rouge_n(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
               std::size_t n) {
  auto ngrams = [n](const std::vector<std::string>& toks) {
    std::map<std::vector<std::string>, int> counts;
    if (toks.size() >= n) {
      for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)]++;
      }
    }
    return counts;
  };
  const auto c = ngrams(cand);
  const auto r = ngrams(ref);
  double c_total = 0.0, r_total = 0.0, matches = 0.0;
  for (const auto& [g, k] : c) c_total += k;
  for (const auto& [g, k] : r) r_total += k;
  for (const auto& [g, k] : c) {
    auto it = r.find(g);
    if (it != r.end()) matches += std::min(k, it->second);
  }
  return f1(matches, c_total, r_total);
}

// Longest-common-subsequence F1.
double rouge_l(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  if (cand.empty() && ref.empty()) return 1.0;
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<std::vector<int>> dp(cand.size() + 1, std::vector<int>(ref.size() + 1, 0));
  for (std::size_t i = 1; i <= cand.size(); ++i) {
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      dp[i][j] = cand[i - 1] == ref[j - 1] ? dp[i - 1][j - 1] + 1
                                           : std::max(dp[i - 1][j], dp[i][j - 1]);
    }
  }
  const double lcs = dp[cand.size()][ref.size()];
  return f1(lcs, static_cast<double>(cand.size()), static_cast<double>(ref.size()));
}

}  // namespace

double rouge_reward(const std::string& candidate, const std::string& reference) {
  const std::vector<std::string> cand = rouge_tokens(candidate);
  const std::vector<std::string> ref = rouge_tokens(reference);
  if (cand.empty() && ref.empty()) return 1.0;
  if (cand.empty() || ref.empty()) return 0.0;
  const double r1 = rouge_n(cand, ref, 1);
  const double r2 = rouge_n(cand, ref, 2);
  const double rl = rouge_l(cand, ref);
  return (r1 + r2 + rl) / 3.0;
}

CsvOutcome csv_reward(const Trajectory& trajectory, const Policy& judge) {
  if (trajectory.query.query_kind != QueryKind::kMultipleChoice) {
    throw std::invalid_argument("csv_reward needs a multiple-choice trajectory");
  }
  if (!trajectory.final_answer.has_value()) {
    throw std::invalid_argument("csv_reward needs an answered trajectory");
  }

  CsvOutcome out;
  if (trajectory.frame_batches.empty()) {
    out.no_frames = true;
    return out;
  }

  // The judge sees the question (with choices) and the last tool round's
  // retrieved frames, nothing else.
  const FrameBatch& last = trajectory.frame_batches.back();
  BeliefState judge_state;
  judge_state.q = trajectory.query.question;
  judge_state.query = &trajectory.query;
  judge_state.video_id = trajectory.video_id;
  judge_state.video_duration_s = last.call.end_time;
  judge_state.h.push_back(HistoryItem{HistoryItem::Kind::kText, trajectory.query.question, -1});
  judge_state.batches.push_back(last);
  judge_state.frames = last.observations;
  judge_state.h.push_back(HistoryItem{HistoryItem::Kind::kFrames, {}, 0});

  const PolicyOutput judged = judge.act(judge_state, 0);
  std::string letter;
  if (judged.action_trace.ok() &&
      judged.action_trace.action->kind == AgentAction::Kind::kFinalAnswer) {
    letter = judged.action_trace.action->answer;
  }
  out.judge_answer = letter;
  const bool judge_correct = letter == trajectory.query.answer_gt;
  const bool agent_correct = *trajectory.final_answer == trajectory.query.answer_gt;
  out.value = (judge_correct && agent_correct) ? 1 : 0;
  return out;
}

double format_reward(const Trajectory& trajectory, bool correct) {
  return (!correct && trajectory.executed_tool_calls() >= 1) ? kFormatReward : 0.0;
}

RewardBreakdown total_reward(const Trajectory& trajectory, const Policy& judge,
                             const RewardWeights& weights) {
  RewardBreakdown out;
  out.w_acc = weights.w_acc;
  out.w_fmt = weights.w_fmt;

  bool correct = false;
  if (trajectory.query.query_kind == QueryKind::kMultipleChoice) {
    out.kind = RewardKind::kCsv;
    if (trajectory.final_answer.has_value()) {
      const CsvOutcome csv = csv_reward(trajectory, judge);
      out.r_acc = csv.value;
      out.judge_no_frames = csv.no_frames;
      out.judge_answer = csv.judge_answer;
    }
    correct = out.r_acc == 1.0;
  } else {
    out.kind = RewardKind::kRouge;
    if (trajectory.final_answer.has_value()) {
      out.r_acc = rouge_reward(*trajectory.final_answer, trajectory.query.answer_gt);
    }
    correct = out.r_acc >= kOpenEndedCorrectThreshold;
  }
  out.r_fmt = format_reward(trajectory, correct);
  out.total = weights.w_acc * out.r_acc + weights.w_fmt * out.r_fmt;
  return out;
}

double sah_ratio(double in_acc, double out_acc) {
  if (in_acc < 0.0 || in_acc > 1.0 || out_acc < 0.0 || out_acc > 1.0) {
    throw std::invalid_argument("accuracies must lie in [0, 1]");
  }
  if (in_acc == 1.0) {
    throw DegenerateDenominator("sah_ratio undefined at in_acc == 1");
  }
  return (out_acc - in_acc) / (1.0 - in_acc);
}

}  // namespace eva
