#pragma once

#include <string>
#include <vector>

#include "eva/agent.hpp"
#include "eva/errors.hpp"
#include "eva/policy.hpp"

namespace eva {

struct RewardWeights {
  double w_acc = 1.0;
  double w_fmt = 1.0;
};

enum class RewardKind { kCsv, kRouge };

struct RewardBreakdown {
  double r_acc = 0.0;            // [0, 1]
  double r_fmt = 0.0;            // 0 or kFormatReward
  double total = 0.0;            // w_acc * r_acc + w_fmt * r_fmt
  RewardKind kind = RewardKind::kRouge;
  double w_acc = 1.0;
  double w_fmt = 1.0;
  bool judge_no_frames = false;  // CSV asked to judge a tool-free trajectory
  std::string judge_answer;      // the judge's letter, when consulted
};

// The compensation paid to wrong answers that at least called the tool.
inline constexpr double kFormatReward = 0.05;

// Open-ended answers at or above this ROUGE value count as correct for the
// format clause and for reported accuracy.
inline constexpr double kOpenEndedCorrectThreshold = 0.5;

// Lowercased alphanumeric tokens, Porter-stemmed.
std::vector<std::string> rouge_tokens(const std::string& text);

// Mean of ROUGE-1, ROUGE-2 and ROUGE-L F1 between candidate and reference.
// Both sides empty -> 1.0; exactly one empty -> 0.0 (applied per component
// on the n-gram lists as well, so identical texts always score 1).
double rouge_reward(const std::string& candidate, const std::string& reference);

struct CsvOutcome {
  int value = 0;          // 1 iff both the judge and the agent are correct
  bool no_frames = false; // flagged when the trajectory has zero tool rounds
  std::string judge_answer;
};

// Completeness self-verification: the judge sees the question, the choices
// and the last tool round's observations, and must agree with the ground
// truth for the point to count. Requires a multiple-choice, answered
// trajectory.
CsvOutcome csv_reward(const Trajectory& trajectory, const Policy& judge);

// kFormatReward iff the trajectory executed at least one tool call and the
// answer was not correct; 0 otherwise.
double format_reward(const Trajectory& trajectory, bool correct);

RewardBreakdown total_reward(const Trajectory& trajectory, const Policy& judge,
                             const RewardWeights& weights);

// Semantic-aggregation-hallucination ratio: (out - in) / (1 - in).
// Throws DegenerateDenominator when in_acc == 1.
double sah_ratio(double in_acc, double out_acc);

}  // namespace eva
