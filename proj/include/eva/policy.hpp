#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "eva/agent.hpp"
#include "eva/errors.hpp"

namespace eva {

struct PolicyOutput {
  std::string round_text;
  std::optional<double> logprob;  // set by parametric policies
  ParsedAction action_trace;      // == parse_action(round_text)
  std::string summary;
  std::string plan;
  std::optional<std::string> reflection;
};

// Action-producing interface. Implementations must be deterministic given
// (parameters, state, seed) and safe for concurrent read-only use.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyOutput act(const BeliefState& state, std::uint64_t seed) const = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Discrete action space for the toy parametric policy
// ---------------------------------------------------------------------------

struct WindowFraction {
  double start_frac = 0.0;
  double end_frac = 1.0;
};

// Tool calls are composed from a window grid scaled by the video duration, a
// frame-count set and a resize set; answer actions pick a slot in the
// evidence-ranked candidate list.
struct DiscreteActionSpace {
  std::vector<WindowFraction> window_grid;
  std::vector<int> nframes_set{4, 8, 16, 32};
  std::vector<double> resize_set{0.1, 0.25, 0.5, 1.0};
  int answer_slots = 8;

  // Full span, the 4 quarters and the 8 eighths.
  static DiscreteActionSpace default_space();

  int num_call_actions() const {
    return static_cast<int>(window_grid.size() * nframes_set.size() * resize_set.size());
  }
  int size() const { return num_call_actions() + answer_slots; }
  bool is_answer(int action) const { return action >= num_call_actions(); }
  int slot_of(int action) const { return action - num_call_actions(); }
  int answer_action(int slot) const { return num_call_actions() + slot; }

  FrameSelectCall call_at(int action, double duration_s) const;
  int call_index(int window_i, int nframes_i, int resize_i) const;

  // Nearest in-space call action (used to map teacher calls onto the grid).
  int snap_call(const FrameSelectCall& call, double duration_s) const;
};

// ---------------------------------------------------------------------------
// Toy differentiable policy
// ---------------------------------------------------------------------------

inline constexpr int kFeatureCount = 5;
using Features = std::array<double, kFeatureCount>;

// (round_index, covered duration fraction, distinct labels seen, remaining
// token budget fraction, found_info flag) - all scaled to ~[0, 1].
Features state_features(const BeliefState& state);

struct ToyPolicyParams {
  int n_actions = 0;
  std::vector<double> theta;  // kFeatureCount x n_actions, row-major

  static ToyPolicyParams zeros(int n_actions);
  double at(int feature, int action) const {
    return theta[static_cast<std::size_t>(feature) * n_actions + action];
  }
  double& at(int feature, int action) {
    return theta[static_cast<std::size_t>(feature) * n_actions + action];
  }
};

std::vector<double> action_logits(const ToyPolicyParams& params, const Features& f);
std::vector<double> softmax(const std::vector<double>& logits);

struct LogProbGrad {
  double logprob = 0.0;
  std::vector<double> grad;  // same layout as theta
};

// logprob of `action` under the softmax policy plus its exact gradient
// d logprob / d theta = features (x) (one_hot - softmax).
// Throws ActionNotInSpace for an out-of-range action index.
LogProbGrad logprob_and_grad(const ToyPolicyParams& params, const Features& features,
                             int action);

double policy_entropy(const ToyPolicyParams& params, const Features& features);

class ToyPolicy : public Policy {
 public:
  ToyPolicy(DiscreteActionSpace space, ToyPolicyParams params,
            std::string name = "toy");

  PolicyOutput act(const BeliefState& state, std::uint64_t seed) const override;
  std::string name() const override { return name_; }

  // act() plus the sampled action index (used by the trainers).
  PolicyOutput act_traced(const BeliefState& state, std::uint64_t seed,
                          int* action_index) const;

  const DiscreteActionSpace& space() const { return space_; }
  const ToyPolicyParams& params() const { return params_; }
  void set_params(ToyPolicyParams p) { params_ = std::move(p); }

 private:
  DiscreteActionSpace space_;
  ToyPolicyParams params_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Scripted policies (teachers and baselines)
// ---------------------------------------------------------------------------

// Fig-7 style workflow: cheap global scan, one guided zoom, answer.
class GlobalThenZoomPolicy : public Policy {
 public:
  PolicyOutput act(const BeliefState& state, std::uint64_t seed) const override;
  std::string name() const override { return "global_then_zoom"; }
};

// Fig-8 style workflow: one dense full-span call, then answer.
class DirectDensePolicy : public Policy {
 public:
  PolicyOutput act(const BeliefState& state, std::uint64_t seed) const override;
  std::string name() const override { return "direct_dense"; }
};

// Cheap full-span scan then answer; never escalates. SFT teacher.
class ScanThenAnswerPolicy : public Policy {
 public:
  explicit ScanThenAnswerPolicy(double scan_resize = 0.5) : scan_resize_(scan_resize) {}
  PolicyOutput act(const BeliefState& state, std::uint64_t seed) const override;
  std::string name() const override { return "scan_then_answer"; }

 private:
  double scan_resize_;
};

// Answers immediately with whatever the (empty) evidence suggests.
class AnswerFirstPolicy : public Policy {
 public:
  PolicyOutput act(const BeliefState& state, std::uint64_t seed) const override;
  std::string name() const override { return "answer_first"; }
};

// Dense sampling of a short window (fps > 1), then answer.
class OverDensePolicy : public Policy {
 public:
  PolicyOutput act(const BeliefState& state, std::uint64_t seed) const override;
  std::string name() const override { return "over_dense"; }
};

// One starved global scan (budget << 15), then answer.
class UnderDensePolicy : public Policy {
 public:
  PolicyOutput act(const BeliefState& state, std::uint64_t seed) const override;
  std::string name() const override { return "under_dense"; }
};

// Uniform over the default action space (theta = 0).
std::unique_ptr<ToyPolicy> make_random_policy();

// ---------------------------------------------------------------------------
// Judge
// ---------------------------------------------------------------------------

// Oracle-backed scripted judge for the CSV reward: answers the ground-truth
// letter iff the frames it was shown cover every evidence window, otherwise
// deterministically picks a wrong letter.
class EvidenceJudgePolicy : public Policy {
 public:
  PolicyOutput act(const BeliefState& state, std::uint64_t seed) const override;
  std::string name() const override { return "evidence_judge"; }
};

// ---------------------------------------------------------------------------
// External chat-endpoint adapter
// ---------------------------------------------------------------------------

struct ChatEndpointConfig {
  std::string host = "127.0.0.1";
  int port = 8000;
  std::string path = "/v1/chat/completions";
  std::string model = "eva-agent";
  int timeout_ms = 30000;
  int max_attempts = 3;
  int backoff_base_ms = 200;
};

// Renders the belief state as chat messages, sends one chat-completion
// request and returns the raw text. Retries with exponential backoff; throws
// ExternalEndpointError after max_attempts failures.
class ChatAdapterPolicy : public Policy {
 public:
  explicit ChatAdapterPolicy(ChatEndpointConfig config) : config_(std::move(config)) {}
  PolicyOutput act(const BeliefState& state, std::uint64_t seed) const override;
  std::string name() const override { return "chat_adapter"; }

 private:
  ChatEndpointConfig config_;
};

}  // namespace eva
