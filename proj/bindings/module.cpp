// Python bindings for the core operations: the synthetic environment, the
// frame-selection tool, the reflector, the agent loop, rewards and the three
// training stages. Structured artifacts also travel as JSON strings so
// python-side tooling can reuse the exact file formats.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eva/config.hpp"
#include "eva/evidence.hpp"
#include "eva/harness.hpp"
#include "eva/serialization.hpp"

namespace py = pybind11;
using namespace eva;

namespace {

QueryKind parse_kind(const std::string& s) { return query_kind_from(s); }

Json parse_json(const std::string& text) { return Json::parse(text); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Agentic video-understanding loop over a synthetic environment";

  py::register_exception<InvalidParams>(m, "InvalidParamsError");
  py::register_exception<NoEvents>(m, "NoEventsError");
  py::register_exception<OutOfRange>(m, "OutOfRangeError");
  py::register_exception<EmptyCorpus>(m, "EmptyCorpusError");
  py::register_exception<SingleLabelCorpus>(m, "SingleLabelCorpusError");
  py::register_exception<EmptyPool>(m, "EmptyPoolError");
  py::register_exception<DegenerateDenominator>(m, "DegenerateDenominatorError");
  py::register_exception<ActionNotInSpace>(m, "ActionNotInSpaceError");
  py::register_exception<ExternalEndpointError>(m, "ExternalEndpointErrorError");
  py::register_exception<NoToolRounds>(m, "NoToolRoundsError");
  py::register_exception<ConfigError>(m, "ConfigErrorError");

  // ------------------------------------------------------------------ types
  py::class_<TimeWindow>(m, "TimeWindow")
      .def(py::init<>())
      .def(py::init([](double a, double b) { return TimeWindow{a, b}; }))
      .def_readwrite("start_s", &TimeWindow::start_s)
      .def_readwrite("end_s", &TimeWindow::end_s)
      .def("length", &TimeWindow::length);

  py::class_<Event>(m, "Event")
      .def_readonly("id", &Event::id)
      .def_readonly("window", &Event::window)
      .def_readonly("label", &Event::label)
      .def_readonly("min_resize", &Event::min_resize)
      .def_readonly("min_density_fps", &Event::min_density_fps)
      .def_property_readonly("kind", [](const Event& e) { return to_string(e.kind); });

  py::class_<SyntheticVideo>(m, "SyntheticVideo")
      .def_readonly("id", &SyntheticVideo::id)
      .def_readonly("duration_s", &SyntheticVideo::duration_s)
      .def_readonly("width_px", &SyntheticVideo::width_px)
      .def_readonly("height_px", &SyntheticVideo::height_px)
      .def_readonly("events", &SyntheticVideo::events)
      .def_readonly("seed", &SyntheticVideo::seed)
      .def("to_json", [](const SyntheticVideo& v) { return to_json(v).dump(); })
      .def_static("from_json",
                  [](const std::string& s) { return video_from(parse_json(s)); });

  py::class_<GeneratorParams>(m, "GeneratorParams")
      .def(py::init<>())
      .def_readwrite("duration_range", &GeneratorParams::duration_range)
      .def_readwrite("event_count_range", &GeneratorParams::event_count_range)
      .def_readwrite("window_len_range", &GeneratorParams::window_len_range)
      .def_readwrite("min_gap_s", &GeneratorParams::min_gap_s)
      .def_readwrite("same_label_gap_s", &GeneratorParams::same_label_gap_s)
      .def_readwrite("motion_fraction", &GeneratorParams::motion_fraction)
      .def_readwrite("resize_grid", &GeneratorParams::resize_grid)
      .def_readwrite("density_grid", &GeneratorParams::density_grid)
      .def_readwrite("resolution_p", &GeneratorParams::resolution_p)
      .def_readwrite("labels", &GeneratorParams::labels);

  py::class_<Choice>(m, "Choice")
      .def_property_readonly("letter", [](const Choice& c) { return std::string(1, c.letter); })
      .def_readonly("text", &Choice::text);

  py::class_<QueryInstance>(m, "QueryInstance")
      .def_readonly("video_id", &QueryInstance::video_id)
      .def_readonly("question", &QueryInstance::question)
      .def_readonly("answer_gt", &QueryInstance::answer_gt)
      .def_property_readonly("query_kind",
                             [](const QueryInstance& q) { return to_string(q.query_kind); })
      .def_readonly("choices", &QueryInstance::choices)
      .def_readonly("evidence_windows", &QueryInstance::evidence_windows)
      .def_property_readonly("task",
                             [](const QueryInstance& q) { return to_string(q.task); })
      .def("to_json", [](const QueryInstance& q) { return to_json(q).dump(); })
      .def_static("from_json",
                  [](const std::string& s) { return query_from(parse_json(s)); });

  py::class_<FrameObservation>(m, "FrameObservation")
      .def_readonly("timestamp_s", &FrameObservation::timestamp_s)
      .def_readonly("labels", &FrameObservation::labels);

  py::class_<FrameSelectCall>(m, "FrameSelectCall")
      .def(py::init<>())
      .def(py::init([](double s, double e, int n, double r) {
        return FrameSelectCall{s, e, n, r};
      }))
      .def_readwrite("start_time", &FrameSelectCall::start_time)
      .def_readwrite("end_time", &FrameSelectCall::end_time)
      .def_readwrite("nframes", &FrameSelectCall::nframes)
      .def_readwrite("resize", &FrameSelectCall::resize);

  py::class_<TokenProfile>(m, "TokenProfile")
      .def(py::init<>())
      .def(py::init([](const std::string& name, int base) {
        return TokenProfile{name, base};
      }))
      .def_readwrite("name", &TokenProfile::name)
      .def_readwrite("base_tokens_per_frame", &TokenProfile::base_tokens_per_frame);

  py::class_<FrameBatch>(m, "FrameBatch")
      .def_readonly("call", &FrameBatch::call)
      .def_readonly("timestamps", &FrameBatch::timestamps)
      .def_readonly("observations", &FrameBatch::observations)
      .def_readonly("fps", &FrameBatch::fps)
      .def_readonly("visual_budget", &FrameBatch::visual_budget)
      .def_readonly("token_cost", &FrameBatch::token_cost);

  py::class_<Verdict>(m, "Verdict")
      .def_property_readonly("corrected", &Verdict::corrected)
      .def_property_readonly("corrected_call",
                             [](const Verdict& v) { return v.corrected_call; })
      .def_property_readonly("triggered_rules",
                             [](const Verdict& v) {
                               std::vector<std::string> names;
                               for (RuleId r : v.triggered_rules) names.push_back(rule_name(r));
                               return names;
                             })
      .def_readonly("rationale", &Verdict::rationale);

  py::class_<EpisodeLimits>(m, "EpisodeLimits")
      .def(py::init<>())
      .def_readwrite("max_rounds", &EpisodeLimits::max_rounds)
      .def_readwrite("max_tokens", &EpisodeLimits::max_tokens);

  py::class_<EpisodeOptions>(m, "EpisodeOptions")
      .def(py::init<>())
      .def_readwrite("limits", &EpisodeOptions::limits)
      .def_readwrite("profile", &EpisodeOptions::profile)
      .def_readwrite("seed", &EpisodeOptions::seed)
      .def_readwrite("config_hash", &EpisodeOptions::config_hash)
      .def("set_reflector",
           [](EpisodeOptions& o, const std::string& mode) {
             o.reflector = reflector_mode_from(mode);
           })
      .def("clear_reflector", [](EpisodeOptions& o) { o.reflector.reset(); });

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("video_id", &Trajectory::video_id)
      .def_readonly("video_duration_s", &Trajectory::video_duration_s)
      .def_readonly("episode_seed", &Trajectory::episode_seed)
      .def_readonly("policy_name", &Trajectory::policy_name)
      .def_readonly("query", &Trajectory::query)
      .def_readonly("frame_batches", &Trajectory::frame_batches)
      .def_property_readonly("final_answer",
                             [](const Trajectory& t) { return t.final_answer; })
      .def_property_readonly("outcome",
                             [](const Trajectory& t) { return to_string(t.outcome); })
      .def_readonly("tokens_spent", &Trajectory::tokens_spent)
      .def_property_readonly("rounds",
                             [](const Trajectory& t) { return t.rounds.size(); })
      .def("to_json", [](const Trajectory& t) { return trajectory_to_json(t).dump(); })
      .def_static("from_json", [](const std::string& s) {
        return trajectory_from_json(parse_json(s));
      });

  py::class_<RewardWeights>(m, "RewardWeights")
      .def(py::init<>())
      .def(py::init([](double a, double f) { return RewardWeights{a, f}; }))
      .def_readwrite("w_acc", &RewardWeights::w_acc)
      .def_readwrite("w_fmt", &RewardWeights::w_fmt);

  py::class_<RewardBreakdown>(m, "RewardBreakdown")
      .def_readonly("r_acc", &RewardBreakdown::r_acc)
      .def_readonly("r_fmt", &RewardBreakdown::r_fmt)
      .def_readonly("total", &RewardBreakdown::total)
      .def_property_readonly("kind",
                             [](const RewardBreakdown& r) { return to_string(r.kind); })
      .def_readonly("judge_no_frames", &RewardBreakdown::judge_no_frames)
      .def_readonly("judge_answer", &RewardBreakdown::judge_answer)
      .def("to_json", [](const RewardBreakdown& r) { return to_json(r).dump(); });

  py::class_<Policy, std::shared_ptr<Policy>>(m, "Policy")
      .def_property_readonly("name", &Policy::name);

  py::class_<DiscreteActionSpace>(m, "DiscreteActionSpace")
      .def(py::init<>())
      .def_static("default_space", &DiscreteActionSpace::default_space)
      .def_property_readonly("size", &DiscreteActionSpace::size)
      .def_property_readonly("num_call_actions", &DiscreteActionSpace::num_call_actions)
      .def_readwrite("answer_slots", &DiscreteActionSpace::answer_slots)
      .def("call_at", &DiscreteActionSpace::call_at)
      .def("snap_call", &DiscreteActionSpace::snap_call)
      .def("is_answer", &DiscreteActionSpace::is_answer);

  py::class_<ToyPolicyParams>(m, "ToyPolicyParams")
      .def_static("zeros", &ToyPolicyParams::zeros)
      .def_readonly("n_actions", &ToyPolicyParams::n_actions)
      .def_readwrite("theta", &ToyPolicyParams::theta);

  py::class_<StatePair>(m, "StatePair")
      .def(py::init<>())
      .def_readwrite("features", &StatePair::features)
      .def_readwrite("action", &StatePair::action);

  py::class_<SftExample>(m, "SftExample")
      .def(py::init<>())
      .def_readwrite("features", &SftExample::features)
      .def_readwrite("action", &SftExample::action)
      .def_readwrite("source", &SftExample::source)
      .def_readwrite("experience_tags", &SftExample::experience_tags);

  py::class_<KtoExample>(m, "KtoExample")
      .def(py::init<>())
      .def_readwrite("trajectory_id", &KtoExample::trajectory_id)
      .def_readwrite("chosen", &KtoExample::chosen)
      .def_property_readonly("failure_category",
                             [](const KtoExample& e) {
                               return std::string(failure_category_name(e.failure_category));
                             })
      .def_readwrite("pairs", &KtoExample::pairs);

  py::class_<ScoredTrajectory>(m, "ScoredTrajectory")
      .def_readonly("trajectory", &ScoredTrajectory::trajectory)
      .def_readonly("reward", &ScoredTrajectory::reward);

  py::class_<TrainTask>(m, "TrainTask")
      .def(py::init<>())
      .def_readwrite("video", &TrainTask::video)
      .def_readwrite("query", &TrainTask::query);

  py::class_<SftOptions>(m, "SftOptions")
      .def(py::init<>())
      .def_readwrite("epochs", &SftOptions::epochs)
      .def_readwrite("lr", &SftOptions::lr)
      .def_readwrite("batch", &SftOptions::batch)
      .def_readwrite("seed", &SftOptions::seed);

  py::class_<KtoOptions>(m, "KtoOptions")
      .def(py::init<>())
      .def_readwrite("beta", &KtoOptions::beta)
      .def_readwrite("lr", &KtoOptions::lr)
      .def_readwrite("epochs", &KtoOptions::epochs)
      .def_readwrite("batch", &KtoOptions::batch)
      .def_readwrite("seed", &KtoOptions::seed);

  py::class_<GrpoOptions>(m, "GrpoOptions")
      .def(py::init<>())
      .def_readwrite("group_size", &GrpoOptions::group_size)
      .def_readwrite("kl_lambda", &GrpoOptions::kl_lambda)
      .def_readwrite("lr", &GrpoOptions::lr)
      .def_readwrite("steps", &GrpoOptions::steps)
      .def_readwrite("queries_per_step", &GrpoOptions::queries_per_step)
      .def_readwrite("plain_reinforce", &GrpoOptions::plain_reinforce)
      .def_readwrite("seed", &GrpoOptions::seed)
      .def_readwrite("episode", &GrpoOptions::episode);

  py::class_<GrpoLogRow>(m, "GrpoLogRow")
      .def_readonly("step", &GrpoLogRow::step)
      .def_readonly("reward_mean", &GrpoLogRow::reward_mean)
      .def_readonly("kl", &GrpoLogRow::kl)
      .def_readonly("entropy", &GrpoLogRow::entropy)
      .def_readonly("loss", &GrpoLogRow::loss)
      .def_readonly("degenerate_groups", &GrpoLogRow::degenerate_groups);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("total", &EvalReport::total)
      .def_readonly("accuracy", &EvalReport::accuracy)
      .def_readonly("mean_tokens", &EvalReport::mean_tokens)
      .def_readonly("mean_rounds", &EvalReport::mean_rounds)
      .def_readonly("mean_frames", &EvalReport::mean_frames)
      .def_readonly("estimated_frames", &EvalReport::estimated_frames)
      .def_readonly("mc_accuracy", &EvalReport::mc_accuracy)
      .def_readonly("oe_accuracy", &EvalReport::oe_accuracy)
      .def_readonly("oe_mean_rouge", &EvalReport::oe_mean_rouge)
      .def_readonly("answer_without_evidence_rate",
                    &EvalReport::answer_without_evidence_rate)
      .def("to_json", [](const EvalReport& r) { return eval_report_to_json(r).dump(); });

  // ------------------------------------------------------------- operations
  m.def("default_label_vocabulary", &default_label_vocabulary);
  m.def("generate_video", &generate_video, py::arg("seed"), py::arg("params"));
  m.def(
      "generate_query",
      [](const SyntheticVideo& v, std::uint64_t seed, const std::string& kind) {
        return generate_query(v, seed, parse_kind(kind));
      },
      py::arg("video"), py::arg("seed"), py::arg("kind") = "open_ended");
  m.def("observe", &observe, py::arg("video"), py::arg("timestamps"), py::arg("resize"));
  m.def("oracle_answer", &oracle_answer, py::arg("video"), py::arg("query"));

  m.def("validate_call", [](const FrameSelectCall& call, double duration) {
    std::vector<std::string> out;
    for (const Violation& v : validate(call, duration)) {
      out.push_back(std::string(violation_name(v.code)) + ": " + v.message);
    }
    return out;
  });
  m.def("execute", &execute, py::arg("call"), py::arg("video"),
        py::arg("profile") = TokenProfile{});
  m.def("token_cost", &token_cost, py::arg("call"), py::arg("profile") = TokenProfile{});
  m.def("visual_budget", &visual_budget);
  m.def("call_fps", &call_fps);
  m.def("sample_timestamps", &sample_timestamps);

  m.def(
      "audit",
      [](std::optional<FrameSelectCall> prev_call, bool found_info,
         const FrameSelectCall& proposed, double duration, const std::string& mode) {
        std::optional<PrevRound> prev;
        if (prev_call) prev = PrevRound{*prev_call, found_info};
        return audit(prev, proposed, duration, reflector_mode_from(mode));
      },
      py::arg("prev_call"), py::arg("found_info"), py::arg("proposed"),
      py::arg("duration"), py::arg("mode") = "lenient");

  m.def("parse_action", [](const std::string& text) {
    const ParsedAction parsed = parse_action(text);
    py::dict out;
    if (parsed.ok()) {
      if (parsed.action->kind == AgentAction::Kind::kToolCall) {
        out["kind"] = "tool_call";
        out["call"] = parsed.action->call;
      } else {
        out["kind"] = "final_answer";
        out["answer"] = parsed.action->answer;
      }
    } else {
      out["kind"] = "error";
      out["error"] = parse_error_name(parsed.error);
      out["message"] = parsed.message;
    }
    return out;
  });
  m.def("render_tool_envelope", &render_tool_envelope);

  m.def(
      "make_policy",
      [](const std::string& kind, std::optional<ToyPolicyParams> params,
         double scan_resize) -> std::shared_ptr<Policy> {
        if (kind == "toy" || kind == "random") {
          DiscreteActionSpace space = DiscreteActionSpace::default_space();
          ToyPolicyParams p = params ? *params : ToyPolicyParams::zeros(space.size());
          return std::make_shared<ToyPolicy>(std::move(space), std::move(p), kind);
        }
        if (kind == "global_then_zoom") return std::make_shared<GlobalThenZoomPolicy>();
        if (kind == "direct_dense") return std::make_shared<DirectDensePolicy>();
        if (kind == "scan_then_answer")
          return std::make_shared<ScanThenAnswerPolicy>(scan_resize);
        if (kind == "answer_first") return std::make_shared<AnswerFirstPolicy>();
        if (kind == "evidence_judge") return std::make_shared<EvidenceJudgePolicy>();
        throw ConfigError("unknown policy kind: " + kind);
      },
      py::arg("kind"), py::arg("params") = std::nullopt, py::arg("scan_resize") = 0.5);

  m.def("run_episode", &run_episode, py::arg("video"), py::arg("query"),
        py::arg("policy"), py::arg("options"));
  m.def("render_transcript", [](const Trajectory& t) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const ChatMessage& msg : render_transcript(t)) {
      out.emplace_back(msg.role, msg.content);
    }
    return out;
  });

  m.def("rouge_reward", &rouge_reward, py::arg("candidate"), py::arg("reference"));
  m.def("porter_stem", &porter_stem);
  m.def("format_reward", &format_reward);
  m.def(
      "total_reward",
      [](const Trajectory& t, const RewardWeights& weights,
         std::shared_ptr<Policy> judge) {
        if (judge) return total_reward(t, *judge, weights);
        const EvidenceJudgePolicy default_judge;
        return total_reward(t, default_judge, weights);
      },
      py::arg("trajectory"), py::arg("weights") = RewardWeights{},
      py::arg("judge") = nullptr);
  m.def("sah_ratio", &sah_ratio, py::arg("in_acc"), py::arg("out_acc"));

  m.def("group_advantages", &group_advantages, py::arg("rewards"),
        py::arg("eps") = 1e-8);
  m.def("state_features_size", []() { return kFeatureCount; });
  m.def(
      "logprob_and_grad",
      [](const ToyPolicyParams& params, const Features& features, int action) {
        const LogProbGrad lp = logprob_and_grad(params, features, action);
        return py::make_tuple(lp.logprob, lp.grad);
      },
      py::arg("params"), py::arg("features"), py::arg("action"));

  m.def("trajectory_pairs", &trajectory_pairs);
  m.def("run_sft", &run_sft, py::arg("corpus"), py::arg("space"), py::arg("options"),
        py::arg("epoch_losses") = nullptr);
  m.def(
      "label_kto",
      [](const std::vector<ScoredTrajectory>& scored, const DiscreteActionSpace& space,
         double chosen_threshold, double target_chosen_fraction) {
        KtoLabelRules rules;
        rules.chosen_threshold = chosen_threshold;
        rules.target_chosen_fraction = target_chosen_fraction;
        return label_kto(scored, space, rules);
      },
      py::arg("trajectories"), py::arg("space"), py::arg("chosen_threshold") = 0.9,
      py::arg("target_chosen_fraction") = 0.63);
  m.def("run_kto", &run_kto, py::arg("examples"), py::arg("reference"), py::arg("space"),
        py::arg("options"), py::arg("epoch_losses") = nullptr);
  m.def(
      "run_grpo",
      [](const std::vector<TrainTask>& tasks, const ToyPolicyParams& init,
         const ToyPolicyParams& reference, const DiscreteActionSpace& space,
         const RewardWeights& weights, const GrpoOptions& options) {
        const EvidenceJudgePolicy judge;
        std::vector<GrpoLogRow> log;
        ToyPolicyParams params =
            run_grpo(tasks, init, reference, space, judge, weights, options, &log);
        return py::make_tuple(std::move(params), std::move(log));
      },
      py::arg("tasks"), py::arg("init"), py::arg("reference"), py::arg("space"),
      py::arg("weights") = RewardWeights{}, py::arg("options") = GrpoOptions{});
  m.def("enhance_dataset", &enhance_dataset, py::arg("failures"), py::arg("video_pool"),
        py::arg("seed"), py::arg("count"), py::arg("gen") = QueryGenParams{});
  m.def("build_rl_mix",
        [](const std::vector<TrainTask>& oe, const std::vector<TrainTask>& mc,
           double ratio, int target) { return build_rl_mix(oe, mc, ratio, target); },
        py::arg("open_ended"), py::arg("multi_choice"), py::arg("ratio"),
        py::arg("target_count") = -1);

  m.def(
      "load_config",
      [](const std::string& json_text) { return config_from_json(Json::parse(json_text)); },
      py::arg("json_text") = "{}");
  m.def("config_hash", &config_hash);
  m.def("episode_options", &episode_options);
  m.def("make_task_set", &make_task_set, py::arg("config"), py::arg("seed"),
        py::arg("count"), py::arg("open_ended_ratio"));
  m.def(
      "evaluate",
      [](std::shared_ptr<Policy> policy, const std::vector<TrainTask>& tasks,
         const EpisodeOptions& opts, const RewardWeights& weights, int threads) {
        const EvidenceJudgePolicy judge;
        return evaluate(*policy, tasks, opts, weights, judge, threads);
      },
      py::arg("policy"), py::arg("tasks"), py::arg("options"),
      py::arg("weights") = RewardWeights{}, py::arg("threads") = 4);

  py::class_<RunConfig>(m, "RunConfig")
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("video", &RunConfig::video)
      .def_readwrite("episode", &RunConfig::episode)
      .def_readwrite("rewards", &RunConfig::rewards)
      .def("to_json", [](const RunConfig& c) { return config_to_json(c).dump(); });

  py::class_<QueryGenParams>(m, "QueryGenParams")
      .def(py::init<>())
      .def_readwrite("mcq_choices", &QueryGenParams::mcq_choices)
      .def_readwrite("w_identification", &QueryGenParams::w_identification)
      .def_readwrite("w_window", &QueryGenParams::w_window)
      .def_readwrite("w_counting", &QueryGenParams::w_counting)
      .def_readwrite("w_ordering", &QueryGenParams::w_ordering);
}
