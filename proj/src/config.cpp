#include "eva/config.hpp"

#include <algorithm>
#include <set>

namespace eva {

namespace {

void require_keys(const Json& j, const std::set<std::string>& allowed,
                  const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key \"" + key + "\" in " + context);
    }
  }
}

std::pair<int, int> int_range(const Json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError(context + " must be a [lo, hi] pair");
  }
  return {j.at(0).get<int>(), j.at(1).get<int>()};
}

void apply_video(GeneratorParams& p, const Json& j) {
  require_keys(j, {"duration_range", "event_count_range", "window_len_range",
                   "min_gap_s", "same_label_gap_s", "motion_fraction", "resize_grid",
                   "density_grid", "resolution_p", "labels"},
               "video");
  if (j.contains("duration_range")) p.duration_range = int_range(j["duration_range"], "video.duration_range");
  if (j.contains("event_count_range")) p.event_count_range = int_range(j["event_count_range"], "video.event_count_range");
  if (j.contains("window_len_range")) p.window_len_range = int_range(j["window_len_range"], "video.window_len_range");
  if (j.contains("min_gap_s")) p.min_gap_s = j["min_gap_s"].get<int>();
  if (j.contains("same_label_gap_s")) p.same_label_gap_s = j["same_label_gap_s"].get<int>();
  if (j.contains("motion_fraction")) p.motion_fraction = j["motion_fraction"].get<double>();
  if (j.contains("resize_grid")) p.resize_grid = j["resize_grid"].get<std::vector<double>>();
  if (j.contains("density_grid")) p.density_grid = j["density_grid"].get<std::vector<double>>();
  if (j.contains("resolution_p")) p.resolution_p = j["resolution_p"].get<int>();
  if (j.contains("labels")) p.labels = j["labels"].get<std::vector<std::string>>();
}

void apply_queries(QueriesConfig& q, const Json& j) {
  require_keys(j, {"count", "open_ended_ratio", "mcq_choices", "task_weights"}, "queries");
  if (j.contains("count")) q.count = j["count"].get<int>();
  if (j.contains("open_ended_ratio")) q.open_ended_ratio = j["open_ended_ratio"].get<double>();
  if (j.contains("mcq_choices")) q.gen.mcq_choices = j["mcq_choices"].get<int>();
  if (j.contains("task_weights")) {
    require_keys(j["task_weights"], {"identification", "window", "counting", "ordering"},
                 "queries.task_weights");
    const Json& w = j["task_weights"];
    if (w.contains("identification")) q.gen.w_identification = w["identification"].get<double>();
    if (w.contains("window")) q.gen.w_window = w["window"].get<double>();
    if (w.contains("counting")) q.gen.w_counting = w["counting"].get<double>();
    if (w.contains("ordering")) q.gen.w_ordering = w["ordering"].get<double>();
  }
}

void apply_episode(EpisodeLimits& l, const Json& j) {
  require_keys(j, {"max_rounds", "max_tokens"}, "episode");
  if (j.contains("max_rounds")) l.max_rounds = j["max_rounds"].get<int>();
  if (j.contains("max_tokens")) l.max_tokens = j["max_tokens"].get<std::int64_t>();
  if (l.max_rounds < 1 || l.max_tokens < 1) {
    throw ConfigError("episode limits must be >= 1");
  }
}

void apply_rewards(RewardWeights& w, const Json& j) {
  require_keys(j, {"w_acc", "w_fmt"}, "rewards");
  if (j.contains("w_acc")) w.w_acc = j["w_acc"].get<double>();
  if (j.contains("w_fmt")) w.w_fmt = j["w_fmt"].get<double>();
  if (w.w_acc < 0 || w.w_fmt < 0 || (w.w_acc == 0 && w.w_fmt == 0)) {
    throw ConfigError("reward weights must be >= 0 and not both zero");
  }
}

void apply_policy(PolicySelection& p, const Json& j) {
  require_keys(j, {"kind", "theta_path", "scan_resize", "endpoint"}, "policy");
  if (j.contains("kind")) p.kind = j["kind"].get<std::string>();
  if (j.contains("theta_path")) p.theta_path = j["theta_path"].get<std::string>();
  if (j.contains("scan_resize")) p.scan_resize = j["scan_resize"].get<double>();
  if (j.contains("endpoint")) {
    require_keys(j["endpoint"],
                 {"host", "port", "path", "model", "timeout_ms", "max_attempts",
                  "backoff_base_ms"},
                 "policy.endpoint");
    const Json& e = j["endpoint"];
    if (e.contains("host")) p.endpoint.host = e["host"].get<std::string>();
    if (e.contains("port")) p.endpoint.port = e["port"].get<int>();
    if (e.contains("path")) p.endpoint.path = e["path"].get<std::string>();
    if (e.contains("model")) p.endpoint.model = e["model"].get<std::string>();
    if (e.contains("timeout_ms")) p.endpoint.timeout_ms = e["timeout_ms"].get<int>();
    if (e.contains("max_attempts")) p.endpoint.max_attempts = e["max_attempts"].get<int>();
    if (e.contains("backoff_base_ms")) p.endpoint.backoff_base_ms = e["backoff_base_ms"].get<int>();
  }
}

void apply_reflector(ReflectorConfig& r, const Json& j) {
  require_keys(j, {"enabled", "mode"}, "reflector");
  if (j.contains("enabled")) r.enabled = j["enabled"].get<bool>();
  if (j.contains("mode")) r.mode = reflector_mode_from(j["mode"].get<std::string>());
}

void apply_sft(SftStageConfig& s, const Json& j) {
  require_keys(j, {"epochs", "lr", "batch", "guess_fraction", "episodes",
                   "teacher_max_tokens"},
               "trainer.sft");
  if (j.contains("epochs")) s.epochs = j["epochs"].get<int>();
  if (j.contains("lr")) s.lr = j["lr"].get<double>();
  if (j.contains("batch")) s.batch = j["batch"].get<int>();
  if (j.contains("guess_fraction")) s.guess_fraction = j["guess_fraction"].get<double>();
  if (j.contains("episodes")) s.episodes = j["episodes"].get<int>();
  if (j.contains("teacher_max_tokens")) s.teacher_max_tokens = j["teacher_max_tokens"].get<std::int64_t>();
}

void apply_kto(KtoStageConfig& k, const Json& j) {
  require_keys(j, {"beta", "lr", "epochs", "batch", "chosen_threshold",
                   "target_chosen_fraction", "episodes"},
               "trainer.kto");
  if (j.contains("beta")) k.beta = j["beta"].get<double>();
  if (j.contains("lr")) k.lr = j["lr"].get<double>();
  if (j.contains("epochs")) k.epochs = j["epochs"].get<int>();
  if (j.contains("batch")) k.batch = j["batch"].get<int>();
  if (j.contains("chosen_threshold")) k.chosen_threshold = j["chosen_threshold"].get<double>();
  if (j.contains("target_chosen_fraction")) k.target_chosen_fraction = j["target_chosen_fraction"].get<double>();
  if (j.contains("episodes")) k.episodes = j["episodes"].get<int>();
}

void apply_grpo(GrpoStageConfig& g, const Json& j) {
  require_keys(j, {"group_size", "kl_lambda", "lr", "steps", "queries_per_step",
                   "plain_reinforce", "tasks"},
               "trainer.grpo");
  if (j.contains("group_size")) g.group_size = j["group_size"].get<int>();
  if (j.contains("kl_lambda")) g.kl_lambda = j["kl_lambda"].get<double>();
  if (j.contains("lr")) g.lr = j["lr"].get<double>();
  if (j.contains("steps")) g.steps = j["steps"].get<int>();
  if (j.contains("queries_per_step")) g.queries_per_step = j["queries_per_step"].get<int>();
  if (j.contains("plain_reinforce")) g.plain_reinforce = j["plain_reinforce"].get<bool>();
  if (j.contains("tasks")) g.tasks = j["tasks"].get<int>();
}

}  // namespace

RunConfig config_from_json(const Json& j) {
  require_keys(j, {"seed", "video", "queries", "episode", "rewards", "token_profile",
                   "token_profiles", "policy", "reflector", "trainer"},
               "config");
  RunConfig config;
  if (j.contains("seed")) config.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("video")) apply_video(config.video, j["video"]);
  if (j.contains("queries")) apply_queries(config.queries, j["queries"]);
  if (j.contains("episode")) apply_episode(config.episode, j["episode"]);
  if (j.contains("rewards")) apply_rewards(config.rewards, j["rewards"]);
  if (j.contains("token_profile")) config.token_profile = j["token_profile"].get<std::string>();
  if (j.contains("token_profiles")) {
    config.token_profiles.clear();
    for (const auto& [name, base] : j["token_profiles"].items()) {
      config.token_profiles.push_back({name, base.get<int>()});
    }
  }
  if (j.contains("policy")) apply_policy(config.policy, j["policy"]);
  if (j.contains("reflector")) apply_reflector(config.reflector, j["reflector"]);
  if (j.contains("trainer")) {
    require_keys(j["trainer"], {"sft", "kto", "grpo"}, "trainer");
    if (j["trainer"].contains("sft")) apply_sft(config.sft, j["trainer"]["sft"]);
    if (j["trainer"].contains("kto")) apply_kto(config.kto, j["trainer"]["kto"]);
    if (j["trainer"].contains("grpo")) apply_grpo(config.grpo, j["trainer"]["grpo"]);
  }
  resolve_profile(config);  // fail fast on unknown profile names
  return config;
}

Json config_to_json(const RunConfig& config) {
  Json profiles = Json::object();
  for (const TokenProfile& p :
       config.token_profiles.empty() ? builtin_profiles() : config.token_profiles) {
    profiles[p.name] = p.base_tokens_per_frame;
  }
  return Json{
      {"seed", config.seed},
      {"video", to_json(config.video)},
      {"queries", Json{{"count", config.queries.count},
                       {"open_ended_ratio", config.queries.open_ended_ratio},
                       {"mcq_choices", config.queries.gen.mcq_choices},
                       {"task_weights",
                        Json{{"identification", config.queries.gen.w_identification},
                             {"window", config.queries.gen.w_window},
                             {"counting", config.queries.gen.w_counting},
                             {"ordering", config.queries.gen.w_ordering}}}}},
      {"episode", to_json(config.episode)},
      {"rewards", Json{{"w_acc", config.rewards.w_acc}, {"w_fmt", config.rewards.w_fmt}}},
      {"token_profile", config.token_profile},
      {"token_profiles", profiles},
      {"policy", Json{{"kind", config.policy.kind},
                      {"theta_path", config.policy.theta_path},
                      {"scan_resize", config.policy.scan_resize},
                      {"endpoint", Json{{"host", config.policy.endpoint.host},
                                        {"port", config.policy.endpoint.port},
                                        {"path", config.policy.endpoint.path},
                                        {"model", config.policy.endpoint.model},
                                        {"timeout_ms", config.policy.endpoint.timeout_ms},
                                        {"max_attempts", config.policy.endpoint.max_attempts},
                                        {"backoff_base_ms",
                                         config.policy.endpoint.backoff_base_ms}}}}},
      {"reflector", Json{{"enabled", config.reflector.enabled},
                         {"mode", to_string(config.reflector.mode)}}},
      {"trainer",
       Json{{"sft", Json{{"epochs", config.sft.epochs},
                         {"lr", config.sft.lr},
                         {"batch", config.sft.batch},
                         {"guess_fraction", config.sft.guess_fraction},
                         {"episodes", config.sft.episodes},
                         {"teacher_max_tokens", config.sft.teacher_max_tokens}}},
            {"kto", Json{{"beta", config.kto.beta},
                         {"lr", config.kto.lr},
                         {"epochs", config.kto.epochs},
                         {"batch", config.kto.batch},
                         {"chosen_threshold", config.kto.chosen_threshold},
                         {"target_chosen_fraction", config.kto.target_chosen_fraction},
                         {"episodes", config.kto.episodes}}},
            {"grpo", Json{{"group_size", config.grpo.group_size},
                          {"kl_lambda", config.grpo.kl_lambda},
                          {"lr", config.grpo.lr},
                          {"steps", config.grpo.steps},
                          {"queries_per_step", config.grpo.queries_per_step},
                          {"plain_reinforce", config.grpo.plain_reinforce},
                          {"tasks", config.grpo.tasks}}}}}};
}

RunConfig load_config_file(const std::string& path) {
  const Json j = Json::parse(read_text_file(path));
  return config_from_json(j);
}

std::string config_hash(const RunConfig& config) {
  return fnv1a_hex(config_to_json(config).dump());
}

TokenProfile resolve_profile(const RunConfig& config) {
  const std::vector<TokenProfile>& table =
      config.token_profiles.empty() ? builtin_profiles() : config.token_profiles;
  for (const TokenProfile& p : table) {
    if (p.name == config.token_profile) return p;
  }
  throw ConfigError("unknown token profile: " + config.token_profile);
}

EpisodeOptions episode_options(const RunConfig& config) {
  EpisodeOptions opts;
  opts.limits = config.episode;
  opts.profile = resolve_profile(config);
  if (config.reflector.enabled) opts.reflector = config.reflector.mode;
  opts.seed = config.seed;
  opts.config_hash = config_hash(config);
  return opts;
}

std::unique_ptr<Policy> make_policy(const RunConfig& config) {
  const std::string& kind = config.policy.kind;
  if (kind == "toy" || kind == "random") {
    DiscreteActionSpace space = DiscreteActionSpace::default_space();
    ToyPolicyParams params = ToyPolicyParams::zeros(space.size());
    if (kind == "toy" && !config.policy.theta_path.empty()) {
      const Json ckpt = Json::parse(read_text_file(config.policy.theta_path));
      params = checkpoint_from_json(ckpt, &space);
    }
    return std::make_unique<ToyPolicy>(std::move(space), std::move(params), kind);
  }
  if (kind == "global_then_zoom") return std::make_unique<GlobalThenZoomPolicy>();
  if (kind == "direct_dense") return std::make_unique<DirectDensePolicy>();
  if (kind == "scan_then_answer") {
    return std::make_unique<ScanThenAnswerPolicy>(config.policy.scan_resize);
  }
  if (kind == "answer_first") return std::make_unique<AnswerFirstPolicy>();
  if (kind == "chat") return std::make_unique<ChatAdapterPolicy>(config.policy.endpoint);
  throw ConfigError("unknown policy kind: " + kind);
}

}  // namespace eva
