// Command-line front end: data generation, episodes, the three training
// stages, data enhancement, evaluation, re-scoring, behavior statistics and
// trajectory replay. Every artifact lands in a timestamped run directory and
// embeds the config hash.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eva/config.hpp"
#include "eva/evidence.hpp"
#include "eva/harness.hpp"
#include "eva/serialization.hpp"

namespace fs = std::filesystem;
using namespace eva;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_base = "runs";
};

RunConfig load_or_default(const std::string& path) {
  if (path.empty()) return config_from_json(Json::object());
  return load_config_file(path);
}

void emit_error_json(const std::string& type, const std::string& message) {
  std::cerr << Json{{"error", Json{{"type", type}, {"message", message}}}}.dump()
            << std::endl;
}

std::string prepare_run_dir(const RunConfig& config, const std::string& base) {
  const std::string dir = make_run_dir(base, config_hash(config));
  write_text_file_atomic(dir + "/config.json", config_to_json(config).dump(2) + "\n");
  return dir;
}

void save_checkpoint(const std::string& path, const ToyPolicyParams& params,
                     const DiscreteActionSpace& space, const std::string& stage,
                     int step, const RunConfig& config) {
  CheckpointMeta meta;
  meta.stage = stage;
  meta.step = step;
  meta.seed = config.seed;
  meta.config_hash = config_hash(config);
  write_text_file_atomic(path, checkpoint_to_json(params, space, meta).dump(2) + "\n");
}

int cmd_gen_data(const CommonArgs& common, int n_videos, int n_queries) {
  const RunConfig config = load_or_default(common.config_path);
  const std::string dir = prepare_run_dir(config, common.out_base);
  fs::create_directories(dir + "/data/videos");
  fs::create_directories(dir + "/data/queries");

  std::vector<SyntheticVideo> videos;
  for (int i = 0; i < n_videos; ++i) {
    SyntheticVideo video = generate_video(mix_seed(config.seed, 0xdaULL, i), config.video);
    write_text_file_atomic(dir + "/data/videos/" + video.id + ".json",
                           to_json(video).dump(2) + "\n");
    videos.push_back(std::move(video));
  }
  int written = 0;
  for (int i = 0; i < n_queries; ++i) {
    const SyntheticVideo& video = videos[static_cast<std::size_t>(i) % videos.size()];
    const QueryKind kind = (i % 10) < static_cast<int>(config.queries.open_ended_ratio * 10)
                               ? QueryKind::kOpenEnded
                               : QueryKind::kMultipleChoice;
    QueryInstance query =
        generate_query(video, mix_seed(config.seed, 0x9eULL, i), kind, config.queries.gen);
    std::ostringstream name;
    name << dir << "/data/queries/query-" << i << ".json";
    write_text_file_atomic(name.str(), to_json(query).dump(2) + "\n");
    ++written;
  }
  std::cout << "wrote " << videos.size() << " videos and " << written << " queries under "
            << dir << "/data" << std::endl;
  return 0;
}

int cmd_run_episode(const CommonArgs& common, const std::string& video_path,
                    const std::string& query_path, bool transcript) {
  const RunConfig config = load_or_default(common.config_path);
  const std::string dir = prepare_run_dir(config, common.out_base);

  SyntheticVideo video;
  QueryInstance query;
  if (!video_path.empty()) {
    video = video_from(Json::parse(read_text_file(video_path)));
    if (!query_path.empty()) {
      query = query_from(Json::parse(read_text_file(query_path)));
    } else {
      query = generate_query(video, mix_seed(config.seed, 1), QueryKind::kOpenEnded,
                             config.queries.gen);
    }
  } else {
    video = generate_video(config.seed, config.video);
    query = generate_query(video, mix_seed(config.seed, 1), QueryKind::kOpenEnded,
                           config.queries.gen);
  }

  const std::unique_ptr<Policy> policy = make_policy(config);
  const EvidenceJudgePolicy judge;
  Trajectory traj = run_episode(video, query, *policy, episode_options(config));
  const RewardBreakdown reward = total_reward(traj, judge, config.rewards);
  append_jsonl(dir + "/trajectories.jsonl", trajectory_to_json(traj, &reward));

  if (transcript) {
    std::ostringstream os;
    for (const ChatMessage& m : render_transcript(traj)) {
      os << "[" << m.role << "]\n" << m.content << "\n\n";
    }
    write_text_file_atomic(dir + "/transcript.txt", os.str());
  }
  std::cout << "outcome " << outcome_name(traj.outcome) << ", reward " << reward.total
            << ", artifacts under " << dir << std::endl;
  return 0;
}

int cmd_train(const CommonArgs& common, const std::string& stage,
              const std::string& theta_in) {
  RunConfig config = load_or_default(common.config_path);
  const std::string dir = prepare_run_dir(config, common.out_base);
  const DiscreteActionSpace space = DiscreteActionSpace::default_space();
  const EvidenceJudgePolicy judge;

  if (stage == "sft") {
    const std::vector<TrainTask> tasks =
        make_task_set(config, mix_seed(config.seed, 0x5f7ULL), config.sft.episodes,
                      config.queries.open_ended_ratio);
    SftPipelineOptions pipeline;
    pipeline.guess_fraction = config.sft.guess_fraction;
    pipeline.episode = episode_options(config);
    pipeline.episode.limits.max_tokens = config.sft.teacher_max_tokens;
    pipeline.seed = mix_seed(config.seed, 0x5f7daULL);
    const SftBuildResult built =
        build_sft_corpus(tasks, space, judge, config.rewards, pipeline);

    std::vector<Json> corpus_lines;
    for (const SftExample& ex : built.corpus) {
      corpus_lines.push_back(Json{{"features", ex.features},
                                  {"action", ex.action},
                                  {"source", ex.source},
                                  {"experience_tags", ex.experience_tags}});
    }
    write_jsonl(dir + "/data/sft/corpus.jsonl", corpus_lines);
    std::vector<Json> traj_lines;
    for (const ScoredTrajectory& st : built.trajectories) {
      traj_lines.push_back(trajectory_to_json(st.trajectory, &st.reward));
    }
    write_jsonl(dir + "/data/sft/trajectories.jsonl", traj_lines);

    SftOptions options;
    options.epochs = config.sft.epochs;
    options.lr = config.sft.lr;
    options.batch = config.sft.batch;
    options.seed = config.seed;
    std::vector<double> losses;
    const ToyPolicyParams params = run_sft(built.corpus, space, options, &losses);
    save_checkpoint(dir + "/theta-sft.json", params, space, "sft",
                    config.sft.epochs, config);
    std::ostringstream csv;
    csv << "epoch,loss\n";
    for (std::size_t e = 0; e < losses.size(); ++e) csv << e << "," << losses[e] << "\n";
    write_text_file_atomic(dir + "/curves-sft.csv", csv.str());
    std::cout << "sft done; checkpoint " << dir << "/theta-sft.json" << std::endl;
    return 0;
  }

  if (stage == "kto") {
    if (theta_in.empty()) throw ConfigError("train kto needs --theta (the SFT checkpoint)");
    DiscreteActionSpace ckpt_space;
    const ToyPolicyParams reference =
        checkpoint_from_json(Json::parse(read_text_file(theta_in)), &ckpt_space);
    const std::vector<TrainTask> tasks =
        make_task_set(config, mix_seed(config.seed, 0x270ULL), config.kto.episodes,
                      config.queries.open_ended_ratio);
    KtoPipelineOptions pipeline;
    pipeline.episode = episode_options(config);
    pipeline.rules.chosen_threshold = config.kto.chosen_threshold;
    pipeline.rules.target_chosen_fraction = config.kto.target_chosen_fraction;
    pipeline.seed = mix_seed(config.seed, 0x270daULL);
    std::vector<ScoredTrajectory> scored;
    const std::vector<KtoExample> examples =
        build_kto_corpus(tasks, ckpt_space, judge, config.rewards, pipeline, &scored);

    std::vector<Json> lines;
    for (const KtoExample& ex : examples) {
      Json pairs = Json::array();
      for (const StatePair& p : ex.pairs) {
        pairs.push_back(Json{{"features", p.features}, {"action", p.action}});
      }
      lines.push_back(Json{{"trajectory_id", ex.trajectory_id},
                           {"label", ex.chosen ? "chosen" : "rejected"},
                           {"failure_category", failure_category_name(ex.failure_category)},
                           {"pairs", pairs}});
    }
    write_jsonl(dir + "/data/kto/corpus.jsonl", lines);

    KtoOptions options;
    options.beta = config.kto.beta;
    options.lr = config.kto.lr;
    options.epochs = config.kto.epochs;
    options.batch = config.kto.batch;
    options.seed = config.seed;
    std::vector<double> losses;
    const ToyPolicyParams params = run_kto(examples, reference, ckpt_space, options, &losses);
    save_checkpoint(dir + "/theta-kto.json", params, ckpt_space, "kto",
                    config.kto.epochs, config);
    std::ostringstream csv;
    csv << "epoch,loss\n";
    for (std::size_t e = 0; e < losses.size(); ++e) csv << e << "," << losses[e] << "\n";
    write_text_file_atomic(dir + "/curves-kto.csv", csv.str());
    std::cout << "kto done; checkpoint " << dir << "/theta-kto.json" << std::endl;
    return 0;
  }

  if (stage == "grpo") {
    DiscreteActionSpace ckpt_space = space;
    ToyPolicyParams init = ToyPolicyParams::zeros(space.size());
    if (!theta_in.empty()) {
      init = checkpoint_from_json(Json::parse(read_text_file(theta_in)), &ckpt_space);
    }
    const std::vector<TrainTask> tasks =
        make_task_set(config, mix_seed(config.seed, 0x6704ULL), config.grpo.tasks,
                      config.queries.open_ended_ratio);
    std::vector<Json> task_lines;
    for (const TrainTask& t : tasks) {
      task_lines.push_back(Json{{"video", to_json(t.video)}, {"query", to_json(t.query)}});
    }
    write_jsonl(dir + "/data/rl/tasks.jsonl", task_lines);

    GrpoOptions options;
    options.group_size = config.grpo.group_size;
    options.kl_lambda = config.grpo.kl_lambda;
    options.lr = config.grpo.lr;
    options.steps = config.grpo.steps;
    options.queries_per_step = config.grpo.queries_per_step;
    options.plain_reinforce = config.grpo.plain_reinforce;
    options.seed = config.seed;
    options.episode = episode_options(config);
    std::vector<GrpoLogRow> log;
    const ToyPolicyParams params =
        run_grpo(tasks, init, init, ckpt_space, judge, config.rewards, options, &log);
    save_checkpoint(dir + "/theta-grpo.json", params, ckpt_space, "grpo",
                    config.grpo.steps, config);
    write_text_file_atomic(dir + "/curves-grpo.csv", grpo_log_to_csv(log));
    std::cout << "grpo done; checkpoint " << dir << "/theta-grpo.json" << std::endl;
    return 0;
  }
  throw ConfigError("unknown training stage: " + stage);
}

int cmd_enhance(const CommonArgs& common, const std::string& failures_path, int count) {
  const RunConfig config = load_or_default(common.config_path);
  const std::string dir = prepare_run_dir(config, common.out_base);

  std::vector<Trajectory> failures;
  for (const Json& line : read_jsonl(failures_path)) {
    std::optional<RewardBreakdown> reward;
    Trajectory traj = trajectory_from_json(line, &reward);
    const bool correct =
        reward && (traj.query.query_kind == QueryKind::kMultipleChoice
                       ? reward->r_acc == 1.0
                       : reward->r_acc >= kOpenEndedCorrectThreshold);
    if (!correct) failures.push_back(std::move(traj));
  }
  std::vector<SyntheticVideo> pool;
  for (int i = 0; i < 32; ++i) {
    pool.push_back(generate_video(mix_seed(config.seed, 0xf00ULL, i), config.video));
  }
  const std::vector<QueryInstance> queries =
      enhance_dataset(failures, pool, mix_seed(config.seed, 0xe47ULL), count,
                      config.queries.gen);
  std::vector<Json> lines;
  for (const QueryInstance& q : queries) lines.push_back(to_json(q));
  write_jsonl(dir + "/data/rl/enhanced-queries.jsonl", lines);
  for (const SyntheticVideo& v : pool) {
    write_text_file_atomic(dir + "/data/videos/" + v.id + ".json",
                           to_json(v).dump(2) + "\n");
  }
  std::cout << "wrote " << queries.size() << " enhanced queries under " << dir
            << "/data/rl" << std::endl;
  return 0;
}

int cmd_evaluate(const CommonArgs& common, int count, int threads) {
  const RunConfig config = load_or_default(common.config_path);
  const std::string dir = prepare_run_dir(config, common.out_base);
  const std::vector<TrainTask> tasks =
      make_task_set(config, mix_seed(config.seed, 0xe7a1ULL),
                    count > 0 ? count : config.queries.count,
                    config.queries.open_ended_ratio);
  const std::unique_ptr<Policy> policy = make_policy(config);
  const EvidenceJudgePolicy judge;
  std::vector<ScoredTrajectory> scored;
  const EvalReport report = evaluate(*policy, tasks, episode_options(config),
                                     config.rewards, judge, threads, &scored);
  std::vector<Json> lines;
  for (const ScoredTrajectory& st : scored) {
    lines.push_back(trajectory_to_json(st.trajectory, &st.reward));
  }
  write_jsonl(dir + "/trajectories.jsonl", lines);
  write_text_file_atomic(dir + "/report.json", eval_report_to_json(report).dump(2) + "\n");
  std::cout << eval_report_to_json(report).dump(2) << std::endl;
  return 0;
}

int cmd_score(const CommonArgs& common, const std::string& trajectories_path) {
  const RunConfig config = load_or_default(common.config_path);
  const std::string dir = prepare_run_dir(config, common.out_base);
  const EvidenceJudgePolicy judge;
  std::vector<Json> lines;
  for (const Json& line : read_jsonl(trajectories_path)) {
    const Trajectory traj = trajectory_from_json(line);
    const RewardBreakdown reward = total_reward(traj, judge, config.rewards);
    lines.push_back(trajectory_to_json(traj, &reward));
  }
  write_jsonl(dir + "/trajectories-scored.jsonl", lines);
  std::cout << "re-scored " << lines.size() << " trajectories into " << dir << std::endl;
  return 0;
}

int cmd_stats(const CommonArgs& common, const std::string& trajectories_path) {
  const RunConfig config = load_or_default(common.config_path);
  const std::string dir = prepare_run_dir(config, common.out_base);
  std::vector<Trajectory> trajectories;
  for (const Json& line : read_jsonl(trajectories_path)) {
    trajectories.push_back(trajectory_from_json(line));
  }
  const RoundStats stats = compute_round_stats(trajectories);
  write_text_file_atomic(dir + "/round-stats.csv", round_stats_to_csv(stats));
  write_text_file_atomic(dir + "/round-stats.json",
                         round_stats_to_json(stats).dump(2) + "\n");
  std::cout << round_stats_to_csv(stats) << std::endl;
  return 0;
}

int cmd_replay(const CommonArgs& common, const std::string& trajectories_path) {
  const RunConfig config = load_or_default(common.config_path);
  const EvidenceJudgePolicy judge;
  int mismatches = 0;
  int line_no = 0;
  for (const Json& line : read_jsonl(trajectories_path)) {
    ++line_no;
    std::optional<RewardBreakdown> stored;
    const Trajectory traj = trajectory_from_json(line, &stored);
    const RewardBreakdown replayed = total_reward(traj, judge, config.rewards);
    if (stored && to_json(*stored).dump() != to_json(replayed).dump()) {
      ++mismatches;
      std::cout << "line " << line_no << ": reward mismatch\n  stored:   "
                << to_json(*stored).dump() << "\n  replayed: " << to_json(replayed).dump()
                << std::endl;
    }
  }
  if (mismatches == 0) {
    std::cout << "replayed " << line_no << " trajectories: rewards identical"
              << std::endl;
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eva: agentic video-understanding loop on a synthetic environment"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--config", common.config_path, "config JSON (defaults when omitted)");
  app.add_option("--out", common.out_base, "base directory for run outputs");

  auto* gen = app.add_subcommand("gen-data", "generate videos and queries");
  int n_videos = 8, n_queries = 32;
  gen->add_option("--videos", n_videos, "number of videos");
  gen->add_option("--queries", n_queries, "number of queries");

  auto* episode = app.add_subcommand("run-episode", "run one episode");
  std::string video_path, query_path;
  bool transcript = false;
  episode->add_option("--video", video_path, "video JSON (generated when omitted)");
  episode->add_option("--query", query_path, "query JSON (generated when omitted)");
  episode->add_flag("--transcript", transcript, "also write the dialogue transcript");

  auto* train = app.add_subcommand("train", "run a training stage");
  std::string stage, theta_in;
  train->add_option("stage", stage, "sft | kto | grpo")->required();
  train->add_option("--theta", theta_in, "input checkpoint (reference/init)");

  auto* enhance = app.add_subcommand("enhance", "generate failure-weighted queries");
  std::string failures_path;
  int enhance_count = 64;
  enhance->add_option("--failures", failures_path, "scored trajectory JSONL")->required();
  enhance->add_option("--count", enhance_count, "queries to emit");

  auto* eval = app.add_subcommand("evaluate", "evaluate the configured policy");
  int eval_count = 0, threads = 4;
  eval->add_option("--count", eval_count, "query count (config default when 0)");
  eval->add_option("--threads", threads, "worker threads");

  auto* score = app.add_subcommand("score", "re-score stored trajectories");
  std::string score_path;
  score->add_option("--trajectories", score_path, "trajectory JSONL")->required();

  auto* stats = app.add_subcommand("stats", "per-round behavior statistics");
  std::string stats_path;
  stats->add_option("--trajectories", stats_path, "trajectory JSONL")->required();

  auto* replay = app.add_subcommand("replay", "recompute rewards and compare");
  std::string replay_path;
  replay->add_option("--trajectories", replay_path, "scored trajectory JSONL")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(common, n_videos, n_queries);
    if (episode->parsed()) return cmd_run_episode(common, video_path, query_path, transcript);
    if (train->parsed()) return cmd_train(common, stage, theta_in);
    if (enhance->parsed()) return cmd_enhance(common, failures_path, enhance_count);
    if (eval->parsed()) return cmd_evaluate(common, eval_count, threads);
    if (score->parsed()) return cmd_score(common, score_path);
    if (stats->parsed()) return cmd_stats(common, stats_path);
    if (replay->parsed()) return cmd_replay(common, replay_path);
  } catch (const ConfigError& e) {
    emit_error_json("config", e.what());
    return 2;
  } catch (const EvaError& e) {
    emit_error_json("runtime", e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error_json("internal", e.what());
    return 1;
  }
  return 0;
}
