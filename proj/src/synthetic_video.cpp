#include "eva/synthetic_video.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "eva/rng.hpp"

namespace eva {

double TimeWindow::overlap(const TimeWindow& other) const {
  const double lo = std::max(start_s, other.start_s);
  const double hi = std::min(end_s, other.end_s);
  return std::max(0.0, hi - lo);
}

const std::vector<std::string>& default_label_vocabulary() {
  static const std::vector<std::string> kVocab = {
      "door_opens",    "dog_enters",    "goal_scored",   "light_flashes",
      "phone_rings",   "car_passes",    "whistle_blows", "crowd_cheers",
      "ball_bounces",  "screen_glows",  "kettle_boils",  "curtain_moves",
  };
  return kVocab;
}

namespace {

void check_range(const std::pair<int, int>& r, const char* name) {
  if (r.first > r.second) {
    throw InvalidParams(std::string("inverted range for ") + name);
  }
}

void validate_params(const GeneratorParams& p) {
  check_range(p.duration_range, "duration_range");
  check_range(p.event_count_range, "event_count_range");
  check_range(p.window_len_range, "window_len_range");
  if (p.duration_range.first <= 0) throw InvalidParams("duration must be positive");
  if (p.event_count_range.first < 0) throw InvalidParams("event count must be >= 0");
  if (p.window_len_range.first < 1) throw InvalidParams("window length must be >= 1");
  if (p.min_gap_s < 1) throw InvalidParams("min_gap_s must be >= 1");
  if (p.motion_fraction < 0.0 || p.motion_fraction > 1.0) {
    throw InvalidParams("motion_fraction outside [0,1]");
  }
  if (p.resize_grid.empty()) throw InvalidParams("resize_grid is empty");
  if (p.density_grid.empty()) throw InvalidParams("density_grid is empty");
  for (double r : p.resize_grid) {
    if (r <= 0.0 || r > 1.0) throw InvalidParams("resize_grid value outside (0,1]");
  }
  for (double d : p.density_grid) {
    if (d <= 0.0 || d > 1.0) throw InvalidParams("density_grid value outside (0,1]");
  }
}

std::string video_id_for(std::uint64_t seed) {
  std::ostringstream os;
  os << "vid-" << std::hex << seed;
  return os.str();
}

char letter_for(std::size_t i) { return static_cast<char>('A' + i); }

}  // namespace

SyntheticVideo generate_video(std::uint64_t seed, const GeneratorParams& params) {
  validate_params(params);
  const std::vector<std::string>& vocab =
      params.labels.empty() ? default_label_vocabulary() : params.labels;
  if (vocab.empty()) throw InvalidParams("label vocabulary is empty");

  Rng rng(mix_seed(seed, 0x51deULL));

  SyntheticVideo video;
  video.seed = seed;
  video.id = video_id_for(seed);
  video.duration_s = static_cast<double>(
      rng.next_int(params.duration_range.first, params.duration_range.second));
  video.width_px = params.resolution_p * 16 / 9;
  video.height_px = params.resolution_p;

  int n_events = static_cast<int>(
      rng.next_int(params.event_count_range.first, params.event_count_range.second));

  // Draw integral window lengths, shrinking until everything fits with gaps.
  std::vector<int> lengths;
  for (int i = 0; i < n_events; ++i) {
    lengths.push_back(static_cast<int>(
        rng.next_int(params.window_len_range.first, params.window_len_range.second)));
  }
  const int duration = static_cast<int>(video.duration_s);
  auto total_needed = [&]() {
    int t = 0;
    for (int l : lengths) t += l;
    if (!lengths.empty()) t += params.min_gap_s * (static_cast<int>(lengths.size()) + 1);
    return t;
  };
  while (!lengths.empty() && total_needed() > duration) {
    auto longest = std::max_element(lengths.begin(), lengths.end());
    if (*longest > params.window_len_range.first) {
      --*longest;
    } else {
      lengths.pop_back();
    }
  }
  n_events = static_cast<int>(lengths.size());

  // Distribute the slack over the n+1 gaps.
  int slack = duration - total_needed();
  std::vector<int> extra(static_cast<std::size_t>(n_events) + 1, 0);
  for (std::size_t g = 0; g < extra.size() && slack > 0; ++g) {
    const int take = static_cast<int>(rng.next_int(0, slack));
    extra[g] = take;
    slack -= take;
  }
  if (!extra.empty()) extra.back() += slack;

  int cursor = 0;
  for (int i = 0; i < n_events; ++i) {
    cursor += params.min_gap_s + extra[static_cast<std::size_t>(i)];
    Event ev;
    ev.id = i;
    ev.window.start_s = cursor;
    ev.window.end_s = cursor + lengths[static_cast<std::size_t>(i)];
    cursor = static_cast<int>(ev.window.end_s);

    // Pick a label honoring the same-label separation; fall back to an
    // unused label when retries keep colliding.
    std::string label;
    for (int attempt = 0; attempt < 8; ++attempt) {
      const std::string& cand = vocab[rng.next_index(vocab.size())];
      bool ok = true;
      for (const Event& prev : video.events) {
        if (prev.label == cand &&
            ev.window.start_s - prev.window.end_s < params.same_label_gap_s) {
          ok = false;
          break;
        }
      }
      if (ok) {
        label = cand;
        break;
      }
    }
    if (label.empty()) {
      for (const std::string& cand : vocab) {
        bool used = false;
        for (const Event& prev : video.events) {
          if (prev.label == cand) used = true;
        }
        if (!used) {
          label = cand;
          break;
        }
      }
      if (label.empty()) label = vocab[rng.next_index(vocab.size())];
    }
    ev.label = label;

    ev.kind = rng.next_bool(params.motion_fraction) ? EventKind::kMotion
                                                    : EventKind::kStatic;
    ev.min_resize = params.resize_grid[rng.next_index(params.resize_grid.size())];
    ev.min_density_fps =
        ev.kind == EventKind::kMotion
            ? params.density_grid[rng.next_index(params.density_grid.size())]
            : 0.0;
    video.events.push_back(std::move(ev));
  }
  return video;
}

std::vector<FrameObservation> observe(const SyntheticVideo& video,
                                      const std::vector<double>& timestamps,
                                      double resize) {
  if (resize <= 0.0 || resize > 1.0) {
    throw InvalidParams("resize outside (0,1]");
  }
  for (double t : timestamps) {
    if (t < 0.0 || t > video.duration_s) {
      throw OutOfRange("timestamp outside [0, duration]");
    }
  }

  // Per-event detectability given this batch.
  std::vector<bool> detected(video.events.size(), false);
  for (std::size_t i = 0; i < video.events.size(); ++i) {
    const Event& ev = video.events[i];
    if (resize < ev.min_resize) continue;
    if (ev.kind == EventKind::kMotion) {
      int in_window = 0;
      for (double t : timestamps) {
        if (ev.window.contains(t)) ++in_window;
      }
      if (static_cast<double>(in_window) < ev.min_density_fps * ev.window.length()) {
        continue;
      }
    }
    detected[i] = true;
  }

  std::vector<FrameObservation> out;
  out.reserve(timestamps.size());
  for (double t : timestamps) {
    FrameObservation obs;
    obs.timestamp_s = t;
    for (std::size_t i = 0; i < video.events.size(); ++i) {
      if (detected[i] && video.events[i].window.contains(t)) {
        obs.labels.push_back(video.events[i].label);
      }
    }
    out.push_back(std::move(obs));
  }
  return out;
}

namespace {

// Events proven detectable by the exhaustive scan.
std::vector<const Event*> exhaustively_detected(const SyntheticVideo& video) {
  std::vector<double> samples;
  const int whole = static_cast<int>(std::floor(video.duration_s));
  for (int i = 0; i < whole; ++i) samples.push_back(i + 0.5);
  for (const Event& ev : video.events) {
    if (ev.kind != EventKind::kMotion) continue;
    const double len = ev.window.length();
    const int dense = static_cast<int>(std::ceil(ev.min_density_fps * len)) + 1;
    for (int j = 0; j < dense; ++j) {
      samples.push_back(ev.window.start_s + (j + 0.5) * len / dense);
    }
  }
  std::sort(samples.begin(), samples.end());

  const std::vector<FrameObservation> obs = observe(video, samples, 1.0);
  std::vector<const Event*> found;
  for (const Event& ev : video.events) {
    bool seen = false;
    for (const FrameObservation& o : obs) {
      if (!ev.window.contains(o.timestamp_s)) continue;
      if (std::find(o.labels.begin(), o.labels.end(), ev.label) != o.labels.end()) {
        seen = true;
        break;
      }
    }
    if (seen) found.push_back(&ev);
  }
  return found;
}

std::string open_ended_oracle(const SyntheticVideo& video, const QueryInstance& query) {
  const std::vector<const Event*> found = exhaustively_detected(video);
  switch (query.task) {
    case QueryTask::kIdentification: {
      for (const Event* ev : found) {
        if (ev->window.contains(query.at_s)) return ev->label;
      }
      return "unknown";
    }
    case QueryTask::kWindow: {
      const Event* best = nullptr;
      double best_overlap = 0.0;
      for (const Event* ev : found) {
        const double o = ev->window.overlap(query.ask_window);
        if (o > best_overlap) {
          best_overlap = o;
          best = ev;
        }
      }
      return best ? best->label : "unknown";
    }
    case QueryTask::kCounting: {
      int count = 0;
      for (const Event* ev : found) {
        if (ev->label == query.target_label) ++count;
      }
      return std::to_string(count);
    }
    case QueryTask::kOrdering: {
      if (found.empty()) return "unknown";
      const Event* pick = found.front();
      for (const Event* ev : found) {
        const bool better = query.ask_last ? ev->window.start_s > pick->window.start_s
                                           : ev->window.start_s < pick->window.start_s;
        if (better) pick = ev;
      }
      return pick->label;
    }
  }
  return "unknown";
}

}  // namespace

std::string oracle_answer(const SyntheticVideo& video, const QueryInstance& query) {
  const std::string text = open_ended_oracle(video, query);
  if (query.query_kind == QueryKind::kOpenEnded) return text;
  for (const Choice& c : query.choices) {
    if (c.text == text) return std::string(1, c.letter);
  }
  return "unknown";
}

namespace {

QueryTask pick_task(Rng& rng, const QueryGenParams& p) {
  const double total = p.w_identification + p.w_window + p.w_counting + p.w_ordering;
  if (total <= 0.0) throw InvalidParams("query task weights sum to zero");
  double u = rng.next_real() * total;
  if ((u -= p.w_identification) < 0) return QueryTask::kIdentification;
  if ((u -= p.w_window) < 0) return QueryTask::kWindow;
  if ((u -= p.w_counting) < 0) return QueryTask::kCounting;
  return QueryTask::kOrdering;
}

std::vector<std::string> distractor_labels(const SyntheticVideo& video,
                                           const std::string& gt, Rng& rng) {
  std::vector<std::string> pool;
  auto push_unique = [&](const std::string& s) {
    if (s != gt && std::find(pool.begin(), pool.end(), s) == pool.end()) {
      pool.push_back(s);
    }
  };
  for (const Event& ev : video.events) push_unique(ev.label);
  for (const std::string& s : default_label_vocabulary()) push_unique(s);
  rng.shuffle(pool);
  return pool;
}

void attach_choices(QueryInstance& q, const SyntheticVideo& video, Rng& rng,
                    const QueryGenParams& params) {
  const std::string gt_text = q.answer_gt;
  std::vector<std::string> options{gt_text};
  if (q.task == QueryTask::kCounting) {
    const int count = std::stoi(gt_text);
    for (int delta : {1, -1, 2, -2, 3, -3}) {
      const int v = count + delta;
      if (v < 0) continue;
      const std::string s = std::to_string(v);
      if (std::find(options.begin(), options.end(), s) == options.end()) {
        options.push_back(s);
      }
      if (static_cast<int>(options.size()) == params.mcq_choices) break;
    }
  } else {
    for (const std::string& s : distractor_labels(video, gt_text, rng)) {
      options.push_back(s);
      if (static_cast<int>(options.size()) == params.mcq_choices) break;
    }
  }
  rng.shuffle(options);
  for (std::size_t i = 0; i < options.size(); ++i) {
    q.choices.push_back(Choice{letter_for(i), options[i]});
    if (options[i] == gt_text) q.answer_gt = std::string(1, letter_for(i));
  }
}

}  // namespace

QueryInstance generate_query_for_task(const SyntheticVideo& video, std::uint64_t seed,
                                      QueryKind kind, QueryTask task,
                                      const QueryGenParams& params) {
  if (video.events.empty()) throw NoEvents("video has no events");
  if (params.mcq_choices < 2) throw InvalidParams("mcq_choices must be >= 2");

  Rng rng(mix_seed(seed, 0x9421ULL));
  QueryInstance q;
  q.video_id = video.id;
  q.query_kind = kind;
  q.task = task;

  std::ostringstream question;
  switch (task) {
    case QueryTask::kIdentification: {
      const Event& ev = video.events[rng.next_index(video.events.size())];
      const int len = static_cast<int>(ev.window.length());
      const int margin = std::max(2, len / 4);
      const int lo = static_cast<int>(ev.window.start_s) + margin;
      const int hi = static_cast<int>(ev.window.end_s) - margin;
      q.at_s = static_cast<double>(rng.next_int(lo, std::max(lo, hi)));
      question << "What event is occurring at " << static_cast<int>(q.at_s)
               << " seconds?";
      q.answer_gt = ev.label;
      q.evidence_windows.push_back(ev.window);
      break;
    }
    case QueryTask::kWindow: {
      const Event& ev = video.events[rng.next_index(video.events.size())];
      q.ask_window = ev.window;
      question << "What happens between " << static_cast<int>(ev.window.start_s)
               << " and " << static_cast<int>(ev.window.end_s) << " seconds?";
      q.answer_gt = ev.label;
      q.evidence_windows.push_back(ev.window);
      break;
    }
    case QueryTask::kCounting: {
      const Event& picked = video.events[rng.next_index(video.events.size())];
      q.target_label = picked.label;
      int count = 0;
      for (const Event& ev : video.events) {
        if (ev.label == q.target_label) {
          ++count;
          q.evidence_windows.push_back(ev.window);
        }
      }
      question << "How many times does " << q.target_label
               << " occur in the video?";
      q.answer_gt = std::to_string(count);
      break;
    }
    case QueryTask::kOrdering: {
      q.ask_last = rng.next_bool(0.5);
      const Event* pick = &video.events.front();
      for (const Event& ev : video.events) {
        const bool better = q.ask_last ? ev.window.start_s > pick->window.start_s
                                       : ev.window.start_s < pick->window.start_s;
        if (better) pick = &ev;
      }
      question << "Which event occurs " << (q.ask_last ? "last" : "first")
               << " in the video?";
      q.answer_gt = pick->label;
      q.evidence_windows.push_back(pick->window);
      break;
    }
  }
  q.question = question.str();

  if (kind == QueryKind::kMultipleChoice) {
    attach_choices(q, video, rng, params);
    std::ostringstream full;
    full << q.question;
    for (const Choice& c : q.choices) full << "\n" << c.letter << ": " << c.text;
    q.question = full.str();
  }
  return q;
}

QueryInstance generate_query(const SyntheticVideo& video, std::uint64_t seed,
                             QueryKind kind, const QueryGenParams& params) {
  if (video.events.empty()) throw NoEvents("video has no events");
  Rng rng(mix_seed(seed, 0x715aULL));
  const QueryTask task = pick_task(rng, params);
  return generate_query_for_task(video, mix_seed(seed, 0x51dULL), kind, task, params);
}

}  // namespace eva
