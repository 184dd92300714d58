#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eva/errors.hpp"

namespace eva {

enum class EventKind { kStatic, kMotion };

struct TimeWindow {
  double start_s = 0.0;
  double end_s = 0.0;

  double length() const { return end_s - start_s; }
  bool contains(double t) const { return t >= start_s && t <= end_s; }
  double overlap(const TimeWindow& other) const;
  bool operator==(const TimeWindow&) const = default;
};

// One detectable occurrence on the timeline. An event only shows up in an
// observation when the call's resize reaches min_resize and, for motion
// events, when the batch samples its window at min_density_fps or denser.
struct Event {
  int id = 0;
  TimeWindow window;
  std::string label;
  double min_resize = 1.0;
  double min_density_fps = 0.0;  // 0 for static events
  EventKind kind = EventKind::kStatic;
};

struct SyntheticVideo {
  std::string id;
  double duration_s = 0.0;
  int width_px = 0;
  int height_px = 0;
  std::vector<Event> events;
  std::uint64_t seed = 0;
};

// What a single sampled frame shows: the labels of every event detected at
// that instant. Detection thresholds never appear here.
struct FrameObservation {
  double timestamp_s = 0.0;
  std::vector<std::string> labels;
};

enum class QueryKind { kOpenEnded, kMultipleChoice };

// The question families the generator emits. `kIdentification` asks what is
// happening at an instant, `kWindow` over a span, `kCounting` how many times
// a label occurs, `kOrdering` which event comes first/last.
enum class QueryTask { kIdentification, kWindow, kCounting, kOrdering };

struct Choice {
  char letter = 'A';
  std::string text;
};

struct QueryInstance {
  std::string video_id;
  std::string question;
  std::string answer_gt;
  QueryKind query_kind = QueryKind::kOpenEnded;
  std::vector<Choice> choices;  // empty for open-ended
  std::vector<TimeWindow> evidence_windows;

  // Structured task parameters (mirrors the templated question text so
  // scripted components never parse natural language).
  QueryTask task = QueryTask::kIdentification;
  double at_s = 0.0;            // kIdentification
  TimeWindow ask_window;        // kWindow
  std::string target_label;     // kCounting
  bool ask_last = false;        // kOrdering: first (false) or last (true)
};

struct GeneratorParams {
  std::pair<int, int> duration_range{120, 300};   // seconds, integral
  std::pair<int, int> event_count_range{3, 6};
  std::pair<int, int> window_len_range{12, 28};   // seconds, integral
  int min_gap_s = 4;           // minimum silence between consecutive events
  int same_label_gap_s = 15;   // minimum separation between same-label windows
  double motion_fraction = 0.25;
  std::vector<double> resize_grid{0.1, 0.25, 0.5, 1.0};
  std::vector<double> density_grid{0.25, 0.5, 1.0};  // motion events only
  int resolution_p = 720;
  std::vector<std::string> labels;  // empty -> built-in vocabulary
};

struct QueryGenParams {
  int mcq_choices = 4;
  // Relative weights for identification / window / counting / ordering.
  double w_identification = 0.35;
  double w_window = 0.30;
  double w_counting = 0.20;
  double w_ordering = 0.15;
};

const std::vector<std::string>& default_label_vocabulary();

// Deterministic for fixed (seed, params); throws InvalidParams on empty or
// inverted ranges.
SyntheticVideo generate_video(std::uint64_t seed, const GeneratorParams& params);

// Emits a query whose answer_gt is computable from the event timeline alone.
// Throws NoEvents when the video has no events.
QueryInstance generate_query(const SyntheticVideo& video, std::uint64_t seed,
                             QueryKind kind,
                             const QueryGenParams& params = QueryGenParams{});

// Same, but pinned to one task family (used by the data-enhancement pipeline).
QueryInstance generate_query_for_task(const SyntheticVideo& video, std::uint64_t seed,
                                      QueryKind kind, QueryTask task,
                                      const QueryGenParams& params = QueryGenParams{});

// Symbolic frame extraction. A static event appears at timestamp t iff t is
// inside its window and resize >= min_resize; a motion event additionally
// needs the whole batch to place at least min_density_fps * window_length
// samples inside its window. Throws OutOfRange for timestamps outside the
// video and InvalidParams for resize outside (0, 1].
std::vector<FrameObservation> observe(const SyntheticVideo& video,
                                      const std::vector<double>& timestamps,
                                      double resize);

// Ground-truth answer by exhaustive observation: 1 fps everywhere at
// resize 1.0, densified inside each motion window to its min_density_fps.
std::string oracle_answer(const SyntheticVideo& video, const QueryInstance& query);

}  // namespace eva
