#include <doctest.h>

#include <algorithm>
#include <set>

#include "eva/rng.hpp"
#include "eva/serialization.hpp"
#include "eva/synthetic_video.hpp"

using namespace eva;

namespace {

GeneratorParams small_params() {
  GeneratorParams p;
  p.duration_range = {120, 200};
  p.event_count_range = {3, 5};
  p.window_len_range = {12, 24};
  return p;
}

}  // namespace

TEST_CASE("generate_video: identical seeds give byte-identical videos") {
  const GeneratorParams p = small_params();
  const SyntheticVideo a = generate_video(7, p);
  const SyntheticVideo b = generate_video(7, p);
  CHECK(to_json(a).dump() == to_json(b).dump());
  const SyntheticVideo c = generate_video(8, p);
  CHECK(to_json(a).dump() != to_json(c).dump());
}

TEST_CASE("generate_video: forced duration and event count") {
  GeneratorParams p = small_params();
  p.duration_range = {397, 397};
  p.event_count_range = {3, 3};
  const SyntheticVideo v = generate_video(7, p);
  CHECK(v.duration_s == 397.0);
  CHECK(v.events.size() == 3);
}

TEST_CASE("generate_video: event invariants hold over many seeds") {
  const GeneratorParams p = small_params();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SyntheticVideo v = generate_video(seed, p);
    double prev_end = -1.0;
    for (const Event& e : v.events) {
      CHECK(e.window.start_s >= 0.0);
      CHECK(e.window.start_s < e.window.end_s);
      CHECK(e.window.end_s <= v.duration_s);
      CHECK(e.window.start_s > prev_end);  // non-overlapping, gap enforced
      prev_end = e.window.end_s;
      CHECK(e.min_resize > 0.0);
      CHECK(e.min_resize <= 1.0);
      if (e.kind == EventKind::kStatic) {
        CHECK(e.min_density_fps == 0.0);
      } else {
        CHECK(e.min_density_fps > 0.0);
      }
    }
  }
}

TEST_CASE("generate_video: rejects inverted and empty ranges") {
  GeneratorParams p = small_params();
  p.duration_range = {200, 100};
  CHECK_THROWS_AS(generate_video(1, p), InvalidParams);
  p = small_params();
  p.event_count_range = {5, 2};
  CHECK_THROWS_AS(generate_video(1, p), InvalidParams);
  p = small_params();
  p.resize_grid.clear();
  CHECK_THROWS_AS(generate_video(1, p), InvalidParams);
}

TEST_CASE("observe: resize threshold gates detection") {
  SyntheticVideo v;
  v.duration_s = 100.0;
  v.events.push_back({0, {10.0, 20.0}, "door_opens", 0.4, 0.0, EventKind::kStatic});

  const auto hidden = observe(v, {15.0}, 0.1);
  CHECK(hidden.size() == 1);
  CHECK(hidden[0].labels.empty());

  const auto seen = observe(v, {15.0}, 0.5);
  CHECK(seen[0].labels == std::vector<std::string>{"door_opens"});

  const auto outside = observe(v, {25.0}, 1.0);
  CHECK(outside[0].labels.empty());
}

TEST_CASE("observe: motion density counts in-window samples") {
  SyntheticVideo v;
  v.duration_s = 100.0;
  v.events.push_back({0, {25.0, 75.0}, "car_passes", 0.1, 1.0, EventKind::kMotion});

  // 50 s window at min_density 1 fps: 25 in-window samples miss, 50 detect.
  auto in_window_samples = [&](int n) {
    std::vector<double> ts;
    for (int i = 0; i < n; ++i) ts.push_back(25.0 + (i + 0.5) * 50.0 / n);
    return ts;
  };
  const auto sparse = observe(v, in_window_samples(25), 1.0);
  for (const FrameObservation& o : sparse) CHECK(o.labels.empty());

  const auto dense = observe(v, in_window_samples(50), 1.0);
  for (const FrameObservation& o : dense) {
    CHECK(o.labels == std::vector<std::string>{"car_passes"});
  }
}

TEST_CASE("observe: rejects out-of-range timestamps and bad resize") {
  SyntheticVideo v;
  v.duration_s = 50.0;
  CHECK_THROWS_AS(observe(v, {60.0}, 1.0), OutOfRange);
  CHECK_THROWS_AS(observe(v, {-1.0}, 1.0), OutOfRange);
  CHECK_THROWS_AS(observe(v, {10.0}, 0.0), InvalidParams);
  CHECK_THROWS_AS(observe(v, {10.0}, 1.5), InvalidParams);
}

TEST_CASE("observe: monotone observability") {
  // If an event is detected at (resize r, samples S), it stays detected at
  // any r' >= r with S' a superset of S.
  const GeneratorParams p = small_params();
  Rng rng(99);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticVideo v = generate_video(seed, p);
    std::vector<double> base;
    const int n = 20 + static_cast<int>(rng.next_index(30));
    for (int i = 0; i < n; ++i) base.push_back(rng.next_real() * v.duration_s);
    std::sort(base.begin(), base.end());
    const double r = 0.1 + 0.9 * rng.next_real();

    std::vector<double> superset = base;
    for (int i = 0; i < 10; ++i) superset.push_back(rng.next_real() * v.duration_s);
    std::sort(superset.begin(), superset.end());
    const double r_up = std::min(1.0, r + (1.0 - r) * rng.next_real());

    const auto before = observe(v, base, r);
    const auto after = observe(v, superset, r_up);
    std::set<std::string> seen_before, seen_after;
    for (const auto& o : before) seen_before.insert(o.labels.begin(), o.labels.end());
    for (const auto& o : after) seen_after.insert(o.labels.begin(), o.labels.end());
    for (const std::string& label : seen_before) {
      CHECK(seen_after.count(label) == 1);
    }
  }
}

TEST_CASE("generate_query: single-event video forces the answer") {
  GeneratorParams p = small_params();
  p.event_count_range = {1, 1};
  const SyntheticVideo v = generate_video(3, p);
  REQUIRE(v.events.size() == 1);
  for (std::uint64_t qs = 0; qs < 8; ++qs) {
    const QueryInstance q = generate_query(v, qs, QueryKind::kOpenEnded);
    if (q.task == QueryTask::kCounting) {
      CHECK(q.answer_gt == "1");
    } else {
      CHECK(q.answer_gt == v.events[0].label);
    }
  }
}

TEST_CASE("generate_query: multiple choice has 4 letters and a valid answer") {
  const GeneratorParams p = small_params();
  const SyntheticVideo v = generate_video(11, p);
  const QueryInstance q = generate_query(v, 5, QueryKind::kMultipleChoice);
  CHECK(q.choices.size() == 4);
  std::set<char> letters;
  for (const Choice& c : q.choices) letters.insert(c.letter);
  CHECK(letters == std::set<char>{'A', 'B', 'C', 'D'});
  REQUIRE(q.answer_gt.size() == 1);
  CHECK(letters.count(q.answer_gt[0]) == 1);
}

TEST_CASE("generate_query: evidence windows overlap event windows") {
  const GeneratorParams p = small_params();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticVideo v = generate_video(seed, p);
    const QueryInstance q = generate_query(v, seed + 100, QueryKind::kOpenEnded);
    CHECK(!q.evidence_windows.empty());
    for (const TimeWindow& w : q.evidence_windows) {
      bool overlaps = false;
      for (const Event& e : v.events) {
        if (e.window.overlap(w) > 0.0) overlaps = true;
      }
      CHECK(overlaps);
    }
  }
}

TEST_CASE("generate_query: throws NoEvents on an empty video") {
  SyntheticVideo v;
  v.duration_s = 60.0;
  CHECK_THROWS_AS(generate_query(v, 1, QueryKind::kOpenEnded), NoEvents);
}

TEST_CASE("oracle soundness: oracle_answer equals answer_gt for generated queries") {
  GeneratorParams p = small_params();
  p.motion_fraction = 0.4;
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const SyntheticVideo v = generate_video(seed, p);
    for (std::uint64_t qs = 0; qs < 4; ++qs) {
      const QueryKind kind = qs % 2 == 0 ? QueryKind::kOpenEnded : QueryKind::kMultipleChoice;
      const QueryInstance q = generate_query(v, mix_seed(seed, qs), kind);
      CHECK(oracle_answer(v, q) == q.answer_gt);
      ++checked;
    }
  }
  CHECK(checked == 160);
}

TEST_CASE("no leakage: serialized observations carry labels only") {
  SyntheticVideo v;
  v.duration_s = 100.0;
  v.events.push_back({0, {10.0, 20.0}, "door_opens", 0.4, 0.5, EventKind::kMotion});
  const auto obs = observe(v, {15.0, 16.0, 17.0}, 1.0);
  for (const FrameObservation& o : obs) {
    const Json j = to_json(o);
    CHECK(j.contains("timestamp_s"));
    CHECK(j.contains("labels"));
    CHECK(j.size() == 2);  // nothing else, in particular no thresholds
    const std::string dump = j.dump();
    CHECK(dump.find("resize") == std::string::npos);
    CHECK(dump.find("density") == std::string::npos);
  }
}

TEST_CASE("queries serialize round-trip") {
  const GeneratorParams p = small_params();
  const SyntheticVideo v = generate_video(21, p);
  for (std::uint64_t qs = 0; qs < 10; ++qs) {
    const QueryKind kind = qs % 2 == 0 ? QueryKind::kOpenEnded : QueryKind::kMultipleChoice;
    const QueryInstance q = generate_query(v, qs, kind);
    const QueryInstance back = query_from(to_json(q));
    CHECK(to_json(back).dump() == to_json(q).dump());
  }
  const SyntheticVideo vb = video_from(to_json(v));
  CHECK(to_json(vb).dump() == to_json(v).dump());
}
