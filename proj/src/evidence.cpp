#include "eva/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace eva {

namespace {

constexpr double kSplitSpacingFactor = 1.75;
constexpr double kMergeSlack = 2.0;

struct RawRun {
  std::string label;
  double first_s;
  double last_s;
};

}  // namespace

std::vector<EvidenceRun> extract_runs(const std::vector<FrameBatch>& batches) {
  std::vector<RawRun> raw;
  for (const FrameBatch& batch : batches) {
    if (batch.call.nframes <= 0) continue;
    const double spacing =
        (batch.call.end_time - batch.call.start_time) / batch.call.nframes;
    const double split_gap = kSplitSpacingFactor * spacing;

    std::map<std::string, std::vector<double>> sightings;
    for (const FrameObservation& obs : batch.observations) {
      for (const std::string& label : obs.labels) {
        sightings[label].push_back(obs.timestamp_s);
      }
    }
    for (auto& [label, times] : sightings) {
      std::sort(times.begin(), times.end());
      double first = times.front();
      double prev = times.front();
      for (std::size_t i = 1; i < times.size(); ++i) {
        if (times[i] - prev > split_gap) {
          raw.push_back({label, first, prev});
          first = times[i];
        }
        prev = times[i];
      }
      raw.push_back({label, first, prev});
    }
  }

  // Merge same-label runs that overlap (or nearly touch) across batches.
  std::sort(raw.begin(), raw.end(), [](const RawRun& a, const RawRun& b) {
    if (a.label != b.label) return a.label < b.label;
    return a.first_s < b.first_s;
  });
  std::vector<EvidenceRun> merged;
  for (const RawRun& r : raw) {
    if (!merged.empty() && merged.back().label == r.label &&
        r.first_s <= merged.back().last_s + kMergeSlack) {
      merged.back().last_s = std::max(merged.back().last_s, r.last_s);
    } else {
      merged.push_back({r.label, r.first_s, r.last_s});
    }
  }
  std::sort(merged.begin(), merged.end(), [](const EvidenceRun& a, const EvidenceRun& b) {
    if (a.first_s != b.first_s) return a.first_s < b.first_s;
    return a.label < b.label;
  });
  return merged;
}

namespace {

double run_overlap(const EvidenceRun& run, double lo, double hi) {
  return std::max(0.0, std::min(run.last_s, hi) - std::max(run.first_s, lo));
}

const EvidenceRun* best_for_span(const std::vector<EvidenceRun>& runs, double lo,
                                 double hi, double nearest_cutoff) {
  const EvidenceRun* best = nullptr;
  double best_overlap = 0.0;
  for (const EvidenceRun& run : runs) {
    const double o = run_overlap(run, lo, hi);
    if (o > best_overlap) {
      best_overlap = o;
      best = &run;
    }
  }
  if (best) return best;
  // No overlapping run; fall back to the nearest one within the cutoff.
  const double center = 0.5 * (lo + hi);
  double best_dist = nearest_cutoff;
  for (const EvidenceRun& run : runs) {
    const double d = run.first_s > center ? run.first_s - center
                                          : (run.last_s < center ? center - run.last_s : 0.0);
    if (d < best_dist) {
      best_dist = d;
      best = &run;
    }
  }
  return best;
}

}  // namespace

std::string best_answer(const QueryInstance& query, const std::vector<EvidenceRun>& runs) {
  switch (query.task) {
    case QueryTask::kIdentification: {
      const EvidenceRun* run =
          best_for_span(runs, query.at_s - 1.0, query.at_s + 1.0, 8.0);
      return run ? run->label : "unknown";
    }
    case QueryTask::kWindow: {
      const EvidenceRun* run =
          best_for_span(runs, query.ask_window.start_s, query.ask_window.end_s, 4.0);
      return run ? run->label : "unknown";
    }
    case QueryTask::kCounting: {
      int count = 0;
      for (const EvidenceRun& run : runs) {
        if (run.label == query.target_label) ++count;
      }
      return std::to_string(count);
    }
    case QueryTask::kOrdering: {
      if (runs.empty()) return "unknown";
      const EvidenceRun* pick = &runs.front();
      for (const EvidenceRun& run : runs) {
        const bool better =
            query.ask_last ? run.first_s > pick->first_s : run.first_s < pick->first_s;
        if (better) pick = &run;
      }
      return pick->label;
    }
  }
  return "unknown";
}

std::vector<std::string> ranked_answers(const QueryInstance& query,
                                        const std::vector<EvidenceRun>& runs, int slots) {
  std::vector<std::string> ranked;
  if (query.query_kind == QueryKind::kMultipleChoice) {
    const std::string best = best_answer(query, runs);
    std::set<std::string> visible;
    for (const EvidenceRun& run : runs) visible.insert(run.label);
    std::vector<const Choice*> order;
    for (const Choice& c : query.choices) order.push_back(&c);
    std::stable_sort(order.begin(), order.end(), [&](const Choice* a, const Choice* b) {
      auto score = [&](const Choice* c) {
        if (c->text == best) return 2;
        return visible.count(c->text) ? 1 : 0;
      };
      return score(a) > score(b);
    });
    for (const Choice* c : order) ranked.push_back(std::string(1, c->letter));
  } else {
    const std::string best = best_answer(query, runs);
    ranked.push_back(best);
    for (const EvidenceRun& run : runs) {
      if (std::find(ranked.begin(), ranked.end(), run.label) == ranked.end()) {
        ranked.push_back(run.label);
      }
    }
    if (ranked.empty()) ranked.push_back("unknown");
  }
  // Pad cyclically so every slot resolves to a real candidate and a uniform
  // slot pick stays uniform over the candidates.
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(slots));
  for (int i = 0; i < slots; ++i) {
    out.push_back(ranked[static_cast<std::size_t>(i) % ranked.size()]);
  }
  return out;
}

bool evidence_covered(const QueryInstance& query,
                      const std::vector<FrameObservation>& observations) {
  for (const TimeWindow& w : query.evidence_windows) {
    bool covered = false;
    for (const FrameObservation& obs : observations) {
      if (w.contains(obs.timestamp_s) && !obs.labels.empty()) {
        covered = true;
        break;
      }
    }
    if (!covered) return false;
  }
  return true;
}

}  // namespace eva
