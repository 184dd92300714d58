#pragma once

#include <string>
#include <vector>

#include "eva/frame_tool.hpp"
#include "eva/synthetic_video.hpp"

namespace eva {

// A contiguous stretch of frames showing the same label, reconstructed from
// observations alone (no timeline access).
struct EvidenceRun {
  std::string label;
  double first_s = 0.0;
  double last_s = 0.0;
};

// Groups each batch's observations into per-label runs (split when the gap
// between sightings exceeds 1.75x the batch's sample spacing), then merges
// runs of the same label that overlap or nearly touch across batches.
std::vector<EvidenceRun> extract_runs(const std::vector<FrameBatch>& batches);

// Best answer derivable from the evidence for this query; "unknown" when the
// evidence says nothing.
std::string best_answer(const QueryInstance& query, const std::vector<EvidenceRun>& runs);

// Candidate answers ordered by evidence support, padded cyclically to
// exactly `slots` entries. For multiple choice these are choice letters; the
// best-supported letter comes first and the letters repeat uniformly, so a
// uniformly random slot is a uniformly random letter. For open-ended queries
// these are extracted labels (or counts), "unknown" when there is nothing.
std::vector<std::string> ranked_answers(const QueryInstance& query,
                                        const std::vector<EvidenceRun>& runs, int slots);

// True when every evidence window of the query contains at least one
// observation that shows an event.
bool evidence_covered(const QueryInstance& query,
                      const std::vector<FrameObservation>& observations);

}  // namespace eva
