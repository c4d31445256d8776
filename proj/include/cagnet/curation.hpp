#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cagnet/embedding_io.hpp"
#include "cagnet/labels.hpp"

// Label production for group-affect clips: vote resolution, emotion
// remapping, inter-annotator agreement, leakage-free splits, segmentation
// planning, class counts and block-probability fusion.
namespace cagnet::curation {

enum class Round { Primary, Tiebreak };

struct AnnotationRecord {
  std::string clip_id;
  std::string annotator_id;
  std::optional<std::string> valence;
  std::optional<std::string> emotion;
  std::optional<std::string> intensity;    // High | Medium | Low
  std::optional<std::string> interaction;  // Cooperative | Hostile | Neutral
  std::vector<std::string> cues;
  Round round = Round::Primary;
};

// JSONL, one vote per line. (clip_id, annotator_id) must be unique.
std::vector<AnnotationRecord> parse_annotations(std::istream& in);
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);

// Excitement and Peaceful become Happy, Frustrated becomes Anger; the five
// canonical emotions pass through. Case-insensitive. Unknown labels throw
// ValidationError listing the accepted vocabulary.
Emotion remap_emotion(std::string_view label);

// Class index of one vote under `task` (emotion votes are remapped first).
int vote_class(Task task, std::string_view label);

enum class ResolutionStatus { Majority, TieBroken, Discarded };
std::string_view status_name(ResolutionStatus s);

struct LabelResolution {
  std::string clip_id;
  std::optional<int> label;  // null exactly when Discarded
  ResolutionStatus status = ResolutionStatus::Discarded;
  std::vector<int> tally;    // votes per class, all rounds
  std::optional<std::string> error;  // set when discarded for malformed input
};

// Core rule on class indices. `primary` must hold exactly three votes; a
// tie-break vote is allowed only when those three are pairwise distinct.
//   >= 2 matching primary votes      -> Majority
//   3 distinct + tie-break that makes a 2-vote class -> TieBroken
//   otherwise                        -> Discarded
// Throws ValidationError for a wrong vote count or an unneeded tie-break.
LabelResolution resolve_votes(const std::vector<int>& primary, std::optional<int> tiebreak, std::size_t classes);

// Resolves one clip from its annotation records.
LabelResolution resolve_labels(const std::vector<const AnnotationRecord*>& votes, Task task);

// Groups records by clip (first-appearance order) and resolves each. Clips
// with malformed vote sets come back Discarded with `error` set.
std::vector<LabelResolution> resolve_all(const std::vector<AnnotationRecord>& records, Task task);

struct PairKappa {
  std::string rater_a;
  std::string rater_b;
  std::size_t shared = 0;
  double observed = 0;
  double expected = 0;
  double kappa = 0;
  bool degenerate = false;
};

struct KappaReport {
  double observed = 0;  // p_o
  double expected = 0;  // p_e
  double kappa = 0;
  bool degenerate = false;  // p_e == 1; kappa reported as 1
  std::size_t items = 0;
  std::vector<PairKappa> pairs;
  std::vector<std::string> categories;
};

// Two-rater kappa = (p_o - p_e) / (1 - p_e) with p_e from the marginals.
KappaReport cohens_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b,
                         const std::vector<std::string>& categories);

// Kappa from a square contingency table (rows: rater A, cols: rater B).
KappaReport kappa_from_counts(const std::vector<std::vector<double>>& counts);

// Mean pairwise kappa over every annotator pair sharing at least
// `min_shared` clips (primary-round votes). observed/expected are the means
// over pairs as well.
KappaReport pairwise_kappa(const std::vector<AnnotationRecord>& records, Task task, std::size_t min_shared = 1);

enum class Split { Train = 0, Val = 1, Test = 2 };
std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view s);

struct SplitManifest {
  std::map<std::string, Split> assignment;  // clip_id -> split
  std::array<std::size_t, 3> targets{};
  std::array<std::size_t, 3> achieved{};
  std::size_t largest_group = 0;
  bool best_effort = false;  // targets could not be met within one group
  std::vector<std::string> warnings;
  // Per split, class name -> count for each labelled task.
  std::array<std::map<std::string, std::size_t>, 3> valence_distribution;
  std::array<std::map<std::string, std::size_t>, 3> emotion_distribution;
};

// Ratios scaled to `total` by largest remainder (ties to the earlier split).
std::array<std::size_t, 3> counts_from_ratios(const std::array<double, 3>& ratios, std::size_t total);

// Greedy randomised assignment of whole source-video groups: groups are
// shuffled by seed, ordered by size (largest first, shuffle order breaks
// ties) and each goes to the split with the largest remaining deficit
// (earliest split on ties). Every split ends within one largest-group size
// of its target. Counts must sum to the number of samples.
SplitManifest make_splits(const std::vector<ClipSample>& samples, const std::array<std::size_t, 3>& counts,
                          std::uint64_t seed);

struct Segment {
  double start = 0;
  double end = 0;
};

struct SegmentPlan {
  std::vector<Segment> windows;
  std::size_t candidates = 0;
  std::optional<std::string> warning;
};

// Consecutive [k·L, (k+1)·L) windows; a tail shorter than L is dropped. Over
// the cap, `max_segments` windows are taken at a uniform stride.
SegmentPlan segment_plan(double duration_s, double clip_len_s = 5.0, std::size_t max_segments = 35);

struct ClassDistribution {
  Task task = Task::Valence;
  std::vector<std::size_t> counts;  // per class index
  std::size_t unlabeled = 0;
  std::size_t total = 0;
};

ClassDistribution class_distribution(const std::vector<ClipSample>& samples, Task task);

struct FusedPrediction {
  std::vector<double> probabilities;
  int label = 0;
};

// Elementwise mean of three probability vectors and its argmax (lowest index
// wins ties). Inputs must be normalised within 1e-6.
FusedPrediction fuse_block_probabilities(const std::vector<double>& va, const std::vector<double>& vc,
                                         const std::vector<double>& ac);

}  // namespace cagnet::curation
