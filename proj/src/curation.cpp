#include "cagnet/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "cagnet/error.hpp"
#include "cagnet/model.hpp"
#include "cagnet/rng.hpp"

namespace cagnet::curation {

using json = nlohmann::json;

namespace {

std::optional<std::string> opt_string(const json& row, const char* key, std::size_t line) {
  auto it = row.find(key);
  if (it == row.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<std::string> canonical(std::optional<std::string> v, std::initializer_list<const char*> allowed,
                                     const char* field, std::size_t line) {
  if (!v) return v;
  for (const char* a : allowed)
    if (to_lower(*v) == to_lower(a)) return std::string(a);
  std::string list;
  for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
  throw ParseError(line, std::string("unknown ") + field + " '" + *v + "' (expected one of " + list + ")");
}

}  // namespace

std::vector<AnnotationRecord> parse_annotations(std::istream& in) {
  std::vector<AnnotationRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line, std::string("invalid JSON: ") + e.what());
    }
    if (!row.is_object()) throw ParseError(line, "expected a JSON object");
    AnnotationRecord r;
    auto clip = opt_string(row, "clip_id", line);
    auto annotator = opt_string(row, "annotator_id", line);
    if (!clip || clip->empty()) throw ParseError(line, "missing required field 'clip_id'");
    if (!annotator || annotator->empty()) throw ParseError(line, "missing required field 'annotator_id'");
    r.clip_id = *clip;
    r.annotator_id = *annotator;
    if (!seen.emplace(r.clip_id, r.annotator_id).second) {
      throw ParseError(line, "annotator '" + r.annotator_id + "' voted twice on clip '" + r.clip_id + "'");
    }
    r.valence = opt_string(row, "valence", line);
    r.emotion = opt_string(row, "emotion", line);
    r.intensity = canonical(opt_string(row, "intensity", line), {"High", "Medium", "Low"}, "intensity", line);
    r.interaction = canonical(opt_string(row, "interaction", line), {"Cooperative", "Hostile", "Neutral"},
                              "interaction", line);
    if (auto c = row.find("cues"); c != row.end() && !c->is_null()) {
      if (!c->is_array()) throw ParseError(line, "field 'cues' must be an array of strings");
      for (const auto& cue : *c) {
        if (!cue.is_string()) throw ParseError(line, "field 'cues' must be an array of strings");
        r.cues.push_back(cue.get<std::string>());
      }
    }
    const auto round = opt_string(row, "round", line).value_or("primary");
    if (to_lower(round) == "primary") {
      r.round = Round::Primary;
    } else if (to_lower(round) == "tiebreak") {
      r.round = Round::Tiebreak;
    } else {
      throw ParseError(line, "unknown round '" + round + "' (expected primary or tiebreak)");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open annotations " + path.string());
  return parse_annotations(in);
}

Emotion remap_emotion(std::string_view label) {
  if (auto e = parse_emotion(label)) return *e;
  const std::string l = to_lower(label);
  if (l == "excitement" || l == "peaceful") return Emotion::Happy;
  if (l == "frustrated") return Emotion::Anger;
  throw ValidationError("unknown emotion label '" + std::string(label) +
                        "' (vocabulary: Neutral, Happy, Sad, Fear, Anger, Excitement, Peaceful, Frustrated)");
}

int vote_class(Task task, std::string_view label) {
  if (task == Task::Emotion) return static_cast<int>(remap_emotion(label));
  if (auto v = parse_valence(label)) return static_cast<int>(*v);
  throw ValidationError("unknown valence label '" + std::string(label) + "' (vocabulary: Positive, Negative, Neutral)");
}

std::string_view status_name(ResolutionStatus s) {
  switch (s) {
    case ResolutionStatus::Majority:
      return "Majority";
    case ResolutionStatus::TieBroken:
      return "TieBroken";
    case ResolutionStatus::Discarded:
      return "Discarded";
  }
  return "Discarded";
}

LabelResolution resolve_votes(const std::vector<int>& primary, std::optional<int> tiebreak, std::size_t classes) {
  if (primary.size() != 3) {
    throw ValidationError("expected exactly 3 primary votes, got " + std::to_string(primary.size()));
  }
  LabelResolution res;
  res.tally.assign(classes, 0);
  auto count = [&](int v) {
    if (v < 0 || static_cast<std::size_t>(v) >= classes) throw ValidationError("vote outside the class set");
    ++res.tally[static_cast<std::size_t>(v)];
  };
  for (int v : primary) count(v);
  const auto top = std::max_element(res.tally.begin(), res.tally.end());
  if (*top >= 2) {
    if (tiebreak) throw ValidationError("tie-break vote supplied although the primary votes have a majority");
    res.label = static_cast<int>(top - res.tally.begin());
    res.status = ResolutionStatus::Majority;
    return res;
  }
  if (!tiebreak) {
    res.status = ResolutionStatus::Discarded;
    return res;
  }
  count(*tiebreak);
  // With three distinct primary votes the fourth can only form a 2-vote class
  // by matching one of them; a new fourth class leaves the clip unresolved.
  if (res.tally[static_cast<std::size_t>(*tiebreak)] == 2) {
    res.label = *tiebreak;
    res.status = ResolutionStatus::TieBroken;
  } else {
    res.status = ResolutionStatus::Discarded;
  }
  return res;
}

LabelResolution resolve_labels(const std::vector<const AnnotationRecord*>& votes, Task task) {
  if (votes.empty()) throw ValidationError("no votes");
  std::vector<int> primary;
  std::optional<int> tiebreak;
  for (const auto* r : votes) {
    const auto& label = task == Task::Valence ? r->valence : r->emotion;
    if (!label) {
      throw ValidationError("annotator '" + r->annotator_id + "' gave no " + std::string(task_name(task)) + " vote");
    }
    const int cls = vote_class(task, *label);
    if (r->round == Round::Primary) {
      primary.push_back(cls);
    } else if (tiebreak) {
      throw ValidationError("more than one tie-break vote");
    } else {
      tiebreak = cls;
    }
  }
  auto res = resolve_votes(primary, tiebreak, num_classes(task));
  res.clip_id = votes.front()->clip_id;
  return res;
}

std::vector<LabelResolution> resolve_all(const std::vector<AnnotationRecord>& records, Task task) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const AnnotationRecord*>> by_clip;
  for (const auto& r : records) {
    auto [it, inserted] = by_clip.try_emplace(r.clip_id);
    if (inserted) order.push_back(r.clip_id);
    it->second.push_back(&r);
  }
  std::vector<LabelResolution> out;
  for (const auto& clip : order) {
    try {
      out.push_back(resolve_labels(by_clip[clip], task));
    } catch (const ValidationError& e) {
      LabelResolution bad;
      bad.clip_id = clip;
      bad.status = ResolutionStatus::Discarded;
      bad.tally.assign(num_classes(task), 0);
      bad.error = e.what();
      out.push_back(std::move(bad));
    }
  }
  return out;
}

// ---- Kappa ----------------------------------------------------------------

KappaReport kappa_from_counts(const std::vector<std::vector<double>>& counts) {
  const std::size_t k = counts.size();
  if (k == 0) throw ValidationError("kappa: empty contingency table");
  double n = 0, agree = 0;
  std::vector<double> rows(k, 0), cols(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    if (counts[i].size() != k) throw ValidationError("kappa: contingency table is not square");
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[i][j] < 0) throw ValidationError("kappa: negative count");
      n += counts[i][j];
      rows[i] += counts[i][j];
      cols[j] += counts[i][j];
    }
    agree += counts[i][i];
  }
  if (n <= 0) throw ValidationError("kappa: no rated items");
  KappaReport r;
  r.items = static_cast<std::size_t>(n);
  r.observed = agree / n;
  for (std::size_t i = 0; i < k; ++i) r.expected += (rows[i] / n) * (cols[i] / n);
  if (r.expected >= 1.0) {
    r.degenerate = true;
    r.kappa = 1.0;
  } else {
    r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
  }
  return r;
}

KappaReport cohens_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b,
                         const std::vector<std::string>& categories) {
  if (a.size() != b.size()) {
    throw ValidationError("kappa: rater lists differ in length (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ValidationError("kappa: no rated items");
  std::map<std::string, std::size_t> index;
  for (const auto& c : categories) index.emplace(c, index.size());
  if (index.size() != categories.size() || index.empty()) throw ValidationError("kappa: invalid category set");
  std::vector<std::vector<double>> counts(index.size(), std::vector<double>(index.size(), 0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto ia = index.find(a[i]);
    auto ib = index.find(b[i]);
    if (ia == index.end() || ib == index.end()) {
      throw ValidationError("kappa: label '" + (ia == index.end() ? a[i] : b[i]) + "' is not in the category set");
    }
    counts[ia->second][ib->second] += 1;
  }
  auto r = kappa_from_counts(counts);
  r.categories = categories;
  return r;
}

KappaReport pairwise_kappa(const std::vector<AnnotationRecord>& records, Task task, std::size_t min_shared) {
  // annotator -> clip -> class
  std::map<std::string, std::map<std::string, int>> votes;
  for (const auto& r : records) {
    if (r.round != Round::Primary) continue;
    const auto& label = task == Task::Valence ? r.valence : r.emotion;
    if (!label) continue;
    votes[r.annotator_id][r.clip_id] = vote_class(task, *label);
  }
  const std::size_t classes = num_classes(task);
  KappaReport report;
  for (std::size_t c = 0; c < classes; ++c) report.categories.emplace_back(class_name(task, static_cast<int>(c)));
  std::set<std::string> clips;
  for (auto a = votes.begin(); a != votes.end(); ++a) {
    for (auto b = std::next(a); b != votes.end(); ++b) {
      std::vector<std::vector<double>> counts(classes, std::vector<double>(classes, 0));
      std::size_t shared = 0;
      for (const auto& [clip, va] : a->second) {
        auto vb = b->second.find(clip);
        if (vb == b->second.end()) continue;
        counts[static_cast<std::size_t>(va)][static_cast<std::size_t>(vb->second)] += 1;
        clips.insert(clip);
        ++shared;
      }
      if (shared == 0 || shared < min_shared) continue;
      const auto k = kappa_from_counts(counts);
      report.pairs.push_back(PairKappa{a->first, b->first, shared, k.observed, k.expected, k.kappa, k.degenerate});
    }
  }
  if (report.pairs.empty()) throw ValidationError("kappa: no annotator pair shares enough clips");
  for (const auto& p : report.pairs) {
    report.observed += p.observed;
    report.expected += p.expected;
    report.kappa += p.kappa;
  }
  const double n = static_cast<double>(report.pairs.size());
  report.observed /= n;
  report.expected /= n;
  report.kappa /= n;
  report.items = clips.size();
  report.degenerate = std::all_of(report.pairs.begin(), report.pairs.end(), [](const auto& p) { return p.degenerate; });
  return report;
}

// ---- Splits ---------------------------------------------------------------

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view s) {
  const std::string l = to_lower(s);
  if (l == "train") return Split::Train;
  if (l == "val" || l == "validation") return Split::Val;
  if (l == "test") return Split::Test;
  return std::nullopt;
}

std::array<std::size_t, 3> counts_from_ratios(const std::array<double, 3>& ratios, std::size_t total) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (!(sum > 0) || std::any_of(ratios.begin(), ratios.end(), [](double r) { return r < 0; })) {
    throw ValidationError("split ratios must be non-negative with a positive sum");
  }
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] / sum * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return remainder[x] > remainder[y]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[order[i % 3]];
  return counts;
}

SplitManifest make_splits(const std::vector<ClipSample>& samples, const std::array<std::size_t, 3>& counts,
                          std::uint64_t seed) {
  const std::size_t total = counts[0] + counts[1] + counts[2];
  if (total != samples.size()) {
    throw ValidationError("split targets sum to " + std::to_string(total) + " but the manifest has " +
                          std::to_string(samples.size()) + " clips");
  }
  std::map<std::string, std::vector<const ClipSample*>> groups;
  for (const auto& s : samples) groups[s.source_video_id].push_back(&s);

  std::vector<const std::vector<const ClipSample*>*> order;
  for (const auto& [id, members] : groups) order.push_back(&members);
  Rng rng(seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [](auto a, auto b) { return a->size() > b->size(); });

  SplitManifest out;
  out.targets = counts;
  std::array<long long, 3> deficit{};
  for (std::size_t i = 0; i < 3; ++i) deficit[i] = static_cast<long long>(counts[i]);
  for (const auto* members : order) {
    out.largest_group = std::max(out.largest_group, members->size());
    const auto best = static_cast<std::size_t>(std::max_element(deficit.begin(), deficit.end()) - deficit.begin());
    deficit[best] -= static_cast<long long>(members->size());
    out.achieved[best] += members->size();
    for (const auto* s : *members) {
      out.assignment[s->clip_id] = static_cast<Split>(best);
      if (s->valence) ++out.valence_distribution[best][std::string(valence_name(*s->valence))];
      if (s->emotion) ++out.emotion_distribution[best][std::string(emotion_name(*s->emotion))];
    }
  }
  const std::size_t max_target = *std::max_element(counts.begin(), counts.end());
  if (out.largest_group > max_target) {
    out.best_effort = true;
    out.warnings.push_back("a source video with " + std::to_string(out.largest_group) +
                           " clips exceeds every split target; assignment is best effort");
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (out.achieved[i] != out.targets[i]) {
      out.warnings.push_back(std::string(split_name(static_cast<Split>(i))) + ": achieved " +
                             std::to_string(out.achieved[i]) + " of target " + std::to_string(out.targets[i]));
    }
  }
  return out;
}

// ---- Segmentation ---------------------------------------------------------

SegmentPlan segment_plan(double duration_s, double clip_len_s, std::size_t max_segments) {
  if (!(duration_s > 0)) throw ValidationError("segment_plan: duration must be positive");
  if (!(clip_len_s > 0)) throw ValidationError("segment_plan: clip length must be positive");
  if (max_segments == 0) throw ValidationError("segment_plan: max_segments must be at least 1");
  SegmentPlan plan;
  // Small slack so durations that are exact multiples survive float division.
  plan.candidates = static_cast<std::size_t>(std::floor(duration_s / clip_len_s + 1e-9));
  if (plan.candidates == 0) {
    plan.warning = "video shorter than one clip (" + std::to_string(duration_s) + " s < " +
                   std::to_string(clip_len_s) + " s); no segments planned";
    return plan;
  }
  const std::size_t keep = std::min(plan.candidates, max_segments);
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t k = plan.candidates > max_segments ? i * plan.candidates / max_segments : i;
    plan.windows.push_back({static_cast<double>(k) * clip_len_s, static_cast<double>(k + 1) * clip_len_s});
  }
  return plan;
}

ClassDistribution class_distribution(const std::vector<ClipSample>& samples, Task task) {
  ClassDistribution d;
  d.task = task;
  d.counts.assign(num_classes(task), 0);
  for (const auto& s : samples) {
    const int label = s.label(task);
    if (label < 0) {
      ++d.unlabeled;
    } else {
      ++d.counts[static_cast<std::size_t>(label)];
    }
  }
  d.total = samples.size();
  return d;
}

FusedPrediction fuse_block_probabilities(const std::vector<double>& va, const std::vector<double>& vc,
                                         const std::vector<double>& ac) {
  if (va.empty() || va.size() != vc.size() || va.size() != ac.size()) {
    throw ValidationError("fuse_block_probabilities: vectors must be non-empty and of equal length");
  }
  for (const auto* v : {&va, &vc, &ac}) {
    const double s = std::accumulate(v->begin(), v->end(), 0.0);
    if (std::abs(s - 1.0) > 1e-6 || std::any_of(v->begin(), v->end(), [](double p) { return p < 0; })) {
      throw ValidationError("fuse_block_probabilities: input is not a probability vector (sum " + std::to_string(s) +
                            ")");
    }
  }
  FusedPrediction out;
  out.probabilities.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) out.probabilities[i] = (va[i] + vc[i] + ac[i]) / 3.0;
  out.label = argmax(out.probabilities);
  return out;
}

}  // namespace cagnet::curation
