#include <doctest.h>

#include <set>
#include <sstream>

#include "cagnet/curation.hpp"
#include "support.hpp"

using namespace cagnet;
using namespace cagnet::curation;

namespace {

// Brute force over the rule: count all votes, a class with >= 2 among the
// first three is a majority; otherwise a 4th vote must create a 2-vote class.
std::optional<std::pair<int, ResolutionStatus>> oracle(const std::vector<int>& votes) {
  std::array<int, 5> first{};
  for (std::size_t i = 0; i < 3; ++i) ++first[static_cast<std::size_t>(votes[i])];
  for (int c = 0; c < 5; ++c)
    if (first[static_cast<std::size_t>(c)] >= 2) return std::make_pair(c, ResolutionStatus::Majority);
  if (votes.size() == 3) return std::nullopt;
  return std::make_pair(votes[3], ResolutionStatus::TieBroken);
}

ClipSample sample(const std::string& id, const std::string& video, int label = -1) {
  ClipSample s;
  s.clip_id = id;
  s.source_video_id = video;
  s.paths[0] = id + ".gved";
  if (label >= 0) s.valence = static_cast<Valence>(label);
  return s;
}

}  // namespace

TEST_CASE("vote resolution examples") {
  // P=0, N=1, Ne=2
  auto r = resolve_votes({0, 0, 1}, std::nullopt, 3);
  CHECK(r.status == ResolutionStatus::Majority);
  CHECK(r.label == 0);
  CHECK(r.tally == std::vector<int>{2, 1, 0});

  r = resolve_votes({0, 1, 2}, 1, 3);
  CHECK(r.status == ResolutionStatus::TieBroken);
  CHECK(r.label == 1);

  r = resolve_votes({0, 1, 2}, std::nullopt, 3);
  CHECK(r.status == ResolutionStatus::Discarded);
  CHECK_FALSE(r.label);

  CHECK_THROWS_AS(resolve_votes({0, 0}, std::nullopt, 3), ValidationError);
  CHECK_THROWS_AS(resolve_votes({0, 0, 1}, 2, 3), ValidationError);
  CHECK_THROWS_AS(resolve_votes({0, 0, 3}, std::nullopt, 3), ValidationError);
}

TEST_CASE("vote resolution matches enumeration") {
  for (std::size_t classes : {3u, 5u}) {
    const int C = static_cast<int>(classes);
    for (int a = 0; a < C; ++a)
      for (int b = 0; b < C; ++b)
        for (int c = 0; c < C; ++c) {
          const std::vector<int> three{a, b, c};
          const auto expect = oracle(three);
          const auto got = resolve_votes(three, std::nullopt, classes);
          CHECK(got.label.has_value() == expect.has_value());
          if (expect) CHECK(*got.label == expect->first);
          const bool distinct = a != b && b != c && a != c;
          if (!distinct) continue;
          for (int d = 0; d < C; ++d) {
            const auto e4 = oracle({a, b, c, d});
            const auto g4 = resolve_votes(three, d, classes);
            if (d == a || d == b || d == c) {
              CHECK(g4.status == e4->second);
              CHECK(g4.label == e4->first);
            } else {
              CHECK(g4.status == ResolutionStatus::Discarded);
            }
          }
        }
  }
}

TEST_CASE("emotion remapping") {
  CHECK(remap_emotion("Excitement") == Emotion::Happy);
  CHECK(remap_emotion("peaceful") == Emotion::Happy);
  CHECK(remap_emotion("Frustrated") == Emotion::Anger);
  CHECK(remap_emotion("Sad") == Emotion::Sad);
  CHECK_THROWS_WITH_AS(remap_emotion("Bored"), doctest::Contains("Excitement"), ValidationError);
  CHECK(vote_class(Task::Emotion, "Excitement") == static_cast<int>(Emotion::Happy));
  CHECK(vote_class(Task::Valence, "NEGATIVE") == 1);
}

TEST_CASE("annotation parsing and resolve_all") {
  std::istringstream in(R"({"clip_id":"a","annotator_id":"r1","valence":"Positive","emotion":"Excitement","round":"primary"}
{"clip_id":"a","annotator_id":"r2","valence":"Positive","emotion":"Happy"}
{"clip_id":"a","annotator_id":"r3","valence":"Neutral","emotion":"Sad"}
{"clip_id":"b","annotator_id":"r1","valence":"Positive","emotion":"Happy"}
{"clip_id":"b","annotator_id":"r2","valence":"Negative","emotion":"Anger"}
{"clip_id":"b","annotator_id":"r3","valence":"Neutral","emotion":"Fear"}
{"clip_id":"b","annotator_id":"r4","valence":"Negative","emotion":"Frustrated","round":"tiebreak"}
{"clip_id":"c","annotator_id":"r1","valence":"Positive"}
)");
  const auto records = parse_annotations(in);
  REQUIRE(records.size() == 8);
  CHECK(records[6].round == Round::Tiebreak);

  const auto valence = resolve_all(records, Task::Valence);
  REQUIRE(valence.size() == 3);
  CHECK(valence[0].clip_id == "a");
  CHECK(valence[0].status == ResolutionStatus::Majority);
  CHECK(valence[0].label == 0);
  CHECK(valence[1].status == ResolutionStatus::TieBroken);
  CHECK(valence[1].label == 1);
  CHECK(valence[2].status == ResolutionStatus::Discarded);
  CHECK(valence[2].error.has_value());

  const auto emotion = resolve_all(records, Task::Emotion);
  CHECK(emotion[0].label == static_cast<int>(Emotion::Happy));
  CHECK(emotion[1].label == static_cast<int>(Emotion::Anger));

  std::istringstream dup(R"({"clip_id":"a","annotator_id":"r1","valence":"Positive"}
{"clip_id":"a","annotator_id":"r1","valence":"Neutral"}
)");
  try {
    parse_annotations(dup);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream bad_round(R"({"clip_id":"a","annotator_id":"r1","round":"third"})");
  CHECK_THROWS_AS(parse_annotations(bad_round), ParseError);
  std::istringstream bad_intensity(R"({"clip_id":"a","annotator_id":"r1","intensity":"Extreme"})");
  CHECK_THROWS_AS(parse_annotations(bad_intensity), ParseError);
}

TEST_CASE("kappa examples") {
  const auto hand = kappa_from_counts({{20, 5}, {10, 15}});
  CHECK(std::abs(hand.observed - 0.7) <= 1e-12);
  CHECK(std::abs(hand.expected - 0.5) <= 1e-12);
  CHECK(std::abs(hand.kappa - 0.4) <= 1e-9);

  const std::vector<std::string> cats{"P", "N", "Ne"};
  const std::vector<std::string> a{"P", "N", "Ne", "P", "N"};
  CHECK(cohens_kappa(a, a, cats).kappa == 1.0);

  const auto constant = cohens_kappa({"P", "P"}, {"P", "P"}, cats);
  CHECK(constant.degenerate);
  CHECK(constant.kappa == 1.0);

  CHECK_THROWS_AS(cohens_kappa({"P"}, {"P", "N"}, cats), ValidationError);
  CHECK_THROWS_AS(cohens_kappa({"P"}, {"X"}, cats), ValidationError);
  CHECK_THROWS_AS(cohens_kappa({}, {}, cats), ValidationError);
}

TEST_CASE("kappa properties") {
  Rng rng(3);
  const std::vector<std::string> cats{"P", "N", "Ne"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> a, b;
    for (int i = 0; i < 40; ++i) {
      a.push_back(cats[rng.below(3)]);
      b.push_back(rng.uniform() < 0.6 ? a.back() : cats[rng.below(3)]);
    }
    const auto ab = cohens_kappa(a, b, cats);
    CHECK(std::abs(ab.kappa - cohens_kappa(b, a, cats).kappa) <= 1e-12);
    CHECK(ab.kappa >= -1.0);
    CHECK(ab.kappa <= 1.0);
    // relabel P->Ne->N->P
    auto relabel = [](std::vector<std::string> v) {
      for (auto& s : v) s = s == "P" ? "Ne" : s == "Ne" ? "N" : "P";
      return v;
    };
    CHECK(std::abs(ab.kappa - cohens_kappa(relabel(a), relabel(b), cats).kappa) <= 1e-12);
  }

  std::vector<std::string> x, y;
  for (int i = 0; i < 10000; ++i) {
    x.push_back(cats[rng.below(3)]);
    y.push_back(cats[rng.below(3)]);
  }
  CHECK(std::abs(cohens_kappa(x, y, cats).kappa) < 0.05);
}

TEST_CASE("pairwise kappa over annotators") {
  std::vector<AnnotationRecord> records;
  auto vote = [&](const std::string& clip, const std::string& who, const std::string& v) {
    AnnotationRecord r;
    r.clip_id = clip;
    r.annotator_id = who;
    r.valence = v;
    records.push_back(r);
  };
  const std::vector<std::string> labels{"Positive", "Negative", "Neutral", "Positive"};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    vote("c" + std::to_string(i), "r1", labels[i]);
    vote("c" + std::to_string(i), "r2", labels[i]);
    vote("c" + std::to_string(i), "r3", labels[i]);
  }
  const auto report = pairwise_kappa(records, Task::Valence);
  CHECK(report.pairs.size() == 3);
  CHECK(report.kappa == 1.0);
  CHECK_THROWS_AS(pairwise_kappa(records, Task::Valence, 5), ValidationError);
}

TEST_CASE("splits on small groups") {
  std::vector<ClipSample> samples;
  for (int i = 0; i < 10; ++i) samples.push_back(sample("s" + std::to_string(i), "v" + std::to_string(i), i % 3));
  const auto split = make_splits(samples, {6, 2, 2}, 1);
  CHECK(split.achieved == std::array<std::size_t, 3>{6, 2, 2});
  CHECK_FALSE(split.best_effort);
  CHECK(split.warnings.empty());
  std::size_t total = 0;
  for (const auto& d : split.valence_distribution)
    for (const auto& [name, n] : d) total += n;
  CHECK(total == 10);

  CHECK(counts_from_ratios({0.7, 0.15, 0.15}, 10) == std::array<std::size_t, 3>{7, 2, 1});
  CHECK(counts_from_ratios({0.7, 0.15, 0.15}, 5091)[0] + counts_from_ratios({0.7, 0.15, 0.15}, 5091)[1] +
            counts_from_ratios({0.7, 0.15, 0.15}, 5091)[2] ==
        5091);
  CHECK_THROWS_AS(make_splits(samples, {6, 2, 1}, 1), ValidationError);
}

TEST_CASE("splits keep videos together and stay near targets") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ClipSample> samples;
    const auto groups = 1 + rng.below(30);
    std::size_t largest = 0;
    for (std::uint64_t g = 0; g < groups; ++g) {
      const auto size = 1 + rng.below(6);
      largest = std::max<std::size_t>(largest, size);
      for (std::uint64_t k = 0; k < size; ++k)
        samples.push_back(sample("g" + std::to_string(g) + "_" + std::to_string(k), "v" + std::to_string(g)));
    }
    const auto counts = counts_from_ratios({0.7, 0.15, 0.15}, samples.size());
    const auto split = make_splits(samples, counts, static_cast<std::uint64_t>(trial));
    CHECK(split.largest_group == largest);
    std::map<std::string, Split> video_split;
    for (const auto& s : samples) {
      const auto where = split.assignment.at(s.clip_id);
      const auto [it, inserted] = video_split.emplace(s.source_video_id, where);
      CHECK(it->second == where);
    }
    for (std::size_t k = 0; k < 3; ++k) {
      const auto diff = static_cast<long>(split.achieved[k]) - static_cast<long>(counts[k]);
      CHECK(static_cast<std::size_t>(std::abs(diff)) <= largest);
    }
    CHECK(make_splits(samples, counts, static_cast<std::uint64_t>(trial)).assignment == split.assignment);
  }
}

TEST_CASE("oversized group is flagged best effort") {
  std::vector<ClipSample> samples;
  for (int k = 0; k < 8; ++k) samples.push_back(sample("big" + std::to_string(k), "big"));
  samples.push_back(sample("x", "x"));
  samples.push_back(sample("y", "y"));
  const auto split = make_splits(samples, {5, 3, 2}, 0);
  CHECK(split.best_effort);
  CHECK_FALSE(split.warnings.empty());
}

TEST_CASE("segment planning") {
  auto plan = segment_plan(23);
  REQUIRE(plan.windows.size() == 4);
  CHECK(plan.windows.back().end == 20.0);
  plan = segment_plan(5);
  REQUIRE(plan.windows.size() == 1);
  CHECK(plan.windows[0].start == 0.0);
  CHECK(plan.windows[0].end == 5.0);
  plan = segment_plan(3);
  CHECK(plan.windows.empty());
  CHECK(plan.warning.has_value());
  plan = segment_plan(200);
  CHECK(plan.candidates == 40);
  REQUIRE(plan.windows.size() == 35);
  CHECK(plan.windows.front().start == 0.0);
  for (std::size_t i = 0; i < plan.windows.size(); ++i) {
    CHECK(plan.windows[i].end - plan.windows[i].start == 5.0);
    if (i) CHECK(plan.windows[i].start >= plan.windows[i - 1].end);
  }
  CHECK_THROWS_AS(segment_plan(0), ValidationError);
}

TEST_CASE("class distribution") {
  CHECK(class_distribution({}, Task::Valence).counts == std::vector<std::size_t>{0, 0, 0});
  std::vector<ClipSample> samples{sample("a", "v", 0), sample("b", "v", 0), sample("c", "v", 2), sample("d", "v")};
  const auto d = class_distribution(samples, Task::Valence);
  CHECK(d.counts == std::vector<std::size_t>{2, 0, 1});
  CHECK(d.unlabeled == 1);
  CHECK(d.total == 4);
}

TEST_CASE("block probability fusion") {
  auto f = fuse_block_probabilities({0.6, 0.2, 0.2}, {0.5, 0.3, 0.2}, {0.4, 0.4, 0.2});
  CHECK(f.label == 0);
  CHECK(f.probabilities[0] == doctest::Approx(0.5));
  CHECK(f.probabilities[1] == doctest::Approx(0.3));
  CHECK(f.probabilities[2] == doctest::Approx(0.2));
  CHECK(fuse_block_probabilities({0, 1, 0}, {0, 1, 0}, {0, 1, 0}).label == 1);
  CHECK(fuse_block_probabilities({0.5, 0.5, 0}, {0.5, 0.5, 0}, {0.5, 0.5, 0}).label == 0);
  const auto perm = fuse_block_probabilities({0.4, 0.4, 0.2}, {0.6, 0.2, 0.2}, {0.5, 0.3, 0.2});
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(perm.probabilities[i] - f.probabilities[i]) <= 1e-15);
  CHECK_THROWS_AS(fuse_block_probabilities({0.5, 0.2, 0.2}, {0.5, 0.3, 0.2}, {0.4, 0.4, 0.2}), ValidationError);
  CHECK_THROWS_AS(fuse_block_probabilities({1.0, 0.0}, {0.5, 0.3, 0.2}, {0.4, 0.4, 0.2}), ValidationError);
}
