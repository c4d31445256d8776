#include <doctest.h>

#include "cagnet/evaluation.hpp"
#include "cagnet/metrics.hpp"
#include "cagnet/synthetic.hpp"
#include "cagnet/trainer.hpp"
#include "support.hpp"

using namespace cagnet;

TEST_CASE("metrics worked example") {
  const auto r = compute_metrics({0, 0, 1, 2}, {0, 1, 1, 2}, 3);
  CHECK(r.accuracy == 0.75);
  CHECK(r.per_class[0].f1 == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(r.per_class[1].f1 == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(r.per_class[2].f1 == 1.0);
  CHECK(r.macro_f1 == doctest::Approx(7.0 / 9).epsilon(1e-12));
  CHECK(r.confusion[0][1] == 1);
  CHECK(r.count == 4);
  const auto j = r.to_json({"positive", "negative", "neutral"});
  CHECK(j["per_class"][2]["class"] == "neutral");
  CHECK(j["per_class"][2]["f1"] == 1.0);
  CHECK(r.to_table().find("macro") != std::string::npos);
}

TEST_CASE("metrics edge cases") {
  const auto perfect = compute_metrics({0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}, 5);
  CHECK(perfect.accuracy == 1.0);
  for (const auto& c : perfect.per_class) CHECK(c.f1 == 1.0);

  const auto flat = compute_metrics({0, 1, 2, 0, 1, 2}, {0, 0, 0, 0, 0, 0}, 3);
  CHECK(flat.accuracy == doctest::Approx(1.0 / 3));
  CHECK(flat.per_class[1].precision == 0.0);
  CHECK(flat.per_class[1].f1 == 0.0);

  CHECK_THROWS_AS(compute_metrics({0}, {0, 1}, 3), ValidationError);
  CHECK_THROWS_AS(compute_metrics({}, {}, 3), ValidationError);
  CHECK_THROWS_AS(compute_metrics({3}, {0}, 3), ValidationError);
}

TEST_CASE("metrics properties") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t C = trial % 2 ? 3 : 5;
    std::vector<int> t, p;
    const auto n = 1 + rng.below(60);
    for (std::uint64_t i = 0; i < n; ++i) {
      t.push_back(static_cast<int>(rng.below(C)));
      p.push_back(static_cast<int>(rng.below(C)));
    }
    const auto r = compute_metrics(t, p, C);
    std::size_t trace = 0, total = 0;
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        total += r.confusion[i][j];
        if (i == j) trace += r.confusion[i][j];
      }
    CHECK(total == n);
    CHECK(r.accuracy == static_cast<double>(trace) / static_cast<double>(total));

    std::vector<int> perm(C);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<int> t2, p2;
    for (std::size_t i = 0; i < t.size(); ++i) {
      t2.push_back(perm[static_cast<std::size_t>(t[i])]);
      p2.push_back(perm[static_cast<std::size_t>(p[i])]);
    }
    CHECK(std::abs(compute_metrics(t2, p2, C).macro_f1 - r.macro_f1) <= 1e-12);

    std::vector<int> bt, bp;
    for (std::size_t k = 0; k < 4 * C; ++k) {
      bt.push_back(static_cast<int>(k % C));
      bp.push_back(static_cast<int>(rng.below(C)));
    }
    const auto balanced = compute_metrics(bt, bp, C);
    CHECK(std::abs(balanced.weighted_f1 - balanced.macro_f1) <= 1e-12);
  }
}

TEST_CASE("evaluation harness on synthetic data") {
  SyntheticOptions opts;
  opts.clips = 24;
  opts.dim = 8;
  opts.noise = 0.1;
  opts.visual_only = true;
  auto samples = make_synthetic(opts);
  const auto data = as_pointers(samples);
  const auto config = cagnet::testing::toy_config(Variant::CAGNet);
  TrainConfig train;
  train.batch_size = 4;
  train.lr = 3e-3;
  train.fixed_epochs = 40;
  Rng rng(3);
  const auto fitted = fit(init_params<float>(config, rng), data, {}, config, train, rng);

  InferenceOptions opts_eval;
  const auto report = evaluate_model(fitted.params, config, data, opts_eval);
  CHECK(report.accuracy >= 0.95);
  CHECK(evaluate_model(fitted.params, config, data, opts_eval).confusion == report.confusion);

  const auto rows = missing_modality_report(fitted.params, config, data, opts_eval);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].condition == "none");
  CHECK(rows[0].metrics.confusion == report.confusion);
  for (const auto& row : rows) CHECK(row.metrics.count == 24);
  for (std::size_t i = 2; i < 4; ++i) CHECK(rows[1].metrics.accuracy <= rows[i].metrics.accuracy);
  CHECK(condition_table(rows).find("-V") != std::string::npos);

  opts_eval.missing = {Modality::Visual, Modality::Audio, Modality::Context};
  CHECK_THROWS_AS(evaluate_model(fitted.params, config, data, opts_eval), ValidationError);

  samples[0].valence.reset();
  CHECK_THROWS_AS(evaluate_model(fitted.params, config, as_pointers(samples), InferenceOptions{}), ValidationError);
}
