#include <doctest.h>

#include <cmath>
#include <random>

#include "dkts/errors.hpp"
#include "dkts/evaluator.hpp"
#include "dkts/trainer.hpp"
#include "helpers.hpp"

using namespace dkts;

TEST_CASE("auc against the pairwise oracle, ties included") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> nd(2, 60);
  std::uniform_int_distribution<int> level(0, 6);  // few distinct scores, many ties
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = nd(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = trial % 2 ? level(rng) / 6.0 : std::uniform_real_distribution<double>(0, 1)(rng);
      y[i] = coin(rng) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(std::abs(auc(s, y) - testutil::pairwise_auc(s, y)) < 1e-12);
  }
}

TEST_CASE("auc basic facts") {
  const std::vector<int> y = {1, 0, 1, 0, 0, 1};
  CHECK(auc(std::vector<double>(6, 0.3), y) == 0.5);
  CHECK(auc(std::vector<double>{1, 0, 1, 0, 0, 1}, y) == 1.0);
  CHECK(auc(std::vector<double>{0, 1, 0, 1, 1, 0}, y) == 0.0);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ValidationError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), DimensionError);
}

TEST_CASE("auc is rank-based and label-symmetric") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = testutil::uniform_vector(rng, 40, -3.0, 3.0);
    std::vector<int> y(40), flipped(40);
    for (int i = 0; i < 40; ++i) {
      y[i] = (i % 3 == 0) ^ (s[i] > 0.5);
      flipped[i] = 1 - y[i];
    }
    std::vector<double> mono(40);
    for (int i = 0; i < 40; ++i) mono[i] = std::exp(2.0 * s[i]) + 7.0;
    CHECK(auc(s, y) == doctest::Approx(auc(mono, y)).epsilon(1e-15));
    CHECK(std::abs(auc(s, y) + auc(s, flipped) - 1.0) < 1e-12);
  }
}

TEST_CASE("untrained zero model scores exactly one half") {
  EmbeddingTable t = embed_gaussian(5, 3, 1);
  const ModelParams zero = zero_params(CellType::Gru, t, 4);
  Dataset data;
  std::mt19937_64 rng(3);
  for (int s = 0; s < 10; ++s) {
    InteractionSequence seq;
    seq.student = "s" + std::to_string(s);
    for (int k = 0; k < 6; ++k) seq.steps.push_back({std::size_t(rng() % 5), int(rng() % 2)});
    data.push_back(seq);
  }
  data[0].steps[1].correct = 1;
  data[0].steps[2].correct = 0;
  const Metrics m = evaluate(zero, data);
  CHECK(m.auc == 0.5);
  CHECK(m.steps == 50);
  CHECK(m.mean_loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("scored steps cover every prediction in student order") {
  EmbeddingTable t = embed_gaussian(4, 2, 7);
  const ModelParams p = init_params(CellType::Lstm, t, 3, 2);
  Dataset data = {testutil::make_sequence("b", {{0, 1}, {1, 0}, {2, 1}}),
                  testutil::make_sequence("a", {{3, 0}, {3, 1}}),
                  testutil::make_sequence("c", {{1, 1}, {0, 0}, {2, 0}, {1, 1}})};
  const auto steps = score_steps(p, data);
  REQUIRE(steps.size() == 2 + 1 + 3);
  CHECK(steps[0].student == "a");
  CHECK(steps[1].student == "b");
  CHECK(steps[1].step == 1);
  CHECK(steps[2].step == 2);
  const auto preds = forward_sequence(data[0], p);
  CHECK(steps[1].score == preds[0][1]);
  CHECK(steps[1].question == 1);
  CHECK(steps[1].label == 0);
  CHECK_THROWS_AS(evaluate(p, {}), ValidationError);
}

TEST_CASE("metrics from scores") {
  const std::vector<ScoredStep> oracle = {
      {"a", 1, 0, 1.0, 1}, {"a", 2, 1, 0.0, 0}, {"b", 1, 0, 1.0, 1}, {"b", 2, 2, 0.0, 0}};
  const Metrics m = metrics_from_steps(oracle);
  CHECK(m.auc == 1.0);
  CHECK(m.accuracy == 1.0);
  CHECK(m.steps == 4);
  CHECK(m.mean_loss == doctest::Approx(-std::log(1.0 - kProbabilityEpsilon)));
}

TEST_CASE("evaluate reports the relation term with a graph") {
  EmbeddingTable t = embed_gaussian(4, 2, 7);
  const ModelParams p = init_params(CellType::Rnn, t, 3, 2);
  const QuestionGraph g(4, {{0, 1, 1.0}, {2, 3, 0.5}});
  const Dataset data = {testutil::make_sequence("a", {{0, 1}, {1, 0}, {2, 1}, {3, 1}}),
                        testutil::make_sequence("b", {{3, 0}, {2, 1}, {0, 0}})};
  const Metrics m = evaluate(p, data, &g);
  double rel = 0.0;
  std::size_t n = 0;
  for (const auto& seq : data)
    for (const auto& pr : forward_sequence(seq, p)) {
      rel += loss_relation(pr, g);
      ++n;
    }
  CHECK(m.mean_relation == doctest::Approx(rel / n).epsilon(1e-14));
  CHECK(evaluate(p, data).mean_relation == 0.0);
}

TEST_CASE("metrics line and step dump") {
  Metrics m;
  m.auc = 0.75;
  m.accuracy = 0.5;
  m.mean_loss = 0.25;
  m.steps = 8;
  CHECK(format_metrics(m) == "auc=0.75 accuracy=0.5 loss=0.25 steps=8");

  testutil::TempDir dir("dump");
  const std::vector<ScoredStep> steps = {{"s1", 1, 4, 0.123456789012345, 1}, {"s2", 3, 0, 0.9, 0}};
  write_step_dump(dir / "d.tsv", steps);
  const auto back = read_step_dump(dir / "d.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].student == "s1");
  CHECK(back[0].score == steps[0].score);
  CHECK(back[1].step == 3);
  CHECK(back[1].label == 0);
}
