#include <doctest.h>

#include <cmath>
#include <random>

#include "dkts/errors.hpp"
#include "dkts/evaluator.hpp"
#include "dkts/graph.hpp"
#include "dkts/trainer.hpp"
#include "helpers.hpp"

using namespace dkts;
using num::Tensor;

namespace {

using Vec = std::vector<double>;

EmbeddingTable random_table(std::size_t q, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EmbeddingTable t;
  t.values = Tensor({q, d}, testutil::uniform_vector(rng, q * d, -1.0, 1.0));
  return t;
}

InteractionSequence random_sequence(std::mt19937_64& rng, const std::string& id, std::size_t n, std::size_t q) {
  std::uniform_int_distribution<std::size_t> qd(0, q - 1);
  std::bernoulli_distribution ad(0.6);
  InteractionSequence s;
  s.student = id;
  for (std::size_t t = 0; t < n; ++t) s.steps.push_back({qd(rng), ad(rng) ? 1 : 0});
  return s;
}

Dataset random_dataset(std::uint64_t seed, std::size_t students, std::size_t q, std::size_t lo, std::size_t hi) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> nd(lo, hi);
  Dataset d;
  for (std::size_t s = 0; s < students; ++s) d.push_back(random_sequence(rng, std::to_string(s), nd(rng), q));
  return d;
}

// Skill-structured toy data: questions 0..2 share one skill, 3..5 another;
// each student masters one of the two.
Dataset skill_dataset(std::uint64_t seed, std::size_t students) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> qd(0, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset d;
  for (std::size_t s = 0; s < students; ++s) {
    const bool first = u(rng) < 0.5;
    InteractionSequence seq;
    seq.student = std::to_string(s);
    for (int t = 0; t < 15; ++t) {
      const std::size_t q = qd(rng);
      const double p = (q < 3) == first ? 0.85 : 0.25;
      seq.steps.push_back({q, u(rng) < p ? 1 : 0});
    }
    d.push_back(seq);
  }
  return d;
}

QuestionGraph two_cliques() {
  std::vector<Edge> e;
  for (std::size_t b : {0, 3})
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = i + 1; j < 3; ++j) e.push_back({b + i, b + j, 1.0});
  return QuestionGraph(6, e);
}

}  // namespace

TEST_CASE("prediction loss examples") {
  const Vec p = {0.5, 0.9, 0.2};
  CHECK(loss_prediction(p, {0, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(loss_prediction(p, {0, 0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(loss_prediction(p, {1, 1}) == doctest::Approx(0.105361).epsilon(1e-6));
  CHECK(loss_prediction(p, {2, 0}) == doctest::Approx(-std::log(0.8)).epsilon(1e-15));
  // Clamped at 1e-7, so the loss stays finite at the boundary.
  const Vec edge = {1.0, 0.0};
  CHECK(loss_prediction(edge, {0, 0}) == doctest::Approx(-std::log(kProbabilityEpsilon)).epsilon(1e-6));
  CHECK(loss_prediction(edge, {1, 1}) == doctest::Approx(-std::log(kProbabilityEpsilon)).epsilon(1e-6));
}

TEST_CASE("relation loss examples") {
  const QuestionGraph edge(2, {{0, 1, 1.0}});
  CHECK(loss_relation(Vec{1.0, 0.0}, edge) == 0.5);
  CHECK(loss_relation(Vec{0.3, 0.3}, edge) == 0.0);
  std::mt19937_64 rng(20);
  const QuestionGraph g = testutil::random_graph(rng, 20, 0.3);
  const Vec p = testutil::uniform_vector(rng, 20, 0.0, 1.0);
  const auto Lp = testutil::dense_multiply(testutil::dense_laplacian(g), p);
  double dense = 0.0;
  for (std::size_t i = 0; i < 20; ++i) dense += 0.5 * p[i] * Lp[i];
  CHECK(std::abs(loss_relation(p, g) - dense) < 1e-12);
  CHECK_THROWS_AS(loss_relation(Vec{0.1}, g), DimensionError);
}

TEST_CASE("sequence loss composition") {
  std::mt19937_64 rng(4);
  const InteractionSequence seq = random_sequence(rng, "a", 9, 6);
  const QuestionGraph g = two_cliques();
  const ModelParams p = init_params(CellType::Gru, random_table(6, 3, 1), 5, 2);

  const LossBreakdown zero_alpha = sequence_loss(seq, p, &g, 0.0);
  CHECK(zero_alpha.total == zero_alpha.prediction);

  const LossBreakdown l = sequence_loss(seq, p, &g, 0.7);
  CHECK(std::abs(l.total - (l.prediction + 0.7 * l.relation)) < 1e-12);

  // Independent recomputation from the eager predictions.
  const auto preds = forward_sequence(seq, p);
  double lp = 0.0, lr = 0.0;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    const double sel = std::clamp(preds[t][seq.steps[t + 1].question], 1e-7, 1.0 - 1e-7);
    lp += seq.steps[t + 1].correct ? -std::log(sel) : -std::log(1.0 - sel);
    for (const auto& e : g.edges()) lr += 0.5 * e.weight * std::pow(preds[t][e.i] - preds[t][e.j], 2);
  }
  lp /= preds.size();
  lr /= preds.size();
  CHECK(l.prediction == doctest::Approx(lp).epsilon(1e-13));
  CHECK(l.relation == doctest::Approx(lr).epsilon(1e-13));

  const ModelParams zero = zero_params(CellType::Lstm, random_table(6, 3, 1), 5);
  CHECK(sequence_loss(seq, zero, nullptr, 0.3).prediction == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(sequence_loss(seq, p, nullptr, 0.3).relation == 0.0);
  CHECK_THROWS_AS(sequence_loss(testutil::make_sequence("x", {{0, 1}}), p, &g, 0.1), ValidationError);
}

TEST_CASE("recorded loss equals the eager loss") {
  std::mt19937_64 rng(6);
  const InteractionSequence seq = random_sequence(rng, "a", 8, 6);
  const QuestionGraph g = two_cliques();
  for (CellType cell : {CellType::Rnn, CellType::Lstm, CellType::Gru}) {
    ModelParams p = init_params(cell, random_table(6, 3, 2), 4, 3);
    num::CompGraph graph;
    const RecordedLoss rl = record_loss(graph, seq.steps, p, &g, 0.4);
    graph.eval_forward();
    const LossBreakdown eager = sequence_loss(seq, p, &g, 0.4);
    CHECK(graph.value(rl.prediction).item() == doctest::Approx(eager.prediction).epsilon(1e-13));
    CHECK(graph.value(rl.relation).item() == doctest::Approx(eager.relation).epsilon(1e-13));
    CHECK(graph.value(rl.total).item() == doctest::Approx(eager.total).epsilon(1e-13));
  }
}

TEST_CASE("full loss gradients match central differences on a tiny model") {
  std::mt19937_64 rng(8);
  const QuestionGraph g = testutil::random_graph(rng, 5, 0.6);
  const InteractionSequence seq = random_sequence(rng, "t", 7, 5);
  for (CellType cell : {CellType::Rnn, CellType::Lstm, CellType::Gru}) {
    for (bool train_embedding : {false, true}) {
      CAPTURE(cell_name(cell));
      CAPTURE(train_embedding);
      ModelParams p = init_params(cell, random_table(5, 4, 3), 6, 4);
      p.train_embedding = train_embedding;
      num::CompGraph graph;
      const RecordedLoss rl = record_loss(graph, seq.steps, p, &g, 0.5);
      graph.eval_forward();
      const auto report = num::grad_check(graph, rl.total, 1e-4);
      CHECK(report.passed);
      CHECK(report.worst < 1e-4);
      CHECK(report.max_rel_error.count("E") == (train_embedding ? 1u : 0u));
    }
  }
}

TEST_CASE("truncation windows cover every prediction once") {
  std::mt19937_64 rng(1);
  for (std::size_t n : {2, 3, 7, 10, 11, 25}) {
    const InteractionSequence seq = random_sequence(rng, "w", n, 4);
    for (std::size_t w : {1, 3, 5, 100}) {
      const auto windows = truncation_windows(seq, w);
      std::size_t targets = 0;
      std::size_t next = 1;
      for (const auto& win : windows) {
        CHECK(win.size() >= 2);
        CHECK(win.size() <= w + 1);
        // The window's first interaction is the previous window's last.
        CHECK(win.data() == seq.steps.data() + next - 1);
        targets += win.size() - 1;
        next += win.size() - 1;
      }
      CHECK(targets == n - 1);
    }
  }
  const InteractionSequence s = random_sequence(rng, "w", 5, 3);
  CHECK_THROWS_AS(truncation_windows(s, 0), ValidationError);
}

TEST_CASE("zero epochs return the parameters unchanged") {
  const Dataset train = random_dataset(1, 6, 5, 3, 8);
  const ModelParams p = init_params(CellType::Lstm, random_table(5, 3, 1), 4, 9);
  TrainConfig cfg;
  cfg.epochs = 0;
  const FitResult fr = fit(train, {}, p, nullptr, cfg);
  CHECK(fr.history.empty());
  CHECK(fr.best_epoch == 0);
  const auto a = p.all_tensors();
  const auto b = fr.params.all_tensors();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
}

TEST_CASE("a single short sequence is memorised") {
  const InteractionSequence seq = testutil::make_sequence("m", {{0, 1}, {1, 0}, {2, 1}, {1, 1}, {3, 0}, {0, 1}});
  TrainConfig cfg;
  cfg.alpha = 0.0;
  cfg.epochs = 200;
  cfg.learning_rate = 0.01;
  const FitResult fr = fit({seq}, {}, init_params(CellType::Lstm, random_table(4, 3, 2), 16, 3), nullptr, cfg);
  REQUIRE(fr.history.size() == 200);
  CHECK(fr.history.back().train.prediction < 0.1);
  CHECK(sequence_loss(seq, fr.params, nullptr, 0.0).prediction < 0.1);
}

TEST_CASE("training loss falls over 50 epochs at the default learning rate") {
  const Dataset train = random_dataset(3, 8, 5, 5, 12);
  TrainConfig cfg;
  cfg.alpha = 0.0;
  cfg.epochs = 50;
  for (CellType cell : {CellType::Rnn, CellType::Lstm, CellType::Gru}) {
    const FitResult fr = fit(train, {}, init_params(cell, random_table(5, 3, 5), 8, 6), nullptr, cfg);
    CHECK(fr.history.back().train.total < fr.history.front().train.total);
  }
}

TEST_CASE("fit is deterministic under a fixed seed") {
  const Dataset train = random_dataset(5, 12, 6, 4, 30);
  const Dataset val = random_dataset(6, 4, 6, 4, 10);
  const QuestionGraph g = two_cliques();
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.max_seq_len = 7;
  const ModelParams init = init_params(CellType::Gru, random_table(6, 3, 7), 5, 8);
  const FitResult a = fit(train, val, init, &g, cfg);
  const FitResult b = fit(train, val, init, &g, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train.total == b.history[e].train.total);
    CHECK(a.history[e].train.relation == b.history[e].train.relation);
    CHECK(a.history[e].validation_auc == b.history[e].validation_auc);
  }
  CHECK(checkpoint_text(a.params, "") == checkpoint_text(b.params, ""));
  cfg.seed = 2;
  const FitResult c = fit(train, val, init, &g, cfg);
  CHECK(c.history.back().train.total != a.history.back().train.total);
}

TEST_CASE("alpha zero reproduces the regulariser-free run") {
  const Dataset train = random_dataset(9, 10, 6, 4, 20);
  const Dataset val = random_dataset(10, 4, 6, 4, 10);
  const QuestionGraph g = two_cliques();
  TrainConfig cfg;
  cfg.alpha = 0.0;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  for (CellType cell : {CellType::Rnn, CellType::Lstm, CellType::Gru}) {
    const ModelParams init = init_params(cell, random_table(6, 3, 11), 6, 12);
    const FitResult with_graph = fit(train, val, init, &g, cfg);
    const FitResult without = fit(train, val, init, nullptr, cfg);
    REQUIRE(with_graph.history.size() == without.history.size());
    for (std::size_t e = 0; e < without.history.size(); ++e) {
      CHECK(std::abs(with_graph.history[e].train.prediction - without.history[e].train.prediction) <= 1e-12);
      CHECK(std::abs(with_graph.history[e].train.total - without.history[e].train.total) <= 1e-12);
      CHECK(without.history[e].train.relation == 0.0);
    }
  }
}

TEST_CASE("a larger alpha gives smoother held-out predictions") {
  const QuestionGraph g = two_cliques();
  double rel0 = 0.0, rel1 = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset train = skill_dataset(seed, 40);
    const Dataset test = skill_dataset(100 + seed, 20);
    const ModelParams init = init_params(CellType::Gru, random_table(6, 3, seed), 8, seed);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.seed = seed;
    cfg.learning_rate = 0.01;
    cfg.alpha = 0.0;
    rel0 += evaluate(fit(train, {}, init, &g, cfg).params, test, &g).mean_relation;
    cfg.alpha = 1.0;
    rel1 += evaluate(fit(train, {}, init, &g, cfg).params, test, &g).mean_relation;
  }
  CHECK(rel1 < rel0);
}

TEST_CASE("early stopping keeps the best validation epoch") {
  const Dataset train = random_dataset(12, 10, 5, 5, 15);
  const Dataset val = random_dataset(13, 5, 5, 5, 15);
  TrainConfig cfg;
  cfg.alpha = 0.0;
  cfg.epochs = 40;
  cfg.learning_rate = 0.02;
  cfg.patience = 2;
  const FitResult fr = fit(train, val, init_params(CellType::Rnn, random_table(5, 2, 3), 6, 3), nullptr, cfg);
  REQUIRE(fr.best_epoch >= 1);
  double best = -1.0;
  for (const auto& r : fr.history) best = std::max(best, r.validation_auc);
  CHECK(fr.history[fr.best_epoch - 1].validation_auc == best);
  CHECK(evaluate(fr.params, val).auc == best);
  CHECK(fr.history.size() <= fr.best_epoch + cfg.patience);
}

TEST_CASE("fit rejects bad inputs") {
  const ModelParams p = init_params(CellType::Rnn, random_table(5, 2, 3), 4, 3);
  TrainConfig cfg;
  CHECK_THROWS_AS(fit({}, {}, p, nullptr, cfg), ValidationError);
  CHECK_THROWS_AS(fit({testutil::make_sequence("x", {{0, 1}})}, {}, p, nullptr, cfg), ValidationError);
  const QuestionGraph wrong(4, {{0, 1, 1.0}});
  CHECK_THROWS_AS(fit(random_dataset(1, 3, 5, 3, 5), {}, p, &wrong, cfg), ValidationError);
  ModelParams bad = p;
  bad.head_b[0] = std::nan("");
  CHECK_THROWS_AS(fit(random_dataset(1, 3, 5, 3, 5), {}, bad, nullptr, cfg), NumericError);
}

TEST_CASE("sgd optimizer also trains") {
  const Dataset train = random_dataset(3, 8, 5, 5, 12);
  TrainConfig cfg;
  cfg.alpha = 0.0;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 0.5;
  cfg.epochs = 30;
  const FitResult fr = fit(train, {}, init_params(CellType::Gru, random_table(5, 3, 5), 8, 6), nullptr, cfg);
  CHECK(fr.history.back().train.total < fr.history.front().train.total);
}

TEST_CASE("training config keys") {
  TrainConfig cfg;
  CHECK(cfg.alpha == 0.1);
  CHECK(cfg.learning_rate == 1e-3);
  CHECK(cfg.optimizer == OptimizerKind::Adam);
  CHECK(cfg.clip_norm == 5.0);
  CHECK(cfg.max_seq_len == 100);
  cfg.set("alpha", "0.5");
  cfg.set("optimizer", "sgd");
  cfg.set("train_embedding", "true");
  CHECK(cfg.alpha == 0.5);
  CHECK(cfg.optimizer == OptimizerKind::Sgd);
  CHECK(cfg.train_embedding);
  CHECK_THROWS_AS(cfg.set("alpha", "lots"), ValidationError);
  CHECK_THROWS_AS(cfg.set("momentum", "0.9"), ValidationError);
  TrainConfig neg;
  neg.alpha = -1.0;
  CHECK_THROWS_AS(neg.validate(), ValidationError);
  TrainConfig other;
  CHECK(other.hash() != cfg.hash());
  CHECK(TrainConfig{}.hash() == other.hash());
  CHECK(cfg.to_kv().find("alpha=0.5\n") != std::string::npos);
}

TEST_CASE("key=value parsing") {
  const auto kv = parse_kv("# comment\n alpha = 0.2\n\nepochs=3\n");
  CHECK(kv.size() == 2);
  CHECK(kv.at("alpha") == "0.2");
  CHECK(kv.at("epochs") == "3");
  CHECK_THROWS_AS(parse_kv("alpha 0.2\n"), ParseError);
  CHECK_THROWS_AS(parse_kv("=3\n"), ParseError);
}

TEST_CASE("epoch log line") {
  EpochRecord r;
  r.epoch = 3;
  r.train = {0.5, 0.25, 0.525};
  r.validation_auc = 0.75;
  r.seconds = 1.5;
  CHECK(format_epoch(r) == "3\t0.5\t0.25\t0.525\t0.75\t1.5");
}
