#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "dkts/errors.hpp"
#include "dkts/gembed.hpp"
#include "helpers.hpp"

using namespace dkts;

namespace {

QuestionGraph triangle() { return QuestionGraph(3, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}}); }

// Two 10-cliques, {0..9} and {10..19}, joined by the edge (9, 10).
QuestionGraph barbell() {
  std::vector<Edge> edges;
  for (std::size_t base : {0, 10})
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = i + 1; j < 10; ++j) edges.push_back({base + i, base + j, 1.0});
  edges.push_back({9, 10, 1.0});
  return QuestionGraph(20, std::move(edges));
}

struct Cosines {
  double intra = 0.0;
  double inter = 0.0;
};

Cosines clique_cosines(const EmbeddingTable& t) {
  double intra = 0.0, inter = 0.0;
  int ni = 0, nx = 0;
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = i + 1; j < 20; ++j) {
      const double c = cosine(t.row(i), t.row(j));
      if ((i < 10) == (j < 10)) {
        intra += c;
        ++ni;
      } else {
        inter += c;
        ++nx;
      }
    }
  return {intra / ni, inter / nx};
}

}  // namespace

TEST_CASE("gaussian table shape, determinism and moments") {
  const EmbeddingTable small = embed_gaussian(2, 3, 9);
  CHECK(small.rows() == 2);
  CHECK(small.dim() == 3);
  CHECK(small.method == EmbedMethod::Gaussian);
  CHECK(embed_gaussian(2, 3, 9).values == small.values);
  CHECK_FALSE(embed_gaussian(2, 3, 10).values == small.values);

  const EmbeddingTable big = embed_gaussian(1000, 100, 4);
  double mean = 0.0;
  for (double v : big.values.values()) mean += v;
  mean /= 1e5;
  double var = 0.0;
  for (double v : big.values.values()) var += (v - mean) * (v - mean);
  var /= 1e5 - 1;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("walks start at their node and follow edges") {
  std::mt19937_64 rng(2);
  const QuestionGraph g = testutil::random_graph(rng, 25, 0.2);
  WalkConfig cfg;
  cfg.walk_length = 12;
  cfg.walks_per_node = 3;
  cfg.return_p = 0.5;
  cfg.inout_q = 2.0;
  const WalkCorpus corpus = random_walks(g, cfg, 17);
  REQUIRE(corpus.walks.size() == 75);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t v = 0; v < 25; ++v) {
      const auto& w = corpus.walks[r * 25 + v];
      CHECK(w.front() == v);
      for (std::size_t k = 1; k < w.size(); ++k) CHECK(g.has_edge(w[k - 1], w[k]));
    }
  const WalkCorpus again = random_walks(g, cfg, 17);
  CHECK(again.walks == corpus.walks);
}

TEST_CASE("isolated node walks have length one") {
  const QuestionGraph g(3, {{0, 1, 1.0}});
  WalkConfig cfg;
  const WalkCorpus corpus = random_walks(g, cfg, 1);
  for (const auto& w : corpus.walks)
    if (w.front() == 2) CHECK(w == std::vector<std::size_t>{2});
}

TEST_CASE("unbiased walks on a triangle choose each neighbour half the time") {
  WalkConfig cfg;
  cfg.walk_length = 101;
  cfg.walks_per_node = 334;
  const WalkCorpus corpus = random_walks(triangle(), cfg, 5);
  // counts[from][to]
  double counts[3][3] = {};
  std::size_t steps = 0;
  for (const auto& w : corpus.walks)
    for (std::size_t k = 1; k < w.size(); ++k) {
      counts[w[k - 1]][w[k]] += 1.0;
      ++steps;
    }
  CHECK(steps >= 100000);
  for (int i = 0; i < 3; ++i) {
    const double total = counts[i][0] + counts[i][1] + counts[i][2];
    CHECK(counts[i][i] == 0.0);
    for (int j = 0; j < 3; ++j)
      if (j != i) CHECK(std::abs(counts[i][j] / total - 0.5) < 0.02);
  }
}

TEST_CASE("return parameter biases backtracking") {
  // Path 0-1-2: from 1 having come from 0, the walk returns with weight 1/p
  // and moves on to 2 with weight 1/q (2 is not adjacent to 0).
  const QuestionGraph path(3, {{0, 1, 1.0}, {1, 2, 1.0}});
  WalkConfig cfg;
  cfg.walk_length = 3;
  cfg.walks_per_node = 20000;
  cfg.return_p = 0.25;  // return weight 4
  cfg.inout_q = 1.0;    // outward weight 1
  const WalkCorpus corpus = random_walks(path, cfg, 3);
  double back = 0.0, total = 0.0;
  for (const auto& w : corpus.walks)
    if (w[0] == 0) {
      total += 1.0;
      back += w[2] == 0 ? 1.0 : 0.0;
    }
  CHECK(std::abs(back / total - 0.8) < 0.02);
}

TEST_CASE("window pairs enumerate every position within the window") {
  const std::vector<std::size_t> walk = {0, 1, 2};  // a, b, c
  const auto pairs = window_pairs(walk, 2);
  std::multiset<NodePair> got(pairs.begin(), pairs.end());
  const std::multiset<NodePair> want = {{1, 0}, {1, 2}, {0, 1}, {0, 2}, {2, 1}, {2, 0}};
  CHECK(got == want);
  CHECK(window_pairs(walk, 1).size() == 4);
}

TEST_CASE("unbiased walk pairs match a first-order random walk") {
  // Oracle: a plain first-order walk generated in the test; with p = q = 1
  // the second-order walk has the same law, so pair frequencies agree.
  const QuestionGraph g(5, {{0, 1, 1.0}, {1, 2, 2.0}, {2, 3, 1.0}, {3, 4, 1.0}, {1, 3, 0.5}, {0, 4, 1.0}});
  WalkConfig cfg;
  cfg.walk_length = 10;
  cfg.walks_per_node = 20000;  // 10^5 walks
  const WalkCorpus corpus = random_walks(g, cfg, 12);
  std::map<NodePair, double> got, want;
  double ng = 0.0, nw = 0.0;
  for (const auto& p : window_pairs(corpus, 2)) {
    got[p] += 1.0;
    ng += 1.0;
  }
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t r = 0; r < cfg.walks_per_node; ++r)
    for (std::size_t v = 0; v < 5; ++v) {
      std::vector<std::size_t> walk = {v};
      while (walk.size() < cfg.walk_length) {
        const auto nb = g.neighbours(walk.back());
        const auto wt = g.neighbour_weights(walk.back());
        double total = 0.0;
        for (double w : wt) total += w;
        double x = u(rng) * total;
        std::size_t k = 0;
        while (k + 1 < nb.size() && x >= wt[k]) x -= wt[k++];
        walk.push_back(nb[k]);
      }
      for (const auto& p : window_pairs(walk, 2)) {
        want[p] += 1.0;
        nw += 1.0;
      }
    }
  for (const auto& [pair, count] : want) {
    CAPTURE(pair.first);
    CAPTURE(pair.second);
    CHECK(std::abs(got[pair] / ng - count / nw) < 0.005);
  }
}

TEST_CASE("sgns positive loss") {
  CHECK(sgns_positive_loss(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(sgns_positive_loss(50.0) < 1e-20);
  CHECK(sgns_positive_loss(800.0) == 0.0);
  CHECK(std::isfinite(sgns_positive_loss(-800.0)));
}

TEST_CASE("sgns rejects an empty pair stream") {
  SgnsConfig cfg;
  CHECK_THROWS_AS(sgns_train({}, 4, cfg, 1), ValidationError);
}

TEST_CASE("LINE and Node2Vec need edges") {
  const QuestionGraph empty(5, {});
  SgnsConfig cfg;
  CHECK_THROWS_AS(embed_line(empty, 1, cfg, 1), ValidationError);
  CHECK_THROWS_AS(embed_line(empty, 2, cfg, 1), ValidationError);
  CHECK_THROWS_AS(embed_node2vec(empty, WalkConfig{}, cfg, 1), ValidationError);
  CHECK_THROWS_AS(embed_line(triangle(), 3, cfg, 1), ValidationError);
}

TEST_CASE("single edge first-order LINE pulls the endpoints together") {
  const QuestionGraph g(2, {{0, 1, 1.0}});
  SgnsConfig cfg;
  cfg.dim = 8;
  const EmbeddingTable t = embed_line(g, 1, cfg, 3);
  CHECK(cosine(t.row(0), t.row(1)) > 0.0);
}

TEST_CASE("graph embeddings separate the two cliques of a barbell") {
  const QuestionGraph g = barbell();
  SgnsConfig cfg;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CAPTURE(seed);
    for (int order : {1, 2}) {
      const Cosines c = clique_cosines(embed_line(g, order, cfg, seed));
      CHECK(c.intra > c.inter);
    }
    const Cosines n = clique_cosines(embed_node2vec(g, WalkConfig{}, cfg, seed));
    CHECK(n.intra > n.inter);
  }
}

TEST_CASE("embeddings are deterministic, finite and bounded") {
  std::mt19937_64 rng(6);
  const QuestionGraph g = testutil::random_graph(rng, 30, 0.2);
  SgnsConfig cfg;
  const EmbeddingTable a = embed_node2vec(g, WalkConfig{}, cfg, 8);
  CHECK(embed_node2vec(g, WalkConfig{}, cfg, 8).values == a.values);
  const EmbeddingTable l = embed_line(g, 1, cfg, 8);
  CHECK(embed_line(g, 1, cfg, 8).values == l.values);
  for (const EmbeddingTable* t : {&a, &l}) {
    CHECK(t->values.all_finite());
    for (std::size_t q = 0; q < t->rows(); ++q) {
      double norm = 0.0;
      for (double v : t->row(q)) norm += v * v;
      CHECK(std::sqrt(norm) <= 10.0 * std::sqrt(double(cfg.dim)));
    }
  }
}

TEST_CASE("embedding files round trip exactly") {
  testutil::TempDir dir("gembed");
  const EmbeddingTable t = embed_line(triangle(), 2, SgnsConfig{}, 42);
  write_embedding(dir / "e.txt", t);
  const EmbeddingTable back = read_embedding(dir / "e.txt");
  CHECK(back.method == EmbedMethod::Line2);
  CHECK(back.seed == 42);
  CHECK(back.values == t.values);

  CHECK(parse_method("line") == EmbedMethod::Line1);
  CHECK(parse_method("node2vec") == EmbedMethod::Node2Vec);
  CHECK_THROWS_AS(parse_method("deepwalk"), ValidationError);
}
