#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dkts/qgraph.hpp"
#include "dkts/tensor.hpp"

namespace dkts {

enum class EmbedMethod { Gaussian, Line1, Line2, Node2Vec };

std::string method_name(EmbedMethod m);
EmbedMethod parse_method(const std::string& name);

/// Q x d question vectors plus where they came from.
struct EmbeddingTable {
  EmbedMethod method = EmbedMethod::Gaussian;
  std::uint64_t seed = 0;
  num::Tensor values;  // shape {Q, d}

  std::size_t rows() const { return values.rank() == 2 ? values.shape()[0] : 0; }
  std::size_t dim() const { return values.rank() == 2 ? values.shape()[1] : 0; }
  std::span<const double> row(std::size_t q) const { return values.values().subspan(q * dim(), dim()); }
};

/// Skip-gram with negative sampling hyperparameters, shared by LINE and
/// Node2Vec training.
struct SgnsConfig {
  std::size_t dim = 32;
  std::size_t epochs = 5;
  double learning_rate = 0.025;  // decays linearly to 1e-4 of its start value
  std::size_t negatives = 5;
  std::size_t window = 5;        // node2vec only
  double noise_exponent = 0.75;
  std::size_t line_samples_per_edge = 100;  // LINE edge samples per epoch, per edge

  void validate() const;
};

struct WalkConfig {
  double return_p = 1.0;
  double inout_q = 1.0;
  std::size_t walk_length = 20;
  std::size_t walks_per_node = 10;

  void validate() const;
};

struct WalkCorpus {
  std::vector<std::vector<std::size_t>> walks;
  WalkConfig config;
};

using NodePair = std::pair<std::size_t, std::size_t>;

EmbeddingTable embed_gaussian(std::size_t question_count, std::size_t dim, std::uint64_t seed);

/// Second-order biased walks. Walk r of node v is generated from its own
/// stream seeded by (seed, r, v); corpus order is round-major, then node.
/// A step from `cur` (having come from `prev`) weights each neighbour x by
/// w(cur,x) times 1/p if x == prev, 1 if x neighbours prev, 1/q otherwise.
WalkCorpus random_walks(const QuestionGraph& g, const WalkConfig& cfg, std::uint64_t seed);

/// (center, context) pairs for every position and every other position
/// within `window` steps, in walk order.
std::vector<NodePair> window_pairs(std::span<const std::size_t> walk, std::size_t window);
std::vector<NodePair> window_pairs(const WalkCorpus& corpus, std::size_t window);

/// -log sigma(score): the loss of one positive (center, context) pair.
double sgns_positive_loss(double score);

/// Trains center and context vectors on the pair stream and returns the
/// center vectors. Negatives come from the context-frequency unigram
/// distribution raised to `noise_exponent`.
EmbeddingTable sgns_train(std::span<const NodePair> pairs, std::size_t question_count, const SgnsConfig& cfg,
                          std::uint64_t seed);

/// LINE with weight-proportional edge sampling. Order 1 scores u_i . u_j
/// with one vector per node; order 2 scores u_i . v_j against separate
/// context vectors.
EmbeddingTable embed_line(const QuestionGraph& g, int order, const SgnsConfig& cfg, std::uint64_t seed);

EmbeddingTable embed_node2vec(const QuestionGraph& g, const WalkConfig& walk, const SgnsConfig& cfg,
                              std::uint64_t seed);

double cosine(std::span<const double> a, std::span<const double> b);

/// Header `Q d method seed`, then Q rows `question_id v1 ... vd`.
/// Values are written in shortest round-trip form.
void write_embedding(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embedding(const std::filesystem::path& path);

}  // namespace dkts
