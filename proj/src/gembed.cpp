#include "dkts/gembed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "dkts/errors.hpp"
#include "dkts/rng.hpp"
#include "dkts/textio.hpp"

namespace dkts {

namespace {

enum StreamTag : std::uint64_t { kWalkStream = 1, kSgnsStream = 2, kLineStream = 3, kInitStream = 4 };

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Index i with cdf[i-1] <= u*total < cdf[i], by binary search.
std::size_t sample_cdf(const std::vector<double>& cdf, Rng& rng) {
  const double u = uniform01(rng) * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<double> cumulative(const std::vector<double>& weights) {
  std::vector<double> cdf(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cdf.begin());
  return cdf;
}

std::vector<double> noise_cdf(const std::vector<double>& counts, double exponent) {
  std::vector<double> w(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) w[i] = counts[i] > 0 ? std::pow(counts[i], exponent) : 0.0;
  return cumulative(w);
}

void init_uniform(num::Tensor& t, std::size_t dim, Rng& rng) {
  const double half = 0.5 / static_cast<double>(dim);
  for (double& v : t.values()) v = (uniform01(rng) * 2.0 - 1.0) * half;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

/// One negative-sampling update. `ctx` may alias `centers` (LINE order 1).
/// Returns the positive-pair loss before the update.
double sgns_step(num::Tensor& centers, num::Tensor& ctx, std::size_t center, std::size_t context,
                 const std::vector<double>& noise, std::size_t negatives, double lr, Rng& rng,
                 std::vector<double>& scratch) {
  const std::size_t d = centers.shape()[1];
  double* u = centers.data() + center * d;
  std::fill(scratch.begin(), scratch.end(), 0.0);
  double pos_loss = 0.0;
  for (std::size_t k = 0; k <= negatives; ++k) {
    std::size_t target = context;
    double label = 1.0;
    if (k > 0) {
      target = sample_cdf(noise, rng);
      if (target == context) continue;
      label = 0.0;
    }
    double* v = ctx.data() + target * d;
    const double score = dot(u, v, d);
    if (k == 0) pos_loss = sgns_positive_loss(score);
    const double g = (label - sigmoid(score)) * lr;
    for (std::size_t i = 0; i < d; ++i) scratch[i] += g * v[i];
    for (std::size_t i = 0; i < d; ++i) v[i] += g * u[i];
  }
  for (std::size_t i = 0; i < d; ++i) u[i] += scratch[i];
  return pos_loss;
}

double decayed_rate(double lr0, std::size_t step, std::size_t total) {
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(total, 1));
  return lr0 * std::max(1e-4, frac);
}

}  // namespace

std::string method_name(EmbedMethod m) {
  switch (m) {
    case EmbedMethod::Gaussian: return "gaussian";
    case EmbedMethod::Line1: return "line1";
    case EmbedMethod::Line2: return "line2";
    case EmbedMethod::Node2Vec: return "node2vec";
  }
  return "?";
}

EmbedMethod parse_method(const std::string& name) {
  if (name == "gaussian") return EmbedMethod::Gaussian;
  if (name == "line1" || name == "line") return EmbedMethod::Line1;
  if (name == "line2") return EmbedMethod::Line2;
  if (name == "node2vec") return EmbedMethod::Node2Vec;
  throw ValidationError("unknown embedding method '" + name + "' (expected gaussian, line1, line2 or node2vec)");
}

void SgnsConfig::validate() const {
  if (dim < 1) throw ValidationError("embedding dim must be >= 1");
  if (negatives < 1) throw ValidationError("negative samples must be >= 1");
  if (window < 1) throw ValidationError("context window must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("embedding learning rate must be > 0");
}

void WalkConfig::validate() const {
  if (walk_length < 1) throw ValidationError("walk length must be >= 1");
  if (!(return_p > 0.0) || !(inout_q > 0.0)) throw ValidationError("walk parameters p and q must be > 0");
}

EmbeddingTable embed_gaussian(std::size_t question_count, std::size_t dim, std::uint64_t seed) {
  if (question_count < 1 || dim < 1) throw ValidationError("gaussian embedding needs Q >= 1 and d >= 1");
  EmbeddingTable t{EmbedMethod::Gaussian, seed, num::Tensor({question_count, dim})};
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : t.values.values()) v = normal(rng);
  return t;
}

WalkCorpus random_walks(const QuestionGraph& g, const WalkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  WalkCorpus corpus{{}, cfg};
  const std::size_t q = g.question_count();
  corpus.walks.reserve(q * cfg.walks_per_node);
  std::vector<double> weights;
  for (std::size_t r = 0; r < cfg.walks_per_node; ++r) {
    for (std::size_t start = 0; start < q; ++start) {
      Rng rng(derive_seed(seed, {kWalkStream, r, start}));
      std::vector<std::size_t> walk{start};
      walk.reserve(cfg.walk_length);
      while (walk.size() < cfg.walk_length) {
        const std::size_t cur = walk.back();
        const auto nbrs = g.neighbours(cur);
        if (nbrs.empty()) break;
        const auto w = g.neighbour_weights(cur);
        weights.assign(w.begin(), w.end());
        if (walk.size() > 1) {
          const std::size_t prev = walk[walk.size() - 2];
          for (std::size_t k = 0; k < nbrs.size(); ++k) {
            if (nbrs[k] == prev) weights[k] /= cfg.return_p;
            else if (!g.has_edge(prev, nbrs[k])) weights[k] /= cfg.inout_q;
          }
        }
        std::partial_sum(weights.begin(), weights.end(), weights.begin());
        walk.push_back(nbrs[sample_cdf(weights, rng)]);
      }
      corpus.walks.push_back(std::move(walk));
    }
  }
  return corpus;
}

std::vector<NodePair> window_pairs(std::span<const std::size_t> walk, std::size_t window) {
  std::vector<NodePair> pairs;
  for (std::size_t i = 0; i < walk.size(); ++i) {
    const std::size_t lo = i >= window ? i - window : 0;
    const std::size_t hi = std::min(walk.size() - 1, i + window);
    for (std::size_t j = lo; j <= hi; ++j)
      if (j != i) pairs.emplace_back(walk[i], walk[j]);
  }
  return pairs;
}

std::vector<NodePair> window_pairs(const WalkCorpus& corpus, std::size_t window) {
  std::vector<NodePair> all;
  for (const auto& w : corpus.walks) {
    auto p = window_pairs(std::span<const std::size_t>(w), window);
    all.insert(all.end(), p.begin(), p.end());
  }
  return all;
}

double sgns_positive_loss(double score) {
  // -log sigma(s) = log(1 + e^-s), stable for both signs.
  return score >= 0 ? std::log1p(std::exp(-score)) : -score + std::log1p(std::exp(score));
}

EmbeddingTable sgns_train(std::span<const NodePair> pairs, std::size_t question_count, const SgnsConfig& cfg,
                          std::uint64_t seed) {
  cfg.validate();
  if (pairs.empty()) throw ValidationError("sgns_train needs at least one (center, context) pair");
  std::vector<double> counts(question_count, 0.0);
  for (const auto& [c, x] : pairs) {
    if (c >= question_count || x >= question_count) throw IndexError("pair node id outside " + std::to_string(question_count) + " nodes");
    counts[x] += 1.0;
  }
  const auto noise = noise_cdf(counts, cfg.noise_exponent);

  Rng rng(derive_seed(seed, {kSgnsStream}));
  num::Tensor centers({question_count, cfg.dim});
  num::Tensor contexts({question_count, cfg.dim});
  init_uniform(centers, cfg.dim, rng);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scratch(cfg.dim);
  const std::size_t total = cfg.epochs * pairs.size();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const double lr = decayed_rate(cfg.learning_rate, step++, total);
      sgns_step(centers, contexts, pairs[idx].first, pairs[idx].second, noise, cfg.negatives, lr, rng, scratch);
    }
  }
  return EmbeddingTable{EmbedMethod::Node2Vec, seed, std::move(centers)};
}

EmbeddingTable embed_line(const QuestionGraph& g, int order, const SgnsConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (order != 1 && order != 2) throw ValidationError("LINE order must be 1 or 2");
  if (g.edge_count() == 0) throw ValidationError("LINE needs a graph with at least one edge");
  const std::size_t q = g.question_count();

  std::vector<double> edge_w;
  for (const Edge& e : g.edges()) edge_w.push_back(e.weight);
  const auto edge_cdf = cumulative(edge_w);
  std::vector<double> degrees(q);
  for (std::size_t i = 0; i < q; ++i) degrees[i] = g.degree(i);
  const auto noise = noise_cdf(degrees, cfg.noise_exponent);

  Rng rng(derive_seed(seed, {kLineStream, static_cast<std::uint64_t>(order)}));
  num::Tensor vertex({q, cfg.dim});
  num::Tensor context({q, cfg.dim});
  init_uniform(vertex, cfg.dim, rng);
  num::Tensor& ctx = order == 1 ? vertex : context;

  std::vector<double> scratch(cfg.dim);
  const std::size_t per_epoch = std::max<std::size_t>(1, cfg.line_samples_per_edge * g.edge_count());
  const std::size_t total = cfg.epochs * per_epoch;
  for (std::size_t step = 0; step < total; ++step) {
    const Edge& e = g.edges()[sample_cdf(edge_cdf, rng)];
    const bool flip = uniform01(rng) < 0.5;
    const std::size_t src = flip ? e.j : e.i;
    const std::size_t dst = flip ? e.i : e.j;
    sgns_step(vertex, ctx, src, dst, noise, cfg.negatives, decayed_rate(cfg.learning_rate, step, total), rng, scratch);
  }
  return EmbeddingTable{order == 1 ? EmbedMethod::Line1 : EmbedMethod::Line2, seed, std::move(vertex)};
}

EmbeddingTable embed_node2vec(const QuestionGraph& g, const WalkConfig& walk, const SgnsConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  if (g.edge_count() == 0) throw ValidationError("node2vec needs a graph with at least one edge");
  const WalkCorpus corpus = random_walks(g, walk, seed);
  const auto pairs = window_pairs(corpus, cfg.window);
  EmbeddingTable t = sgns_train(pairs, g.question_count(), cfg, seed);
  t.method = EmbedMethod::Node2Vec;
  return t;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine of vectors with different lengths");
  const double ab = dot(a.data(), b.data(), a.size());
  const double na = std::sqrt(dot(a.data(), a.data(), a.size()));
  const double nb = std::sqrt(dot(b.data(), b.data(), b.size()));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return ab / (na * nb);
}

void write_embedding(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ostringstream out;
  out << table.rows() << ' ' << table.dim() << ' ' << method_name(table.method) << ' ' << table.seed << '\n';
  for (std::size_t q = 0; q < table.rows(); ++q) {
    out << q;
    for (double v : table.row(q)) out << ' ' << textio::format_double(v);
    out << '\n';
  }
  textio::write_file_atomic(path, out.str());
}

EmbeddingTable read_embedding(const std::filesystem::path& path) {
  const std::string text = textio::read_file(path);
  const auto lines = textio::split(text, '\n');
  auto fail = [&](std::size_t line, const std::string& what) {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
  };
  if (lines.empty()) fail(1, "missing header");
  const auto header = textio::split(textio::trim(lines[0]), ' ');
  std::size_t q = 0, d = 0;
  std::int64_t seed = 0;
  std::uint64_t useed = 0;
  if (header.size() != 4 || !textio::parse_size(header[0], q) || !textio::parse_size(header[1], d)) {
    fail(1, "expected header `Q d method seed`");
  }
  if (!textio::parse_int(header[3], seed)) {
    // Seeds above INT64_MAX are written unsigned.
    std::istringstream s{std::string(header[3])};
    if (!(s >> useed)) fail(1, "bad seed");
  } else {
    useed = static_cast<std::uint64_t>(seed);
  }
  EmbeddingTable t{parse_method(std::string(header[2])), useed, num::Tensor({q, d})};
  std::vector<char> seen(q, 0);
  std::size_t rows = 0;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto line = textio::trim(lines[ln]);
    if (line.empty()) continue;
    const auto cols = textio::split(line, ' ');
    std::size_t id = 0;
    if (cols.size() != d + 1 || !textio::parse_size(cols[0], id) || id >= q) fail(ln + 1, "expected `id v1 ... vd`");
    if (seen[id]) fail(ln + 1, "duplicate row " + std::to_string(id));
    seen[id] = 1;
    for (std::size_t k = 0; k < d; ++k) {
      double v = 0;
      if (!textio::parse_double(cols[k + 1], v) || !std::isfinite(v)) fail(ln + 1, "bad value");
      t.values.at(id, k) = v;
    }
    ++rows;
  }
  if (rows != q) throw ParseError(path.string() + ": header declares " + std::to_string(q) + " rows, found " + std::to_string(rows));
  return t;
}

}  // namespace dkts
