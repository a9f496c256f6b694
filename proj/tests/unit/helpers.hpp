#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dkts/dataio.hpp"
#include "dkts/qgraph.hpp"
#include "dkts/tensor.hpp"

namespace testutil {

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline dkts::num::Tensor uniform_tensor(std::mt19937_64& rng, dkts::num::Shape shape, double lo, double hi) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return dkts::num::Tensor(std::move(shape), uniform_vector(rng, n, lo, hi));
}

/// Random weighted graph: each pair joined with probability `density`.
inline dkts::QuestionGraph random_graph(std::mt19937_64& rng, std::size_t q, double density) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<dkts::Edge> edges;
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = i + 1; j < q; ++j)
      if (u(rng) < density) edges.push_back({i, j, 0.1 + u(rng)});
  return dkts::QuestionGraph(q, std::move(edges));
}

/// Dense Laplacian D - A built straight from the edge list.
inline std::vector<std::vector<double>> dense_laplacian(const dkts::QuestionGraph& g) {
  const std::size_t q = g.question_count();
  std::vector<std::vector<double>> L(q, std::vector<double>(q, 0.0));
  for (const auto& e : g.edges()) {
    L[e.i][e.j] -= e.weight;
    L[e.j][e.i] -= e.weight;
    L[e.i][e.i] += e.weight;
    L[e.j][e.j] += e.weight;
  }
  return L;
}

inline std::vector<double> dense_multiply(const std::vector<std::vector<double>>& M, const std::vector<double>& x) {
  std::vector<double> y(M.size(), 0.0);
  for (std::size_t i = 0; i < M.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += M[i][j] * x[j];
  return y;
}

/// Every (positive, negative) pair: 1 if the positive scores higher, 1/2 on a tie.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline dkts::InteractionSequence make_sequence(const std::string& student, std::vector<std::pair<std::size_t, int>> xs) {
  dkts::InteractionSequence s;
  s.student = student;
  for (auto [q, a] : xs) s.steps.push_back({q, a});
  return s;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("dkts_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
