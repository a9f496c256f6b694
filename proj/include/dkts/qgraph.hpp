#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dkts/tensor.hpp"

namespace dkts {

/// Question id (dense, 0..Q-1) to the set of skills it exercises.
using SkillMap = std::vector<std::set<int>>;

enum class EdgeWeighting { Binary, Jaccard };
enum class LaplacianKind { Unnormalized, SymmetricNormalized };

EdgeWeighting parse_weighting(const std::string& name);
LaplacianKind parse_laplacian_kind(const std::string& name);

struct Edge {
  std::size_t i;
  std::size_t j;
  double weight;
};

/// Undirected weighted question-question graph. Immutable once built:
/// adjacency is symmetric, nonnegative, and has a zero diagonal.
class QuestionGraph {
 public:
  QuestionGraph() = default;
  /// Edges are given once each (either orientation). Self-loops, negative
  /// weights and out-of-range ids are rejected; repeated pairs are summed.
  QuestionGraph(std::size_t question_count, std::vector<Edge> edges);

  std::size_t question_count() const { return q_; }
  /// Each undirected edge once, with i < j, sorted.
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }
  const num::SparseMatrix& adjacency() const { return adjacency_; }
  /// Sorted neighbour ids and matching weights for node `i`.
  std::span<const std::size_t> neighbours(std::size_t i) const;
  std::span<const double> neighbour_weights(std::size_t i) const;
  double degree(std::size_t i) const { return degree_[i]; }
  bool has_edge(std::size_t i, std::size_t j) const;

 private:
  std::size_t q_ = 0;
  std::vector<Edge> edges_;
  num::SparseMatrix adjacency_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> nbr_;
  std::vector<double> nbr_w_;
  std::vector<double> degree_;
};

/// Connects two questions iff their skill sets intersect.
QuestionGraph build_graph(const SkillMap& skills, EdgeWeighting weighting = EdgeWeighting::Binary);

/// L = D - A, or D^-1/2 (D - A) D^-1/2 for the normalized variant
/// (isolated nodes get a zero row).
num::SparseMatrix laplacian(const QuestionGraph& g, LaplacianKind kind = LaplacianKind::Unnormalized);

/// 1/2 p^T L p for the unnormalized Laplacian, evaluated as the edge sum
/// 1/2 sum_{i<j} A(i,j) (p_i - p_j)^2.
double quad_form(const QuestionGraph& g, std::span<const double> p);

/// Gradient of quad_form with respect to p, i.e. L p.
std::vector<double> quad_form_grad(const QuestionGraph& g, std::span<const double> p);

/// Skill map text: `question_id<TAB>skill[,skill...]`, one line per question.
SkillMap read_skill_map(const std::filesystem::path& path);
void write_skill_map(const std::filesystem::path& path, const SkillMap& skills);

/// Edge-list text: `i<TAB>j<TAB>weight`, each undirected edge once.
/// `question_count` of 0 infers Q as the largest id + 1.
QuestionGraph read_graph(const std::filesystem::path& path, std::size_t question_count = 0);
void write_graph(const std::filesystem::path& path, const QuestionGraph& g);

}  // namespace dkts
