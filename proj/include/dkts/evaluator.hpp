#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dkts/dataio.hpp"
#include "dkts/ktmodel.hpp"
#include "dkts/qgraph.hpp"

namespace dkts {

/// The model's probability for the question actually asked next, paired
/// with the observed answer.
struct ScoredStep {
  std::string student;
  std::size_t step = 0;  // index of the scored interaction within its sequence
  std::size_t question = 0;
  double score = 0.0;
  int label = 0;
};

struct Metrics {
  double auc = 0.0;
  double accuracy = 0.0;   // score >= 0.5 counts as predicting correct
  double mean_loss = 0.0;  // mean clamped cross-entropy
  double mean_relation = 0.0;  // mean 1/2 p^T L p, only when a graph is given
  std::size_t steps = 0;
};

/// Mann-Whitney AUC with midranks for ties. Throws ValidationError unless
/// both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Every predicted step of every sequence, in dataset order then step order.
std::vector<ScoredStep> score_steps(const ModelParams& params, const Dataset& data);
Metrics metrics_from_steps(std::span<const ScoredStep> steps);

/// Pooled metrics over all held-out steps.
Metrics evaluate(const ModelParams& params, const Dataset& data, const QuestionGraph* graph = nullptr);

/// `auc=... accuracy=... loss=... steps=...` on one line.
std::string format_metrics(const Metrics& m);

/// Per-step dump, tab-separated with a header:
/// `student_id step question_id score label`.
void write_step_dump(const std::filesystem::path& path, std::span<const ScoredStep> steps);
std::vector<ScoredStep> read_step_dump(const std::filesystem::path& path);

}  // namespace dkts
