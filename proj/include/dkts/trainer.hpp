#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dkts/dataio.hpp"
#include "dkts/graph.hpp"
#include "dkts/ktmodel.hpp"
#include "dkts/qgraph.hpp"

namespace dkts {

/// Selected probabilities are clamped to [eps, 1 - eps] before the log.
inline constexpr double kProbabilityEpsilon = 1e-7;

enum class OptimizerKind { Sgd, Adam };

std::string optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  double alpha = 0.1;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  /// Truncation window: BPTT runs over at most this many predicted steps.
  std::size_t max_seq_len = 100;
  double clip_norm = 5.0;  // global gradient norm; 0 disables
  std::uint64_t seed = 1;
  bool train_embedding = false;
  /// Epochs without a validation AUC improvement before stopping; 0 disables.
  std::size_t patience = 5;

  void validate() const;
  /// Applies one `key=value` setting; unknown keys throw ValidationError.
  void set(const std::string& key, const std::string& value);
  /// Canonical `key=value` lines, sorted by key.
  std::string to_kv() const;
  /// Hex FNV-1a of to_kv().
  std::string hash() const;
};

/// Parses flat `key=value` text (blank lines and `#` comments skipped).
std::map<std::string, std::string> parse_kv(std::string_view text, const std::string& source = "<config>");

struct LossBreakdown {
  double prediction = 0.0;
  double relation = 0.0;
  double total = 0.0;
};

/// -a log p_q - (1 - a) log(1 - p_q) for the next interaction's question q.
double loss_prediction(std::span<const double> p, const Interaction& next);
/// 1/2 p^T L p.
double loss_relation(std::span<const double> p, const QuestionGraph& g);

/// Means over the n-1 predicted steps; total = prediction + alpha * relation.
/// Without a graph the relation term is zero.
LossBreakdown sequence_loss(const InteractionSequence& seq, const ModelParams& params, const QuestionGraph* g, double alpha);

/// Graph nodes of a recorded window loss.
struct RecordedLoss {
  num::NodeId prediction = num::kNoNode;
  num::NodeId relation = num::kNoNode;  // kNoNode without a graph
  num::NodeId total = num::kNoNode;
};

/// Differentiable 1/2 p^T L p over a vector node, evaluated sparsely.
std::shared_ptr<const num::CustomOp> relation_op(const QuestionGraph& g);

/// Records the window loss for `steps`. When a graph is given, the
/// alpha-weighted relation term is part of `total` even for alpha = 0.
RecordedLoss record_loss(num::CompGraph& graph, std::span<const Interaction> steps, ModelParams& params,
                         const QuestionGraph* g, double alpha);

/// Splits a sequence into BPTT windows of at most `window` predictions.
/// Consecutive windows share one interaction, so every interaction after
/// the first is a prediction target exactly once.
std::vector<std::span<const Interaction>> truncation_windows(const InteractionSequence& seq, std::size_t window);

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown train;
  double validation_auc = 0.0;  // NaN without a validation set
  double seconds = 0.0;
};

struct FitResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when no epoch ran or no validation set
};

/// Mini-batch training with shuffled batches, truncated BPTT, global-norm
/// clipping and early stopping on validation AUC (best parameters are
/// returned). Deterministic for a fixed config seed.
FitResult fit(const Dataset& train, const Dataset& validation, ModelParams params, const QuestionGraph* g,
              const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});

/// `epoch<TAB>L_p<TAB>L_r<TAB>L<TAB>val_auc<TAB>seconds`.
std::string format_epoch(const EpochRecord& r);

}  // namespace dkts
