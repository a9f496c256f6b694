#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dkts/dataio.hpp"
#include "dkts/gembed.hpp"
#include "dkts/ktmodel.hpp"
#include "dkts/qgraph.hpp"
#include "dkts/trainer.hpp"

namespace dkts {

/// Everything one end-to-end run needs, addressable through flat keys.
struct ExperimentConfig {
  SimulatorConfig simulator;
  std::size_t filter_min_len = 3;
  std::size_t filter_max_len = 200;
  double train_fraction = 0.7;
  double validation_fraction = 0.1;
  EdgeWeighting weighting = EdgeWeighting::Binary;
  SgnsConfig sgns;
  WalkConfig walk;
  int line_order = 1;
  std::size_t hidden = 64;
  CellType cell = CellType::Lstm;       // single-model subcommands
  CellType dkts_cell = CellType::Gru;   // DKTS row of the matrix
  TrainConfig train;
  /// DKTS cells pick alpha from this grid by validation AUC; empty means train.alpha.
  std::vector<double> alpha_grid = {0.01, 0.1, 0.5, 1.0};
  std::size_t seeds = 5;
  std::uint64_t seed = 1;

  /// Known keys, in a stable order.
  static const std::vector<std::string>& keys();
  void set(const std::string& key, const std::string& value);
  void apply(const std::map<std::string, std::string>& kv);
  /// Resolved `key=value` for every known key.
  std::map<std::string, std::string> to_map() const;
  void validate() const;
};

/// Seed used for repetition `rep` of a run seeded with `seed`.
std::uint64_t repetition_seed(std::uint64_t seed, std::size_t rep);

/// Input to the matrix: a fixed dataset, or nothing to simulate one per seed.
struct MatrixData {
  Dataset sequences;
  SkillMap skills;
};

inline constexpr std::array<const char*, 4> kMatrixRows = {"RNN", "LSTM", "GRU", "DKTS"};
inline constexpr std::array<const char*, 3> kMatrixColumns = {"Gaussian", "LINE", "Node2Vec"};

struct MatrixResult {
  /// Test AUC per seed for each [row][column]; empty for the NA cell.
  std::array<std::array<std::vector<double>, 3>, 4> aucs;
  /// Alpha chosen for each DKTS cell and seed.
  std::array<std::vector<double>, 3> dkts_alpha;
  double seconds = 0.0;

  bool applicable(std::size_t row, std::size_t col) const { return !(row == 3 && col == 0); }
  double mean(std::size_t row, std::size_t col) const;
};

struct MatrixProgress {
  std::size_t rep;
  std::size_t row;
  std::size_t col;
  double auc;
  double alpha;
};

/// Trains and tests {rnn, lstm, gru} x {gaussian, line, node2vec} with
/// alpha = 0, plus the regularized DKTS cell on the graph embeddings, for
/// each of cfg.seeds repetitions.
MatrixResult run_matrix(const ExperimentConfig& cfg, const std::optional<MatrixData>& data = std::nullopt,
                        const std::function<void(const MatrixProgress&)>& progress = {});

/// Tab-separated table: header `method<TAB>Gaussian<TAB>LINE<TAB>Node2Vec`,
/// then one row per method with 4-decimal mean AUCs and `NA` where the
/// method does not apply.
std::string format_matrix(const MatrixResult& r);

/// Builds the embedding table for `method` from a graph (Gaussian needs only Q).
EmbeddingTable make_embedding(EmbedMethod method, const QuestionGraph& g, const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace dkts
