#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dkts/dataio.hpp"
#include "dkts/gembed.hpp"
#include "dkts/graph.hpp"
#include "dkts/tensor.hpp"

namespace dkts {

enum class CellType { Rnn, Lstm, Gru };

std::string cell_name(CellType cell);
CellType parse_cell(const std::string& name);
/// Gates per cell: rnn {h}; lstm {i, f, o, g}; gru {z, r, h}.
std::size_t gate_count(CellType cell);

/// One gate's affine map. Vectors are rows: pre = x W + h U + b.
struct GateParams {
  num::Tensor W;  // {input_dim, hidden}
  num::Tensor U;  // {hidden, hidden}
  num::Tensor b;  // {hidden}
};

struct ModelParams {
  CellType cell = CellType::Lstm;
  EmbeddingTable embedding;          // {Q, d}
  bool train_embedding = false;
  std::vector<GateParams> gates;
  num::Tensor head_W;                // {hidden, Q}
  num::Tensor head_b;                // {Q}

  std::size_t questions() const { return head_b.size(); }
  std::size_t hidden() const { return head_W.rank() == 2 ? head_W.shape()[0] : 0; }
  std::size_t embedding_dim() const { return embedding.dim(); }
  std::size_t input_dim() const { return 2 * embedding.dim(); }

  /// Named tensors the optimizer updates, in a fixed order. The embedding
  /// is included only when `train_embedding` is set.
  std::vector<std::pair<std::string, num::Tensor*>> trainable();
  std::vector<std::pair<std::string, const num::Tensor*>> all_tensors() const;

  /// Shapes agree with (Q, d, hidden) and every value is finite.
  void validate() const;
};

/// Gate weights uniform in +-1/sqrt(fan_in), biases zero; seeded.
ModelParams init_params(CellType cell, EmbeddingTable embedding, std::size_t hidden, std::uint64_t seed);
/// Same shapes with every weight and bias zero.
ModelParams zero_params(CellType cell, EmbeddingTable embedding, std::size_t hidden);

struct KnowledgeState {
  std::vector<double> h;
  std::vector<double> c;  // LSTM only, empty otherwise

  static KnowledgeState zeros(CellType cell, std::size_t hidden);
};

/// concat(e_q, a * e_q), length 2d.
std::vector<double> encode_interaction(const Interaction& x, const EmbeddingTable& table);

KnowledgeState step_rnn(std::span<const double> x, const KnowledgeState& s, const ModelParams& params);
KnowledgeState step_lstm(std::span<const double> x, const KnowledgeState& s, const ModelParams& params);
KnowledgeState step_gru(std::span<const double> x, const KnowledgeState& s, const ModelParams& params);
/// Dispatches on params.cell.
KnowledgeState step(std::span<const double> x, const KnowledgeState& s, const ModelParams& params);

/// sigma(h W^p + b^p): probability of answering each question correctly.
std::vector<double> predict(const KnowledgeState& s, const ModelParams& params);

/// Starting from the zero state, consumes x_1..x_{n-1} and returns the
/// prediction made after each, i.e. entry t scores interaction t+1.
std::vector<std::vector<double>> forward_sequence(const InteractionSequence& seq, const ModelParams& params);
std::vector<std::vector<double>> forward_steps(std::span<const Interaction> steps, const ModelParams& params);

/// Records the same recurrence on a computation graph. Parameters are
/// registered under the names from `trainable()`; returns the node of each
/// prediction vector (n-1 of them).
std::vector<num::NodeId> record_forward(num::CompGraph& graph, std::span<const Interaction> steps, ModelParams& params);

/// Text checkpoint. Doubles are written in shortest round-trip form, so
/// save followed by load is value-exact.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const std::string& config_hash);
struct Checkpoint {
  ModelParams params;
  std::string config_hash;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_text(const ModelParams& params, const std::string& config_hash);
Checkpoint parse_checkpoint(std::string_view text, const std::string& source = "<checkpoint>");

}  // namespace dkts
