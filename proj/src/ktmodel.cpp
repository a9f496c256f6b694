#include "dkts/ktmodel.hpp"

#include <cmath>
#include <deque>
#include <map>
#include <sstream>

#include "cell_math.hpp"
#include "dkts/errors.hpp"
#include "dkts/rng.hpp"
#include "dkts/textio.hpp"

namespace dkts {

namespace {

enum StreamTag : std::uint64_t { kInitStream = 21 };

const char* const kGateNames[3][4] = {{"h"}, {"i", "f", "o", "g"}, {"z", "r", "h"}};

const char* gate_name(CellType cell, std::size_t g) { return kGateNames[static_cast<int>(cell)][g]; }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Eager evaluation of the cell algebra on row vectors. Results live in an
/// arena owned by the backend; values are pointers into it or into params.
class EagerBackend {
 public:
  using Value = const num::Tensor*;

  Value hold(num::Tensor t) { return &arena_.emplace_back(std::move(t)); }

  Value matmul(Value x, Value W) {
    const std::size_t k = W->shape()[0], n = W->shape()[1];
    if (x->size() != k) throw DimensionError("vector of length " + std::to_string(x->size()) + " times " + num::shape_str(W->shape()));
    num::Tensor out({n});
    for (std::size_t p = 0; p < k; ++p) {
      const double xp = (*x)[p];
      if (xp == 0.0) continue;
      const double* row = W->data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += xp * row[j];
    }
    return hold(std::move(out));
  }
  template <class F>
  Value zip(Value a, Value b, F f) {
    if (a->size() != b->size()) throw DimensionError("elementwise op on lengths " + std::to_string(a->size()) + " and " + std::to_string(b->size()));
    num::Tensor out({a->size()});
    for (std::size_t i = 0; i < a->size(); ++i) out[i] = f((*a)[i], (*b)[i]);
    return hold(std::move(out));
  }
  template <class F>
  Value map(Value a, F f) {
    num::Tensor out({a->size()});
    for (std::size_t i = 0; i < a->size(); ++i) out[i] = f((*a)[i]);
    return hold(std::move(out));
  }
  Value add(Value a, Value b) { return zip(a, b, [](double u, double v) { return u + v; }); }
  Value sub(Value a, Value b) { return zip(a, b, [](double u, double v) { return u - v; }); }
  Value mul(Value a, Value b) { return zip(a, b, [](double u, double v) { return u * v; }); }
  Value tanh(Value a) { return map(a, [](double u) { return std::tanh(u); }); }
  Value sigmoid(Value a) { return map(a, [](double u) { return dkts::sigmoid(u); }); }

 private:
  std::deque<num::Tensor> arena_;
};

class GraphBackend {
 public:
  using Value = num::NodeId;
  explicit GraphBackend(num::CompGraph& g) : g_(g) {}

  Value matmul(Value a, Value b) { return g_.matmul(a, b); }
  Value add(Value a, Value b) { return g_.add(a, b); }
  Value sub(Value a, Value b) { return g_.sub(a, b); }
  Value mul(Value a, Value b) { return g_.mul(a, b); }
  Value tanh(Value a) { return g_.tanh(a); }
  Value sigmoid(Value a) { return g_.sigmoid(a); }

 private:
  num::CompGraph& g_;
};

std::vector<detail::GateView<EagerBackend::Value>> eager_gates(const ModelParams& p) {
  std::vector<detail::GateView<EagerBackend::Value>> v;
  for (const auto& g : p.gates) v.push_back({&g.W, &g.U, &g.b});
  return v;
}

void check_input(std::span<const double> x, const KnowledgeState& s, const ModelParams& p, CellType expected) {
  if (p.cell != expected) throw ValidationError("step_" + cell_name(expected) + " called with " + cell_name(p.cell) + " params");
  if (x.size() != p.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.size()) + " entries, model expects " + std::to_string(p.input_dim()));
  }
  if (s.h.size() != p.hidden()) {
    throw DimensionError("state has " + std::to_string(s.h.size()) + " entries, model expects " + std::to_string(p.hidden()));
  }
  if (expected == CellType::Lstm && s.c.size() != p.hidden()) throw DimensionError("LSTM cell memory has wrong length");
}

KnowledgeState eager_step(std::span<const double> x, const KnowledgeState& s, const ModelParams& p) {
  EagerBackend be;
  const auto gates = eager_gates(p);
  detail::CellState<EagerBackend::Value> st{be.hold(num::Tensor::vector(s.h)), nullptr, p.cell == CellType::Lstm};
  if (st.has_c) st.c = be.hold(num::Tensor::vector(s.c));
  auto xv = be.hold(num::Tensor::vector({x.begin(), x.end()}));
  auto next = detail::cell_step(be, p.cell, gates, xv, st);
  KnowledgeState out;
  out.h.assign(next.h->values().begin(), next.h->values().end());
  if (next.has_c) out.c.assign(next.c->values().begin(), next.c->values().end());
  return out;
}

void fill_uniform(num::Tensor& t, double bound, Rng& rng) {
  for (double& v : t.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
}

void check_shape(const num::Tensor& t, const num::Shape& s, const std::string& name) {
  if (t.shape() != s) {
    throw DimensionError("parameter " + name + " has shape " + num::shape_str(t.shape()) + ", expected " + num::shape_str(s));
  }
}

}  // namespace

std::string cell_name(CellType cell) {
  switch (cell) {
    case CellType::Rnn: return "rnn";
    case CellType::Lstm: return "lstm";
    case CellType::Gru: return "gru";
  }
  return "?";
}

CellType parse_cell(const std::string& name) {
  if (name == "rnn") return CellType::Rnn;
  if (name == "lstm") return CellType::Lstm;
  if (name == "gru") return CellType::Gru;
  throw ValidationError("unknown cell type '" + name + "' (expected rnn, lstm or gru)");
}

std::size_t gate_count(CellType cell) {
  switch (cell) {
    case CellType::Rnn: return 1;
    case CellType::Lstm: return 4;
    case CellType::Gru: return 3;
  }
  return 0;
}

std::vector<std::pair<std::string, num::Tensor*>> ModelParams::trainable() {
  std::vector<std::pair<std::string, num::Tensor*>> out;
  if (train_embedding) out.emplace_back("E", &embedding.values);
  for (std::size_t g = 0; g < gates.size(); ++g) {
    const std::string s = gate_name(cell, g);
    out.emplace_back("W_" + s, &gates[g].W);
    out.emplace_back("U_" + s, &gates[g].U);
    out.emplace_back("b_" + s, &gates[g].b);
  }
  out.emplace_back("W_p", &head_W);
  out.emplace_back("b_p", &head_b);
  return out;
}

std::vector<std::pair<std::string, const num::Tensor*>> ModelParams::all_tensors() const {
  std::vector<std::pair<std::string, const num::Tensor*>> out;
  out.emplace_back("E", &embedding.values);
  for (std::size_t g = 0; g < gates.size(); ++g) {
    const std::string s = gate_name(cell, g);
    out.emplace_back("W_" + s, &gates[g].W);
    out.emplace_back("U_" + s, &gates[g].U);
    out.emplace_back("b_" + s, &gates[g].b);
  }
  out.emplace_back("W_p", &head_W);
  out.emplace_back("b_p", &head_b);
  return out;
}

void ModelParams::validate() const {
  const std::size_t q = embedding.rows(), d = embedding.dim(), nh = hidden();
  if (q == 0 || d == 0 || nh == 0) throw ValidationError("model needs Q, d and hidden size >= 1");
  if (gates.size() != gate_count(cell)) throw ValidationError(cell_name(cell) + " model needs " + std::to_string(gate_count(cell)) + " gates");
  for (std::size_t g = 0; g < gates.size(); ++g) {
    const std::string s = gate_name(cell, g);
    check_shape(gates[g].W, {2 * d, nh}, "W_" + s);
    check_shape(gates[g].U, {nh, nh}, "U_" + s);
    check_shape(gates[g].b, {nh}, "b_" + s);
  }
  check_shape(head_W, {nh, q}, "W_p");
  check_shape(head_b, {q}, "b_p");
  for (const auto& [name, t] : all_tensors())
    if (!t->all_finite()) throw NumericError("parameter " + name + " holds non-finite values");
}

ModelParams zero_params(CellType cell, EmbeddingTable embedding, std::size_t hidden) {
  ModelParams p;
  p.cell = cell;
  const std::size_t q = embedding.rows(), dx = 2 * embedding.dim();
  p.embedding = std::move(embedding);
  for (std::size_t g = 0; g < gate_count(cell); ++g) {
    p.gates.push_back({num::Tensor({dx, hidden}), num::Tensor({hidden, hidden}), num::Tensor({hidden})});
  }
  p.head_W = num::Tensor({hidden, q});
  p.head_b = num::Tensor({q});
  p.validate();
  return p;
}

ModelParams init_params(CellType cell, EmbeddingTable embedding, std::size_t hidden, std::uint64_t seed) {
  ModelParams p = zero_params(cell, std::move(embedding), hidden);
  Rng rng(derive_seed(seed, {kInitStream}));
  const double wb = 1.0 / std::sqrt(static_cast<double>(p.input_dim()));
  const double ub = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& g : p.gates) {
    fill_uniform(g.W, wb, rng);
    fill_uniform(g.U, ub, rng);
  }
  fill_uniform(p.head_W, ub, rng);
  return p;
}

KnowledgeState KnowledgeState::zeros(CellType cell, std::size_t hidden) {
  KnowledgeState s;
  s.h.assign(hidden, 0.0);
  if (cell == CellType::Lstm) s.c.assign(hidden, 0.0);
  return s;
}

std::vector<double> encode_interaction(const Interaction& x, const EmbeddingTable& table) {
  if (x.question >= table.rows()) {
    throw IndexError("question " + std::to_string(x.question) + " outside embedding table of " + std::to_string(table.rows()) + " rows");
  }
  const auto e = table.row(x.question);
  std::vector<double> out(e.begin(), e.end());
  out.reserve(2 * e.size());
  const double a = static_cast<double>(x.correct);
  for (double v : e) out.push_back(a * v);
  return out;
}

KnowledgeState step_rnn(std::span<const double> x, const KnowledgeState& s, const ModelParams& params) {
  check_input(x, s, params, CellType::Rnn);
  return eager_step(x, s, params);
}

KnowledgeState step_lstm(std::span<const double> x, const KnowledgeState& s, const ModelParams& params) {
  check_input(x, s, params, CellType::Lstm);
  return eager_step(x, s, params);
}

KnowledgeState step_gru(std::span<const double> x, const KnowledgeState& s, const ModelParams& params) {
  check_input(x, s, params, CellType::Gru);
  return eager_step(x, s, params);
}

KnowledgeState step(std::span<const double> x, const KnowledgeState& s, const ModelParams& params) {
  check_input(x, s, params, params.cell);
  return eager_step(x, s, params);
}

std::vector<double> predict(const KnowledgeState& s, const ModelParams& params) {
  if (s.h.size() != params.hidden()) {
    throw DimensionError("state has " + std::to_string(s.h.size()) + " entries, head expects " + std::to_string(params.hidden()));
  }
  EagerBackend be;
  auto p = detail::head(be, be.hold(num::Tensor::vector(s.h)), &params.head_W, &params.head_b);
  return {p->values().begin(), p->values().end()};
}

std::vector<std::vector<double>> forward_steps(std::span<const Interaction> steps, const ModelParams& params) {
  if (steps.size() < 2) throw ValidationError("a sequence needs at least 2 interactions to predict, got " + std::to_string(steps.size()));
  EagerBackend be;
  const auto gates = eager_gates(params);
  const std::size_t nh = params.hidden();
  detail::CellState<EagerBackend::Value> st{be.hold(num::Tensor({nh})), nullptr, params.cell == CellType::Lstm};
  if (st.has_c) st.c = be.hold(num::Tensor({nh}));
  std::vector<std::vector<double>> out;
  out.reserve(steps.size() - 1);
  for (std::size_t t = 0; t + 1 < steps.size(); ++t) {
    auto x = be.hold(num::Tensor::vector(encode_interaction(steps[t], params.embedding)));
    st = detail::cell_step(be, params.cell, gates, x, st);
    auto p = detail::head(be, st.h, &params.head_W, &params.head_b);
    out.emplace_back(p->values().begin(), p->values().end());
  }
  return out;
}

std::vector<std::vector<double>> forward_sequence(const InteractionSequence& seq, const ModelParams& params) {
  return forward_steps(seq.steps, params);
}

std::vector<num::NodeId> record_forward(num::CompGraph& graph, std::span<const Interaction> steps, ModelParams& params) {
  if (steps.size() < 2) throw ValidationError("a sequence needs at least 2 interactions to predict, got " + std::to_string(steps.size()));
  GraphBackend be(graph);
  std::vector<detail::GateView<num::NodeId>> gates;
  for (std::size_t g = 0; g < params.gates.size(); ++g) {
    const std::string s = gate_name(params.cell, g);
    gates.push_back({graph.param("W_" + s, params.gates[g].W), graph.param("U_" + s, params.gates[g].U),
                     graph.param("b_" + s, params.gates[g].b)});
  }
  const num::NodeId head_W = graph.param("W_p", params.head_W);
  const num::NodeId head_b = graph.param("b_p", params.head_b);
  num::NodeId table = num::kNoNode;
  if (params.train_embedding) table = graph.param("E", params.embedding.values);

  const std::size_t nh = params.hidden();
  const std::size_t q = params.questions();
  detail::CellState<num::NodeId> st{graph.constant(num::Tensor({nh})), num::kNoNode, params.cell == CellType::Lstm};
  if (st.has_c) st.c = graph.constant(num::Tensor({nh}));

  std::vector<num::NodeId> preds;
  preds.reserve(steps.size() - 1);
  for (std::size_t t = 0; t + 1 < steps.size(); ++t) {
    num::NodeId x;
    if (table != num::kNoNode) {
      if (steps[t].question >= q) throw IndexError("question " + std::to_string(steps[t].question) + " outside " + std::to_string(q));
      num::Tensor onehot({q});
      onehot[steps[t].question] = 1.0;
      const num::NodeId e = graph.matmul(graph.constant(std::move(onehot)), table);
      x = graph.concat(e, graph.scale(e, static_cast<double>(steps[t].correct)));
    } else {
      x = graph.constant(num::Tensor::vector(encode_interaction(steps[t], params.embedding)));
    }
    st = detail::cell_step(be, params.cell, gates, x, st);
    preds.push_back(detail::head(be, st.h, head_W, head_b));
  }
  return preds;
}

std::string checkpoint_text(const ModelParams& params, const std::string& config_hash) {
  std::ostringstream out;
  out << "dkts-checkpoint 1\n";
  out << "cell " << cell_name(params.cell) << '\n';
  out << "questions " << params.questions() << '\n';
  out << "hidden " << params.hidden() << '\n';
  out << "embedding_dim " << params.embedding_dim() << '\n';
  out << "embedding_method " << method_name(params.embedding.method) << '\n';
  out << "embedding_seed " << params.embedding.seed << '\n';
  out << "train_embedding " << (params.train_embedding ? 1 : 0) << '\n';
  out << "config_hash " << (config_hash.empty() ? "-" : config_hash) << '\n';
  for (const auto& [name, t] : params.all_tensors()) {
    out << "tensor " << name << ' ' << t->rank();
    for (std::size_t d : t->shape()) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < t->size(); ++i) out << (i ? " " : "") << textio::format_double((*t)[i]);
    out << '\n';
  }
  out << "end\n";
  return out.str();
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const std::string& config_hash) {
  textio::write_file_atomic(path, checkpoint_text(params, config_hash));
}

Checkpoint parse_checkpoint(std::string_view text, const std::string& source) {
  const auto lines = textio::split(text, '\n');
  std::size_t ln = 0;
  auto fail = [&](const std::string& what) { throw ParseError(source + ":" + std::to_string(ln + 1) + ": " + what); };
  auto next = [&]() -> std::string_view {
    if (ln >= lines.size()) fail("unexpected end of checkpoint");
    return textio::trim(lines[ln++]);
  };
  auto field = [&](const std::string& key) -> std::string {
    const auto cols = textio::split(next(), ' ');
    if (cols.size() != 2 || cols[0] != key) {
      --ln;
      fail("expected `" + key + " <value>`");
    }
    return std::string(cols[1]);
  };

  if (next() != "dkts-checkpoint 1") {
    ln = 0;
    fail("not a dkts checkpoint (version 1)");
  }
  Checkpoint ck;
  ModelParams& p = ck.params;
  p.cell = parse_cell(field("cell"));
  std::size_t q = 0, nh = 0, d = 0;
  std::uint64_t emb_seed = 0;
  if (!textio::parse_size(field("questions"), q)) fail("bad questions");
  if (!textio::parse_size(field("hidden"), nh)) fail("bad hidden");
  if (!textio::parse_size(field("embedding_dim"), d)) fail("bad embedding_dim");
  const EmbedMethod method = parse_method(field("embedding_method"));
  {
    std::istringstream s(field("embedding_seed"));
    if (!(s >> emb_seed)) fail("bad embedding_seed");
  }
  const std::string train = field("train_embedding");
  ck.config_hash = field("config_hash");
  if (ck.config_hash == "-") ck.config_hash.clear();

  p = zero_params(p.cell, EmbeddingTable{method, emb_seed, num::Tensor({q, d})}, nh);
  p.train_embedding = train == "1";

  std::map<std::string, num::Tensor*> slots;
  slots["E"] = &p.embedding.values;
  for (auto& [name, t] : p.trainable()) slots[name] = t;
  std::size_t loaded = 0;
  while (true) {
    const auto header = textio::split(next(), ' ');
    if (header.size() == 1 && header[0] == "end") break;
    std::size_t rank = 0;
    if (header.size() < 3 || header[0] != "tensor" || !textio::parse_size(header[2], rank) || header.size() != 3 + rank) {
      fail("expected `tensor <name> <rank> <dims...>`");
    }
    auto it = slots.find(std::string(header[1]));
    if (it == slots.end()) fail("unknown tensor '" + std::string(header[1]) + "'");
    num::Shape shape(rank);
    for (std::size_t k = 0; k < rank; ++k)
      if (!textio::parse_size(header[3 + k], shape[k])) fail("bad dimension");
    if (shape != it->second->shape()) fail("tensor " + it->first + " has shape " + num::shape_str(shape) + ", expected " + num::shape_str(it->second->shape()));
    const auto vals = textio::split(next(), ' ');
    const std::size_t n = num::shape_size(shape);
    if (!(n == 0 ? vals.size() <= 1 : vals.size() == n)) fail("tensor " + it->first + " needs " + std::to_string(n) + " values");
    for (std::size_t i = 0; i < n; ++i)
      if (!textio::parse_double(vals[i], (*it->second)[i])) fail("bad value in tensor " + it->first);
    ++loaded;
  }
  if (loaded != slots.size()) throw ParseError(source + ": checkpoint holds " + std::to_string(loaded) + " of " + std::to_string(slots.size()) + " tensors");
  p.validate();
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(textio::read_file(path), path.string()); }

}  // namespace dkts
