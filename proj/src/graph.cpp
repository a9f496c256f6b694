#include "dkts/graph.hpp"

#include <algorithm>
#include <cmath>

#include "dkts/errors.hpp"

namespace dkts::num {

namespace {

struct MatDims {
  std::size_t rows;
  std::size_t cols;
};

// Rank-1 operands act as a row vector on the left and a column vector on the right.
MatDims left_dims(const Tensor& t) { return t.rank() == 2 ? MatDims{t.shape()[0], t.shape()[1]} : MatDims{1, t.size()}; }
MatDims right_dims(const Tensor& t) { return t.rank() == 2 ? MatDims{t.shape()[0], t.shape()[1]} : MatDims{t.size(), 1}; }

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void accumulate(Tensor& into, const Tensor& g) {
  auto dst = into.values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::Param: return "param";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Concat: return "concat";
    case OpKind::Dot: return "dot";
    case OpKind::Scale: return "scale";
    case OpKind::Sum: return "sum";
    case OpKind::Log: return "log";
    case OpKind::Custom: return "custom";
  }
  return "?";
}

CompGraph::Node CompGraph::make_node(OpKind op, NodeId a, NodeId b, double scalar) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.scalar = scalar;
  return n;
}

namespace {

// A default tensor has the scalar shape but no storage.
bool has_shape(const Tensor& t, const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return t.shape() == s && t.size() == n;
}

}  // namespace

NodeId CompGraph::push(Node n) {
  if (n.a != kNoNode) check_node(n.a);
  if (n.b != kNoNode) check_node(n.b);
  nodes_.push_back(std::move(n));
  values_.emplace_back();
  evaluated_ = false;
  return nodes_.size() - 1;
}

void CompGraph::check_node(NodeId id) const {
  if (id >= nodes_.size()) throw IndexError("unknown graph node " + std::to_string(id));
}

NodeId CompGraph::input(const std::string& name) {
  input_names_.push_back(name);
  return push({OpKind::Input, kNoNode, kNoNode, 0.0, input_names_.size() - 1, nullptr});
}

NodeId CompGraph::constant(Tensor value) {
  constants_.push_back(std::move(value));
  return push({OpKind::Constant, kNoNode, kNoNode, 0.0, constants_.size() - 1, nullptr});
}

NodeId CompGraph::param(const std::string& name, Tensor& storage) {
  if (auto it = param_index_.find(name); it != param_index_.end()) return params_[it->second].node;
  const std::size_t slot = params_.size();
  const NodeId id = push({OpKind::Param, kNoNode, kNoNode, 0.0, slot, nullptr});
  params_.push_back({name, &storage, id});
  param_index_[name] = slot;
  return id;
}

NodeId CompGraph::matmul(NodeId a, NodeId b) { return push(make_node(OpKind::MatMul, a, b)); }
NodeId CompGraph::add(NodeId a, NodeId b) { return push(make_node(OpKind::Add, a, b)); }
NodeId CompGraph::sub(NodeId a, NodeId b) { return push(make_node(OpKind::Sub, a, b)); }
NodeId CompGraph::mul(NodeId a, NodeId b) { return push(make_node(OpKind::Mul, a, b)); }
NodeId CompGraph::tanh(NodeId a) { return push(make_node(OpKind::Tanh, a)); }
NodeId CompGraph::sigmoid(NodeId a) { return push(make_node(OpKind::Sigmoid, a)); }
NodeId CompGraph::concat(NodeId a, NodeId b) { return push(make_node(OpKind::Concat, a, b)); }
NodeId CompGraph::dot(NodeId a, NodeId b) { return push(make_node(OpKind::Dot, a, b)); }
NodeId CompGraph::scale(NodeId a, double factor) { return push(make_node(OpKind::Scale, a, kNoNode, factor)); }
NodeId CompGraph::sum(NodeId a) { return push(make_node(OpKind::Sum, a)); }
NodeId CompGraph::log(NodeId a, double floor) { return push(make_node(OpKind::Log, a, kNoNode, floor)); }

NodeId CompGraph::custom(NodeId a, std::shared_ptr<const CustomOp> op) {
  if (!op || !op->forward || !op->vjp) throw ValidationError("custom op needs forward and vjp");
  return push({OpKind::Custom, a, kNoNode, 0.0, 0, std::move(op)});
}

void CompGraph::set_output(const std::string& name, NodeId node) {
  check_node(node);
  outputs_.emplace_back(name, node);
}

const Tensor& CompGraph::value(NodeId id) const {
  check_node(id);
  const Node& n = nodes_[id];
  if (n.op == OpKind::Param) return *params_[n.slot].storage;
  if (n.op == OpKind::Constant) return constants_[n.slot];
  if (!evaluated_) throw StateError("node " + std::to_string(id) + " read before eval_forward");
  return values_[id];
}

void CompGraph::dim_error(NodeId id, const std::string& what) const {
  throw DimensionError("node " + std::to_string(id) + " (" + op_name(nodes_[id].op) + "): " + what);
}

TensorMap CompGraph::eval_forward(const TensorMap& inputs) {
  evaluated_ = false;
  for (NodeId id = 0; id < nodes_.size(); ++id) compute(id, inputs);
  evaluated_ = true;
  TensorMap out;
  for (const auto& [name, node] : outputs_) out[name] = value(node);
  return out;
}

void CompGraph::compute(NodeId id, const TensorMap& inputs) {
  const Node& n = nodes_[id];
  // Parents precede children, so their values are ready; read them directly
  // to skip the evaluated_ guard.
  auto in = [&](NodeId p) -> const Tensor& {
    const Node& pn = nodes_[p];
    if (pn.op == OpKind::Param) return *params_[pn.slot].storage;
    if (pn.op == OpKind::Constant) return constants_[pn.slot];
    return values_[p];
  };
  Tensor& out = values_[id];

  switch (n.op) {
    case OpKind::Input: {
      auto it = inputs.find(input_names_[n.slot]);
      if (it == inputs.end()) throw ValidationError("unbound graph input '" + input_names_[n.slot] + "'");
      out = it->second;
      break;
    }
    case OpKind::Constant:
    case OpKind::Param: {
      const Tensor& v = in(id);
      if (!v.all_finite()) throw NumericError("node " + std::to_string(id) + " (" + op_name(n.op) + ") holds a non-finite value");
      return;
    }
    case OpKind::MatMul: {
      const Tensor& A = in(n.a);
      const Tensor& B = in(n.b);
      if (A.rank() > 2 || B.rank() > 2 || A.rank() == 0 || B.rank() == 0 || (A.rank() == 1 && B.rank() == 1)) {
        dim_error(id, "unsupported operand ranks " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
      }
      const MatDims da = left_dims(A);
      const MatDims db = right_dims(B);
      if (da.cols != db.rows) dim_error(id, "inner dims differ: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
      Shape s;
      if (A.rank() == 2 && B.rank() == 2) s = {da.rows, db.cols};
      else if (A.rank() == 1) s = {db.cols};
      else s = {da.rows};
      if (!has_shape(out, s)) out = Tensor(s);
      else out.fill(0.0);
      const double* a = A.data();
      const double* b = B.data();
      double* c = out.data();
      const std::size_t m = da.rows, k = da.cols, nn = db.cols;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = a[i * k + p];
          if (aip == 0.0) continue;
          const double* brow = b + p * nn;
          double* crow = c + i * nn;
          for (std::size_t j = 0; j < nn; ++j) crow[j] += aip * brow[j];
        }
      }
      break;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      const Tensor& A = in(n.a);
      const Tensor& B = in(n.b);
      if (A.shape() != B.shape()) dim_error(id, "shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
      if (!has_shape(out, A.shape())) out = Tensor(A.shape());
      const std::size_t sz = A.size();
      const double* a = A.data();
      const double* b = B.data();
      double* c = out.data();
      if (n.op == OpKind::Add) for (std::size_t i = 0; i < sz; ++i) c[i] = a[i] + b[i];
      else if (n.op == OpKind::Sub) for (std::size_t i = 0; i < sz; ++i) c[i] = a[i] - b[i];
      else for (std::size_t i = 0; i < sz; ++i) c[i] = a[i] * b[i];
      break;
    }
    case OpKind::Tanh:
    case OpKind::Sigmoid: {
      const Tensor& A = in(n.a);
      if (!has_shape(out, A.shape())) out = Tensor(A.shape());
      const double* a = A.data();
      double* c = out.data();
      if (n.op == OpKind::Tanh) for (std::size_t i = 0; i < A.size(); ++i) c[i] = std::tanh(a[i]);
      else for (std::size_t i = 0; i < A.size(); ++i) c[i] = sigmoid_value(a[i]);
      break;
    }
    case OpKind::Concat: {
      const Tensor& A = in(n.a);
      const Tensor& B = in(n.b);
      if (A.rank() > 1 || B.rank() > 1) dim_error(id, "concat expects vectors or scalars");
      std::vector<double> v(A.values().begin(), A.values().end());
      v.insert(v.end(), B.values().begin(), B.values().end());
      out = Tensor::vector(std::move(v));
      break;
    }
    case OpKind::Dot: {
      const Tensor& A = in(n.a);
      const Tensor& B = in(n.b);
      if (A.rank() != 1 || A.shape() != B.shape()) dim_error(id, "dot of " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
      double s = 0.0;
      for (std::size_t i = 0; i < A.size(); ++i) s += A[i] * B[i];
      out = Tensor::scalar(s);
      break;
    }
    case OpKind::Scale: {
      const Tensor& A = in(n.a);
      if (!has_shape(out, A.shape())) out = Tensor(A.shape());
      for (std::size_t i = 0; i < A.size(); ++i) out[i] = n.scalar * A[i];
      break;
    }
    case OpKind::Sum: {
      const Tensor& A = in(n.a);
      double s = 0.0;
      for (double v : A.values()) s += v;
      out = Tensor::scalar(s);
      break;
    }
    case OpKind::Log: {
      const Tensor& A = in(n.a);
      if (!has_shape(out, A.shape())) out = Tensor(A.shape());
      for (std::size_t i = 0; i < A.size(); ++i) out[i] = std::log(std::max(A[i], n.scalar));
      break;
    }
    case OpKind::Custom: {
      out = n.custom->forward(in(n.a));
      break;
    }
  }
  if (!out.all_finite()) {
    throw NumericError("node " + std::to_string(id) + " (" + op_name(n.op) +
                       (n.custom ? " " + n.custom->label : std::string()) + ") produced a non-finite value");
  }
}

TensorMap CompGraph::backward(NodeId seed) {
  check_node(seed);
  if (!evaluated_) throw StateError("backward called before eval_forward");
  if (value(seed).size() != 1) dim_error(seed, "backward seed must be scalar, got " + shape_str(value(seed).shape()));

  // Which nodes lie on a path from some parameter.
  std::vector<char> live(seed + 1, 0);
  for (NodeId id = 0; id <= seed; ++id) {
    const Node& n = nodes_[id];
    if (n.op == OpKind::Param) live[id] = 1;
    else if (n.a != kNoNode) live[id] = live[n.a] || (n.b != kNoNode && live[n.b]);
  }

  std::vector<Tensor> grads(seed + 1);
  grads[seed] = Tensor(value(seed).shape(), 1.0);
  for (NodeId id = seed + 1; id-- > 0;) {
    if (!live[id] || grads[id].size() == 0) continue;
    const Node& n = nodes_[id];
    if (n.a == kNoNode) continue;
    auto slot = [&](NodeId p) -> Tensor* {
      if (!live[p]) return nullptr;
      if (grads[p].size() == 0) grads[p] = Tensor(value(p).shape());
      return &grads[p];
    };
    const Tensor& g = grads[id];
    Tensor* ga = slot(n.a);
    Tensor* gb = n.b != kNoNode ? slot(n.b) : nullptr;

    switch (n.op) {
      case OpKind::MatMul: {
        const Tensor& A = value(n.a);
        const Tensor& B = value(n.b);
        const MatDims da = left_dims(A);
        const MatDims db = right_dims(B);
        const std::size_t m = da.rows, k = da.cols, nn = db.cols;
        const double* gc = g.data();
        if (ga) {
          double* gA = ga->data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              const double* brow = B.data() + p * nn;
              const double* grow = gc + i * nn;
              for (std::size_t j = 0; j < nn; ++j) s += grow[j] * brow[j];
              gA[i * k + p] += s;
            }
        }
        if (gb) {
          double* gB = gb->data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = A.data()[i * k + p];
              if (aip == 0.0) continue;
              const double* grow = gc + i * nn;
              double* brow = gB + p * nn;
              for (std::size_t j = 0; j < nn; ++j) brow[j] += aip * grow[j];
            }
        }
        break;
      }
      case OpKind::Add:
        if (ga) accumulate(*ga, g);
        if (gb) accumulate(*gb, g);
        break;
      case OpKind::Sub:
        if (ga) accumulate(*ga, g);
        if (gb) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
        break;
      case OpKind::Mul: {
        const Tensor& A = value(n.a);
        const Tensor& B = value(n.b);
        if (ga) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * B[i];
        if (gb) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * A[i];
        break;
      }
      case OpKind::Tanh: {
        const Tensor& y = values_[id];
        if (ga) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case OpKind::Sigmoid: {
        const Tensor& y = values_[id];
        if (ga) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case OpKind::Concat: {
        const std::size_t na = value(n.a).size();
        if (ga) for (std::size_t i = 0; i < na; ++i) (*ga)[i] += g[i];
        if (gb) for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += g[na + i];
        break;
      }
      case OpKind::Dot: {
        const Tensor& A = value(n.a);
        const Tensor& B = value(n.b);
        const double s = g[0];
        if (ga) for (std::size_t i = 0; i < A.size(); ++i) (*ga)[i] += s * B[i];
        if (gb) for (std::size_t i = 0; i < A.size(); ++i) (*gb)[i] += s * A[i];
        break;
      }
      case OpKind::Scale:
        if (ga) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += n.scalar * g[i];
        break;
      case OpKind::Sum:
        if (ga) for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[0];
        break;
      case OpKind::Log: {
        const Tensor& A = value(n.a);
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i)
            if (A[i] > n.scalar) (*ga)[i] += g[i] / A[i];
        break;
      }
      case OpKind::Custom:
        if (ga) {
          Tensor d = n.custom->vjp(value(n.a), values_[id], g);
          if (d.shape() != ga->shape()) dim_error(id, "custom vjp returned " + shape_str(d.shape()));
          accumulate(*ga, d);
        }
        break;
      default:
        break;
    }
  }

  TensorMap out;
  for (const auto& p : params_) {
    if (p.node <= seed && grads[p.node].size() != 0) out[p.name] = std::move(grads[p.node]);
    else out[p.name] = Tensor(p.storage->shape());
  }
  return out;
}

GradCheckReport grad_check(CompGraph& graph, NodeId loss, double tolerance, const TensorMap& inputs, double h) {
  GradCheckReport report;
  report.tolerance = tolerance;
  graph.eval_forward(inputs);
  const TensorMap analytic = graph.backward(loss);

  for (const auto& slot : graph.params()) {
    Tensor& theta = *slot.storage;
    const Tensor& ga = analytic.at(slot.name);
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + h;
      graph.eval_forward(inputs);
      const double fp = graph.value(loss).item();
      theta[i] = saved - h;
      graph.eval_forward(inputs);
      const double fm = graph.value(loss).item();
      theta[i] = saved;
      const double gn = (fp - fm) / (2.0 * h);
      const double denom = std::max({std::abs(ga[i]), std::abs(gn), 1e-8});
      worst = std::max(worst, std::abs(ga[i] - gn) / denom);
    }
    report.max_rel_error[slot.name] = worst;
    report.worst = std::max(report.worst, worst);
  }
  graph.eval_forward(inputs);
  report.passed = report.worst < tolerance;
  return report;
}

}  // namespace dkts::num
