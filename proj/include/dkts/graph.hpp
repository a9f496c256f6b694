#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dkts/tensor.hpp"

namespace dkts::num {

using NodeId = std::size_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

enum class OpKind { Input, Constant, Param, MatMul, Add, Sub, Mul, Tanh, Sigmoid, Concat, Dot, Scale, Sum, Log, Custom };

const char* op_name(OpKind op);

/// Differentiable unary function supplied by a caller, for quantities that
/// are cheaper to evaluate directly than to spell out in primitives.
struct CustomOp {
  std::string label;
  std::function<Tensor(const Tensor& x)> forward;
  /// Vector-Jacobian product: given x, y = f(x) and dL/dy, returns dL/dx.
  std::function<Tensor(const Tensor& x, const Tensor& y, const Tensor& grad_y)> vjp;
};

using TensorMap = std::map<std::string, Tensor>;

/// Dynamically recorded computation graph with deferred evaluation.
///
/// Nodes are appended in dependency order, so the recording order is a
/// topological order. `eval_forward` evaluates every node and caches the
/// values; `backward` walks the nodes in reverse once and returns
/// d(seed)/d(param) for every registered parameter. Parameters are bound by
/// reference so the same graph can be re-evaluated after the caller changes
/// their values (finite-difference checks rely on this).
///
/// A graph is single-threaded; separate graphs share nothing mutable.
class CompGraph {
 public:
  struct ParamSlot {
    std::string name;
    Tensor* storage;
    NodeId node;
  };

  NodeId input(const std::string& name);
  NodeId constant(Tensor value);
  /// Registers a parameter; registering the same name twice returns the
  /// existing node.
  NodeId param(const std::string& name, Tensor& storage);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId concat(NodeId a, NodeId b);
  NodeId dot(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId sum(NodeId a);
  /// Natural log of max(x, floor); the gradient is zero where clamped.
  NodeId log(NodeId a, double floor = 0.0);
  NodeId custom(NodeId a, std::shared_ptr<const CustomOp> op);

  void set_output(const std::string& name, NodeId node);

  /// Binds the named inputs and evaluates all nodes. Returns the outputs
  /// registered with `set_output`.
  TensorMap eval_forward(const TensorMap& inputs = {});

  /// Reverse sweep from a scalar node. Requires a current forward pass.
  TensorMap backward(NodeId seed);

  const Tensor& value(NodeId node) const;
  std::size_t size() const { return nodes_.size(); }
  const std::vector<ParamSlot>& params() const { return params_; }
  OpKind kind(NodeId node) const { return nodes_.at(node).op; }

 private:
  struct Node {
    OpKind op;
    NodeId a = kNoNode;
    NodeId b = kNoNode;
    double scalar = 0.0;
    std::size_t slot = 0;  // input name index or param slot index
    std::shared_ptr<const CustomOp> custom;
  };

  static Node make_node(OpKind op, NodeId a, NodeId b = kNoNode, double scalar = 0.0);
  NodeId push(Node n);
  void check_node(NodeId id) const;
  void compute(NodeId id, const TensorMap& inputs);
  [[noreturn]] void dim_error(NodeId id, const std::string& what) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> values_;
  std::vector<std::string> input_names_;
  std::vector<Tensor> constants_;
  std::vector<ParamSlot> params_;
  std::map<std::string, std::size_t> param_index_;
  std::vector<std::pair<std::string, NodeId>> outputs_;
  bool evaluated_ = false;
};

struct GradCheckReport {
  /// Largest max|g_a - g_n| / max(|g_a|, |g_n|, 1e-8) over each parameter's entries.
  std::map<std::string, double> max_rel_error;
  double worst = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

/// Compares backward gradients of `loss` against central differences with
/// step `h` for every entry of every registered parameter. Parameter values
/// are restored afterwards and the graph is left freshly evaluated.
GradCheckReport grad_check(CompGraph& graph, NodeId loss, double tolerance, const TensorMap& inputs = {},
                           double h = 1e-5);

}  // namespace dkts::num
