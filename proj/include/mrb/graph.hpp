#pragma once

#include <string>
#include <vector>

#include "mrb/tensor.hpp"

namespace mrb {

enum class Op {
  input,
  constant,
  conv2d,
  max_pool,
  avg_pool,
  global_avg_pool,
  relu,
  sigmoid,
  affine,
  add,
  sub,
  mul,
  div,
  scale,
  sum,
  mean,
  sobel_h,
  sobel_v,
  square,
  sqrt_op,
  clamp,
  upsample2,
};

const char* op_name(Op op);

enum class Pad { reflect, zero, valid };

struct OpAttrs {
  int stride = 1;        // conv2d
  Pad pad = Pad::reflect;
  int window = 2;        // pooling window; stride equals window
  double a = 1.0;        // scale: a*x + b
  double b = 0.0;
  double lo = 0.0;       // clamp bounds
  double hi = 1.0;
  double floor = 1e-12;  // sqrt: y = sqrt(x + floor)
};

using NodeId = int;
inline constexpr NodeId kNoBias = -1;

struct Node {
  Op op = Op::input;
  std::vector<NodeId> args;
  OpAttrs attrs;
  std::string name;  // input nodes only
  Tensor value;      // constant nodes only
};

// Static op graph. Nodes may only reference earlier nodes, so the graph is
// acyclic by construction. Weights enter as named inputs so the same graph
// serves scoring, attacks, and training.
class Graph {
 public:
  NodeId input(std::string name);
  NodeId constant(Tensor value);

  NodeId conv2d(NodeId x, NodeId w, NodeId bias = kNoBias, int stride = 1,
                Pad pad = Pad::reflect);
  NodeId max_pool(NodeId x, int window);
  NodeId avg_pool(NodeId x, int window);
  NodeId global_avg_pool(NodeId x);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId affine(NodeId x, NodeId w, NodeId bias);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId scale(NodeId x, double a, double b);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId sobel_h(NodeId x);
  NodeId sobel_v(NodeId x);
  NodeId square(NodeId x);
  NodeId sqrt(NodeId x, double floor = 1e-12);
  NodeId clamp(NodeId x, double lo, double hi);
  NodeId upsample2(NodeId x);

  void set_output(NodeId id);
  NodeId output() const;
  bool has_output() const { return output_ >= 0; }

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(NodeId id) const { return nodes_.at(static_cast<size_t>(id)); }
  std::vector<std::string> input_names() const;

 private:
  NodeId push(Node n);
  void check_arg(NodeId id) const;

  std::vector<Node> nodes_;
  NodeId output_ = -1;
};

}  // namespace mrb
