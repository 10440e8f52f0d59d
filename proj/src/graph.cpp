#include "mrb/graph.hpp"

namespace mrb {

const char* op_name(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::constant: return "constant";
    case Op::conv2d: return "conv2d";
    case Op::max_pool: return "max_pool";
    case Op::avg_pool: return "avg_pool";
    case Op::global_avg_pool: return "global_avg_pool";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::affine: return "affine";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::scale: return "scale";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::sobel_h: return "sobel_h";
    case Op::sobel_v: return "sobel_v";
    case Op::square: return "square";
    case Op::sqrt_op: return "sqrt";
    case Op::clamp: return "clamp";
    case Op::upsample2: return "upsample2";
  }
  return "?";
}

NodeId Graph::push(Node n) {
  for (NodeId a : n.args) check_arg(a);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check_arg(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
    throw GraphError("node argument " + std::to_string(id) + " does not exist");
  }
}

NodeId Graph::input(std::string name) {
  if (name.empty()) throw GraphError("input needs a name");
  for (const Node& n : nodes_) {
    if (n.op == Op::input && n.name == name) {
      throw GraphError("duplicate input name '" + name + "'");
    }
  }
  Node n;
  n.op = Op::input;
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId bias, int stride, Pad pad) {
  Node n;
  n.op = Op::conv2d;
  n.args = (bias == kNoBias) ? std::vector<NodeId>{x, w} : std::vector<NodeId>{x, w, bias};
  n.attrs.stride = stride;
  n.attrs.pad = pad;
  return push(std::move(n));
}

NodeId Graph::max_pool(NodeId x, int window) {
  Node n;
  n.op = Op::max_pool;
  n.args = {x};
  n.attrs.window = window;
  return push(std::move(n));
}

NodeId Graph::avg_pool(NodeId x, int window) {
  Node n;
  n.op = Op::avg_pool;
  n.args = {x};
  n.attrs.window = window;
  return push(std::move(n));
}

NodeId Graph::global_avg_pool(NodeId x) {
  Node n;
  n.op = Op::global_avg_pool;
  n.args = {x};
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  Node n;
  n.op = Op::relu;
  n.args = {x};
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId x) {
  Node n;
  n.op = Op::sigmoid;
  n.args = {x};
  return push(std::move(n));
}

NodeId Graph::affine(NodeId x, NodeId w, NodeId bias) {
  Node n;
  n.op = Op::affine;
  n.args = {x, w, bias};
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::add;
  n.args = {a, b};
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  Node n;
  n.op = Op::sub;
  n.args = {a, b};
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::mul;
  n.args = {a, b};
  return push(std::move(n));
}

NodeId Graph::div(NodeId a, NodeId b) {
  Node n;
  n.op = Op::div;
  n.args = {a, b};
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double a, double b) {
  Node n;
  n.op = Op::scale;
  n.args = {x};
  n.attrs.a = a;
  n.attrs.b = b;
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
  Node n;
  n.op = Op::sum;
  n.args = {x};
  return push(std::move(n));
}

NodeId Graph::mean(NodeId x) {
  Node n;
  n.op = Op::mean;
  n.args = {x};
  return push(std::move(n));
}

NodeId Graph::sobel_h(NodeId x) {
  Node n;
  n.op = Op::sobel_h;
  n.args = {x};
  return push(std::move(n));
}

NodeId Graph::sobel_v(NodeId x) {
  Node n;
  n.op = Op::sobel_v;
  n.args = {x};
  return push(std::move(n));
}

NodeId Graph::square(NodeId x) {
  Node n;
  n.op = Op::square;
  n.args = {x};
  return push(std::move(n));
}

NodeId Graph::sqrt(NodeId x, double floor) {
  Node n;
  n.op = Op::sqrt_op;
  n.args = {x};
  n.attrs.floor = floor;
  return push(std::move(n));
}

NodeId Graph::clamp(NodeId x, double lo, double hi) {
  if (!(lo < hi)) throw GraphError("clamp needs lo < hi");
  Node n;
  n.op = Op::clamp;
  n.args = {x};
  n.attrs.lo = lo;
  n.attrs.hi = hi;
  return push(std::move(n));
}

NodeId Graph::upsample2(NodeId x) {
  Node n;
  n.op = Op::upsample2;
  n.args = {x};
  return push(std::move(n));
}

void Graph::set_output(NodeId id) {
  check_arg(id);
  output_ = id;
}

NodeId Graph::output() const {
  if (output_ < 0) throw GraphError("graph has no output node");
  return output_;
}

std::vector<std::string> Graph::input_names() const {
  std::vector<std::string> names;
  for (const Node& n : nodes_) {
    if (n.op == Op::input) names.push_back(n.name);
  }
  return names;
}

}  // namespace mrb
